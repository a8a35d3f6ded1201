#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dsner/common.hpp"
#include "dsner/types.hpp"

namespace dsner {

/// Surface-string dictionary used for distant labeling. Entries map a token
/// sequence to the set of entity types seen for it; duplicates merge.
class Gazetteer {
public:
  void add(const std::vector<std::string>& surface, const std::string& type) {
    if (surface.empty())
      throw std::invalid_argument("gazetteer surface must be non-empty");
    if (type.empty() || type == kNonEntity)
      throw std::invalid_argument("illegal gazetteer type '" + type + "'");
    entries_[surface].insert(type);
    max_len_ = std::max(max_len_, surface.size());
  }

  /// Tab-separated file: `surface<TAB>type`, one type per line, surface
  /// tokens separated by single spaces.
  static Gazetteer load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    Gazetteer gaz;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw ParseError("expected `surface<TAB>type`", line_no);
      std::istringstream surf(line.substr(0, tab));
      std::vector<std::string> tokens;
      std::string tok;
      while (surf >> tok) tokens.push_back(tok);
      const std::string type = line.substr(tab + 1);
      if (tokens.empty() || type.empty())
        throw ParseError("empty surface or type", line_no);
      gaz.add(tokens, type);
    }
    return gaz;
  }

  const std::set<std::string>* lookup(const std::vector<std::string>& surface) const {
    auto it = entries_.find(surface);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t max_surface_len() const { return max_len_; }

private:
  std::map<std::vector<std::string>, std::set<std::string>> entries_;
  std::size_t max_len_ = 0;
};

/// Exact, case-sensitive, longest-match-first, left-to-right non-overlapping
/// matching. A surface carrying several types is resolved to the
/// lexicographically smallest type name.
inline std::vector<EntitySpan> match_gazetteer(const Sentence& sentence,
                                               const Gazetteer& gaz) {
  std::vector<EntitySpan> spans;
  const int n = sentence.size();
  int i = 0;  // 0-based scan position
  while (i < n) {
    int best_len = 0;
    const std::set<std::string>* best_types = nullptr;
    const int longest = static_cast<int>(
        std::min<std::size_t>(gaz.max_surface_len(), n - i));
    for (int len = longest; len >= 1; --len) {
      const std::vector<std::string> window(sentence.tokens.begin() + i,
                                            sentence.tokens.begin() + i + len);
      if (const auto* types = gaz.lookup(window)) {
        best_len = len;
        best_types = types;
        break;  // longest match wins
      }
    }
    if (best_types) {
      spans.push_back({i + 1, i + best_len, *best_types->begin()});
      i += best_len;
    } else {
      ++i;
    }
  }
  return spans;
}

}  // namespace dsner
