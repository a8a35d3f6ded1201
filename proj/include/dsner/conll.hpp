#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dsner/common.hpp"
#include "dsner/types.hpp"

namespace dsner {

struct ParseWarning {
  long line = 0;
  std::string message;
};

/// Converts a BIO (or IO) tag sequence into entity spans. An I-X tag that
/// does not continue a span of type X opens a new span; the repair is
/// reported through `warnings`. `first_line` is the file line of tags[0],
/// used only for warning messages.
inline std::vector<EntitySpan> bio_to_spans(
    const std::vector<std::string>& tags,
    std::vector<ParseWarning>* warnings = nullptr, long first_line = 1) {
  std::vector<EntitySpan> spans;
  std::string open_type;
  int open_start = 0;
  auto close = [&](int end) {
    if (!open_type.empty()) {
      spans.push_back({open_start, end, open_type});
      open_type.clear();
    }
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[i];
    const long line = first_line + i;
    if (tag == kNonEntity) {
      close(i);
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-')
      throw ParseError("unrecognized tag '" + tag + "'", line);
    const std::string type = tag.substr(2);
    if (type == kNonEntity)
      throw ParseError("tag '" + tag + "' uses the non-entity label as a type",
                       line);
    if (tag[0] == 'B') {
      close(i);
      open_type = type;
      open_start = i + 1;
    } else {  // I-
      if (open_type == type) continue;
      if (warnings)
        warnings->push_back(
            {line, "I-" + type + " does not continue a span; treated as B-" +
                       type});
      close(i);
      open_type = type;
      open_start = i + 1;
    }
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

/// Inverse of bio_to_spans for non-overlapping spans.
inline std::vector<std::string> spans_to_bio(int n_tokens,
                                             const std::vector<EntitySpan>& spans) {
  validate_spans(spans, n_tokens);
  std::vector<std::string> tags(n_tokens, kNonEntity);
  for (const EntitySpan& sp : spans) {
    tags[sp.start - 1] = "B-" + sp.label;
    for (int i = sp.start; i < sp.end; ++i) tags[i] = "I-" + sp.label;
  }
  return tags;
}

/// Loads a CoNLL column file: one `token<whitespace>tag` pair per line,
/// blank lines between sentences, UTF-8. Extra middle columns (as in the
/// 4-column CoNLL 2003 distribution) are ignored: the first field is the
/// token, the last is the tag. Tags land in the requested layer.
inline std::vector<Sentence> load_conll(
    const std::string& path, AnnotationLayer layer = AnnotationLayer::kGold,
    std::vector<ParseWarning>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Sentence> corpus;
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  long line_no = 0;
  long sentence_first_line = 1;
  std::string line;
  auto flush = [&]() {
    if (tokens.empty()) return;
    Sentence s;
    s.tokens = std::move(tokens);
    layer_of(s, layer) = bio_to_spans(tags, warnings, sentence_first_line);
    corpus.push_back(std::move(s));
    tokens = {};
    tags.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token, field, tag;
    if (!(fields >> token)) {  // blank line: sentence boundary
      flush();
      continue;
    }
    while (fields >> field) tag = field;
    if (tag.empty()) throw ParseError("missing tag after '" + token + "'", line_no);
    if (tokens.empty()) sentence_first_line = line_no;
    tokens.push_back(token);
    tags.push_back(tag);
  }
  flush();
  return corpus;
}

/// Writes one annotation layer of a corpus back to CoNLL columns.
inline void save_conll(const std::string& path,
                       const std::vector<Sentence>& corpus,
                       AnnotationLayer layer) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const Sentence& s : corpus) {
    const auto& spans = layer_of(s, layer);
    if (!spans)
      throw Error("sentence lacks the annotation layer selected for writing");
    const std::vector<std::string> tags = spans_to_bio(s.size(), *spans);
    for (int i = 0; i < s.size(); ++i)
      out << s.tokens[i] << ' ' << tags[i] << '\n';
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace dsner
