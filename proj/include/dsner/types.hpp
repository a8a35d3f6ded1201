#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dsner/common.hpp"

namespace dsner {

/// Name of the non-entity label. Never appears in an EntitySpan.
inline constexpr const char* kNonEntity = "O";

/// A labeled token range. Indices are 1-based and inclusive on both ends.
struct EntitySpan {
  int start = 0;
  int end = 0;
  std::string label;

  friend bool operator==(const EntitySpan& a, const EntitySpan& b) {
    return a.start == b.start && a.end == b.end && a.label == b.label;
  }
  friend auto operator<=>(const EntitySpan& a, const EntitySpan& b) = default;
};

/// A tokenized sentence with up to two annotation layers. A disengaged
/// optional means the layer was never produced; an engaged empty vector
/// means "annotated, no entities".
struct Sentence {
  std::vector<std::string> tokens;
  std::optional<std::vector<EntitySpan>> gold_spans;
  std::optional<std::vector<EntitySpan>> distant_spans;

  int size() const { return static_cast<int>(tokens.size()); }
};

enum class AnnotationLayer { kGold, kDistant };

inline const std::optional<std::vector<EntitySpan>>& layer_of(
    const Sentence& s, AnnotationLayer layer) {
  return layer == AnnotationLayer::kGold ? s.gold_spans : s.distant_spans;
}

inline std::optional<std::vector<EntitySpan>>& layer_of(Sentence& s,
                                                        AnnotationLayer layer) {
  return layer == AnnotationLayer::kGold ? s.gold_spans : s.distant_spans;
}

/// Checks span bounds, ordering, label sanity and pairwise overlap within
/// one layer. Throws Error on the first violation.
inline void validate_spans(const std::vector<EntitySpan>& spans, int n_tokens,
                           const std::string& context = "") {
  std::vector<EntitySpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const EntitySpan& sp = sorted[i];
    if (sp.start < 1 || sp.end > n_tokens || sp.start > sp.end)
      throw Error("invalid span (" + std::to_string(sp.start) + "," +
                  std::to_string(sp.end) + ") in sentence of " +
                  std::to_string(n_tokens) + " tokens " + context);
    if (sp.label.empty() || sp.label == kNonEntity)
      throw Error("span labeled '" + sp.label + "' is not an entity span " +
                  context);
    if (i > 0 && sorted[i - 1].end >= sp.start)
      throw Error("overlapping spans at token " + std::to_string(sp.start) +
                  " " + context);
  }
}

inline void validate_sentence(const Sentence& s, const std::string& context = "") {
  if (s.tokens.empty()) throw Error("empty sentence " + context);
  if (s.gold_spans) validate_spans(*s.gold_spans, s.size(), context);
  if (s.distant_spans) validate_spans(*s.distant_spans, s.size(), context);
}

/// The closed label space L = {O} + entity types. Index 0 is always the
/// non-entity label; entity types are sorted lexicographically so ids are
/// reproducible across runs.
class LabelSet {
public:
  LabelSet() : names_{kNonEntity} {}

  explicit LabelSet(const std::set<std::string>& entity_types) : LabelSet() {
    for (const std::string& t : entity_types) {
      if (t == kNonEntity || t.empty())
        throw std::invalid_argument("illegal entity type '" + t + "'");
      names_.push_back(t);
    }
  }

  static LabelSet from_corpus(const std::vector<Sentence>& corpus,
                              AnnotationLayer layer) {
    std::set<std::string> types;
    for (const Sentence& s : corpus)
      if (const auto& spans = layer_of(s, layer))
        for (const EntitySpan& sp : *spans) types.insert(sp.label);
    return LabelSet(types);
  }

  /// Reconstructs a label set from an explicit name list (e.g. read back
  /// from a file). The list must start with the non-entity label and
  /// contain no duplicates.
  static LabelSet from_names(const std::vector<std::string>& names) {
    if (names.empty() || names.front() != kNonEntity)
      throw Error("label list must start with '" + std::string(kNonEntity) + "'");
    LabelSet ls;
    for (std::size_t i = 1; i < names.size(); ++i) {
      if (names[i].empty() || names[i] == kNonEntity ||
          std::find(ls.names_.begin(), ls.names_.end(), names[i]) != ls.names_.end())
        throw Error("illegal or duplicate label '" + names[i] + "' in label list");
      ls.names_.push_back(names[i]);
    }
    return ls;
  }

  int size() const { return static_cast<int>(names_.size()); }
  int entity_count() const { return size() - 1; }

  const std::string& name(int id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }

  /// Id of a label name, or -1 if unknown.
  int id(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
  }

  bool is_entity(int id) const { return id > 0 && id < size(); }

  friend bool operator==(const LabelSet& a, const LabelSet& b) {
    return a.names_ == b.names_;
  }

private:
  std::vector<std::string> names_;
};

}  // namespace dsner
