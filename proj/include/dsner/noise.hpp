#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsner/common.hpp"
#include "dsner/rng.hpp"
#include "dsner/types.hpp"

namespace dsner {

/// Token-level annotation-quality counts for one entity type.
/// inaccurate: tokens the distant layer labels with this type whose gold
/// token label is anything else. incomplete: tokens gold-labeled with this
/// type that the distant layer leaves unlabeled.
struct NoiseTypeReport {
  long distant_tokens = 0;      // tokens distant-labeled with this type
  long wrong_tokens = 0;        // ... of those, gold label differs
  long gold_tokens = 0;         // tokens gold-labeled with this type
  long missed_tokens = 0;       // ... of those, distant label is O

  std::optional<double> inaccurate_rate() const {
    if (distant_tokens == 0) return std::nullopt;
    return 100.0 * wrong_tokens / distant_tokens;
  }
  std::optional<double> incomplete_rate() const {
    if (gold_tokens == 0) return std::nullopt;
    return 100.0 * missed_tokens / gold_tokens;
  }
};

struct NoiseReport {
  std::map<std::string, NoiseTypeReport> per_type;
  NoiseTypeReport totals;

  nlohmann::json to_json() const {
    nlohmann::json j;
    auto emit = [](const NoiseTypeReport& r) {
      nlohmann::json o;
      if (auto v = r.inaccurate_rate()) o["inaccurate_rate"] = *v;
      if (auto v = r.incomplete_rate()) o["incomplete_rate"] = *v;
      o["support"] = {{"distant_tokens", r.distant_tokens},
                      {"gold_tokens", r.gold_tokens},
                      {"wrong_tokens", r.wrong_tokens},
                      {"missed_tokens", r.missed_tokens}};
      return o;
    };
    j["per_type"] = nlohmann::json::object();
    for (const auto& [type, r] : per_type) j["per_type"][type] = emit(r);
    j["totals"] = emit(totals);
    return j;
  }
};

/// Per-token label names for one layer, kNonEntity where uncovered.
inline std::vector<std::string> token_labels(const Sentence& s,
                                             AnnotationLayer layer) {
  const auto& spans = layer_of(s, layer);
  if (!spans) throw Error("sentence lacks the requested annotation layer");
  std::vector<std::string> labels(s.tokens.size(), kNonEntity);
  for (const EntitySpan& sp : *spans)
    for (int i = sp.start - 1; i < sp.end; ++i) labels[i] = sp.label;
  return labels;
}

/// Token-level audit of a distant layer against the gold layer of a
/// parallel corpus. Both corpora must contain the same token sequences.
inline NoiseReport compute_noise_rates(const std::vector<Sentence>& gold,
                                       const std::vector<Sentence>& distant) {
  if (gold.size() != distant.size())
    throw Error("corpora are not parallel: " + std::to_string(gold.size()) +
                " vs " + std::to_string(distant.size()) + " sentences");
  NoiseReport report;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].tokens != distant[k].tokens)
      throw Error("token mismatch between layers in sentence " +
                  std::to_string(k + 1));
    const auto g = token_labels(gold[k], AnnotationLayer::kGold);
    const auto d = token_labels(distant[k], AnnotationLayer::kDistant);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (d[i] != kNonEntity) {
        auto& r = report.per_type[d[i]];
        ++r.distant_tokens;
        ++report.totals.distant_tokens;
        if (g[i] != d[i]) {
          ++r.wrong_tokens;
          ++report.totals.wrong_tokens;
        }
      }
      if (g[i] != kNonEntity) {
        auto& r = report.per_type[g[i]];
        ++r.gold_tokens;
        ++report.totals.gold_tokens;
        if (d[i] == kNonEntity) {
          ++r.missed_tokens;
          ++report.totals.missed_tokens;
        }
      }
    }
  }
  return report;
}

struct NoiseInjectionStats {
  long kept = 0;
  long flipped = 0;
  long dropped = 0;
  std::map<std::string, long> dropped_by_type;
  std::vector<std::string> warnings;
};

/// Produces a synthetic distant layer from gold annotations: each gold
/// entity is dropped with probability drop_rate scaled by its type's
/// multiplier, otherwise relabeled to a uniformly random different type
/// with probability flip_rate. Deterministic given the seed; gold layers
/// are carried through unchanged.
inline std::vector<Sentence> inject_noise(
    const std::vector<Sentence>& gold, double flip_rate, double drop_rate,
    const std::map<std::string, double>& drop_multipliers, std::uint64_t seed,
    NoiseInjectionStats* stats = nullptr) {
  if (flip_rate < 0.0 || flip_rate > 1.0 || drop_rate < 0.0 || drop_rate > 1.0)
    throw std::invalid_argument("noise rates must lie in [0, 1]");

  std::set<std::string> type_set;
  for (const Sentence& s : gold) {
    if (!s.gold_spans) throw Error("inject_noise requires gold annotations");
    for (const EntitySpan& sp : *s.gold_spans) type_set.insert(sp.label);
  }
  const std::vector<std::string> types(type_set.begin(), type_set.end());
  std::map<std::string, double> drop_prob;
  for (const std::string& t : types) {
    const auto it = drop_multipliers.find(t);
    const double p = drop_rate * (it == drop_multipliers.end() ? 1.0 : it->second);
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("effective drop rate for '" + t +
                                  "' is outside [0, 1]");
    drop_prob[t] = p;
  }

  NoiseInjectionStats local;
  NoiseInjectionStats& st = stats ? *stats : local;
  bool warned_single_type = false;
  Rng rng(seed);
  std::vector<Sentence> out = gold;
  for (Sentence& s : out) {
    std::vector<EntitySpan> distant;
    for (const EntitySpan& sp : *s.gold_spans) {
      // Fixed draw count per span keeps the stream aligned across branches.
      const double u_drop = rng.uniform();
      const double u_flip = rng.uniform();
      const std::uint64_t pick =
          types.size() > 1 ? rng.uniform_below(types.size() - 1) : 0;
      if (u_drop < drop_prob.at(sp.label)) {
        ++st.dropped;
        ++st.dropped_by_type[sp.label];
        continue;
      }
      EntitySpan noisy = sp;
      if (u_flip < flip_rate) {
        if (types.size() <= 1) {
          if (!warned_single_type) {
            st.warnings.push_back(
                "flip requested but the label set has a single entity type; "
                "spans kept with their original type");
            warned_single_type = true;
          }
        } else {
          std::size_t idx = static_cast<std::size_t>(pick);
          const auto self = static_cast<std::size_t>(
              std::find(types.begin(), types.end(), sp.label) - types.begin());
          if (idx >= self) ++idx;  // skip the original type
          noisy.label = types[idx];
          ++st.flipped;
        }
      }
      if (noisy.label == sp.label) ++st.kept;
      distant.push_back(noisy);
    }
    s.distant_spans = std::move(distant);
  }
  return out;
}

}  // namespace dsner
