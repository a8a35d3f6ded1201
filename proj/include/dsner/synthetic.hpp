#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsner/rng.hpp"
#include "dsner/types.hpp"

namespace dsner {

/// Rule-based generator of gold-annotated sentences over four entity types.
/// Entities are drawn from type-specific lexicons and always carry a
/// type-indicative cue word directly before them (and sometimes after), so
/// a narrow-context encoder can learn the task. A slice of surface tokens
/// is shared between two types and only the cue disambiguates them, which
/// reproduces the ambiguity that context-free dictionary matching suffers
/// from.
namespace synthetic {

inline const std::vector<std::string>& entity_types() {
  static const std::vector<std::string> types = {"LOC", "MISC", "ORG", "PER"};
  return types;
}

namespace detail {

inline const std::vector<std::string>& pool(const std::string& type) {
  static const std::vector<std::string> per = {
      "alba",  "boris", "cheng", "dara",  "emil",  "freya", "gerda", "hanno",
      "ivo",   "jude",  "kira",  "liam",  "mona",  "nils",  "oren",  "pia",
      "quin",  "rosa",  "sten",  "tova",  "ulric", "vera",  "wim",   "yara"};
  static const std::vector<std::string> loc = {
      "arden",    "brookfield", "calder",  "dunmore", "eastvale", "fernhill",
      "gorseton", "harwick",    "inlet",   "jarrow",  "kelso",    "lundy",
      "mersea",   "norwick",    "oxcroft", "pelham",  "quarry",   "rydal",
      "selby",    "thornby",    "uphall",  "verwood", "whitland", "yarrow"};
  static const std::vector<std::string> org = {
      "acme",   "borealis", "cintra",  "dynacor", "ellington", "fabrik",
      "gantry", "helix",    "ionic",   "jetwork", "kestrel",   "lumen",
      "metrix", "nimbus",   "orbital", "pylon",   "quanta",    "rotor",
      "stellar", "tritek",  "unara",   "vantor",  "wexley",    "zephyr"};
  static const std::vector<std::string> misc = {
      "aurora",   "biennale", "carnival", "derby",    "eclipse",  "festivale",
      "gala",     "harvest",  "interlude", "jubilee", "kermis",   "lumiere",
      "marathon", "nocturne", "olympiad", "pageant",  "quadrille", "regatta",
      "solstice", "tourney",  "uprising", "vigil",    "waltz",    "yuletide"};
  if (type == "PER") return per;
  if (type == "LOC") return loc;
  if (type == "ORG") return org;
  return misc;
}

/// Surfaces legal for two types; only context tells them apart.
inline const std::vector<std::string>& ambiguous(const std::string& type) {
  static const std::vector<std::string> per_loc = {"avon", "clifton", "logan",
                                                   "sydney", "florence"};
  static const std::vector<std::string> per_org = {"ford", "morgan", "hudson"};
  static const std::vector<std::string> loc_org = {"phoenix", "delta", "vista"};
  static const std::vector<std::string> misc_org = {"apex", "zenith"};
  static auto concat = [](const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  };
  static const std::vector<std::string> per = concat(per_loc, per_org);
  static const std::vector<std::string> loc = concat(per_loc, loc_org);
  static const std::vector<std::string> org = concat(per_org, concat(loc_org, misc_org));
  static const std::vector<std::string> misc = misc_org;
  if (type == "PER") return per;
  if (type == "LOC") return loc;
  if (type == "ORG") return org;
  return misc;
}

inline const std::vector<std::string>& pre_cues(const std::string& type) {
  static const std::vector<std::string> per = {"mr", "mrs", "dr", "chief"};
  static const std::vector<std::string> loc = {"in", "near", "from", "toward"};
  static const std::vector<std::string> org = {"at", "with", "by", "under"};
  static const std::vector<std::string> misc = {"during", "ahead", "since",
                                                "through"};
  if (type == "PER") return per;
  if (type == "LOC") return loc;
  if (type == "ORG") return org;
  return misc;
}

inline const std::vector<std::string>& post_cues(const std::string& type) {
  static const std::vector<std::string> per = {"said", "told", "argued",
                                               "smiled"};
  static const std::vector<std::string> loc = {"valley", "district", "coast",
                                               "border"};
  static const std::vector<std::string> org = {"corp", "board", "staff",
                                               "shares"};
  static const std::vector<std::string> misc = {"opened", "returned", "tickets",
                                                "banner"};
  if (type == "PER") return per;
  if (type == "LOC") return loc;
  if (type == "ORG") return org;
  return misc;
}

inline const std::vector<std::string>& fillers() {
  static const std::vector<std::string> words = {
      "the",  "and",  "of",    "to",    "was",  "were", "has",   "had",
      "on",   "that", "again", "still", "also", "very", "quite", "now",
      "then", "some", "many",  "few",   "a",    "note", "plan",  "deal",
      "talk", "week", "day",   "year",  "time", "while"};
  return words;
}

template <typename Seq>
const std::string& pick(const Seq& seq, Rng& rng) {
  return seq[rng.uniform_below(seq.size())];
}

}  // namespace detail

/// Generates `n_sentences` gold-annotated sentences, deterministic in seed.
inline std::vector<Sentence> generate(int n_sentences, std::uint64_t seed) {
  using namespace detail;
  Rng rng(seed);
  std::vector<Sentence> corpus;
  corpus.reserve(n_sentences);
  for (int k = 0; k < n_sentences; ++k) {
    Sentence s;
    std::vector<EntitySpan> spans;
    const int n_entities = static_cast<int>(1 + rng.uniform_below(3));
    auto filler_run = [&](int lo, int hi) {
      const long n = rng.uniform_int(lo, hi);
      for (long i = 0; i < n; ++i) s.tokens.push_back(pick(fillers(), rng));
    };
    filler_run(1, 3);
    for (int e = 0; e < n_entities; ++e) {
      const std::string& type = entity_types()[rng.uniform_below(4)];
      s.tokens.push_back(pick(pre_cues(type), rng));
      const double len_u = rng.uniform();
      const int len = len_u < 0.5 ? 1 : (len_u < 0.85 ? 2 : 3);
      const int start = static_cast<int>(s.tokens.size()) + 1;
      for (int t = 0; t < len; ++t) {
        const bool amb = t == 0 && !ambiguous(type).empty() && rng.uniform() < 0.25;
        s.tokens.push_back(amb ? pick(ambiguous(type), rng)
                               : pick(pool(type), rng));
      }
      spans.push_back({start, start + len - 1, type});
      if (rng.uniform() < 0.5) s.tokens.push_back(pick(post_cues(type), rng));
      filler_run(1, 4);
    }
    filler_run(0, 2);
    s.gold_spans = std::move(spans);
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace synthetic
}  // namespace dsner
