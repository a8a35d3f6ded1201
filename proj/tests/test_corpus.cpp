#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "dsner/conll.hpp"
#include "dsner/gazetteer.hpp"
#include "dsner/noise.hpp"
#include "dsner/spans.hpp"
#include "dsner/synthetic.hpp"
#include "dsner/types.hpp"
#include "testutil.hpp"

using namespace dsner;
using testutil::TempDir;

namespace {
void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << content;
}
}  // namespace

TEST_CASE("load_conll converts BIO columns to spans") {
  TempDir tmp;
  write_file(tmp.file("a.conll"), "EU NNP B-ORG\nrejects O\n");
  const auto corpus = load_conll(tmp.file("a.conll"));
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].tokens == std::vector<std::string>{"EU", "rejects"});
  REQUIRE(corpus[0].gold_spans.has_value());
  CHECK(*corpus[0].gold_spans == std::vector<EntitySpan>{{1, 1, "ORG"}});
}

TEST_CASE("load_conll on an empty file yields an empty corpus") {
  TempDir tmp;
  write_file(tmp.file("empty.conll"), "");
  CHECK(load_conll(tmp.file("empty.conll")).empty());
}

TEST_CASE("load_conll repairs I- after O with a warning") {
  TempDir tmp;
  write_file(tmp.file("r.conll"), "he O\nsaw O\nsmith I-PER\n");
  std::vector<ParseWarning> warnings;
  const auto corpus = load_conll(tmp.file("r.conll"), AnnotationLayer::kGold,
                                 &warnings);
  REQUIRE(corpus.size() == 1);
  CHECK(*corpus[0].gold_spans == std::vector<EntitySpan>{{3, 3, "PER"}});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].line == 3);
}

TEST_CASE("load_conll errors carry line numbers") {
  TempDir tmp;
  write_file(tmp.file("bad.conll"), "token\n");
  CHECK_THROWS_AS(load_conll(tmp.file("bad.conll")), ParseError);
  write_file(tmp.file("tag.conll"), "token X-PER\n");
  CHECK_THROWS_AS(load_conll(tmp.file("tag.conll")), ParseError);
  CHECK_THROWS_AS(load_conll(tmp.file("missing.conll")), IoError);
}

TEST_CASE("BIO round-trip is the identity on non-overlapping spans") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    const int n = 1 + static_cast<int>(rng.uniform_below(12));
    std::vector<EntitySpan> spans;
    int pos = 1;
    while (pos <= n) {
      if (rng.uniform() < 0.4) {
        const int len = 1 + static_cast<int>(rng.uniform_below(3));
        const int end = std::min(n, pos + len - 1);
        const char* types[] = {"PER", "LOC", "ORG"};
        spans.push_back({pos, end, types[rng.uniform_below(3)]});
        pos = end + 1;
      } else {
        ++pos;
      }
    }
    const auto tags = spans_to_bio(n, spans);
    std::vector<ParseWarning> warnings;
    CHECK(bio_to_spans(tags, &warnings) == spans);
    CHECK(warnings.empty());
  }
}

TEST_CASE("save_conll then load_conll round-trips a corpus") {
  TempDir tmp;
  const auto corpus = synthetic::generate(25, 3);
  save_conll(tmp.file("s.conll"), corpus, AnnotationLayer::kGold);
  const auto back = load_conll(tmp.file("s.conll"));
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].tokens == corpus[i].tokens);
    CHECK(*back[i].gold_spans == *corpus[i].gold_spans);
  }
}

TEST_CASE("gazetteer multi-type collisions resolve lexicographically") {
  Gazetteer gaz;
  gaz.add({"washington"}, "PER");
  gaz.add({"washington"}, "LOC");
  Sentence s;
  s.tokens = {"washington", "went", "home"};
  CHECK(match_gazetteer(s, gaz) == std::vector<EntitySpan>{{1, 1, "LOC"}});
}

TEST_CASE("gazetteer matching is longest-match-first") {
  Gazetteer gaz;
  gaz.add({"new", "york"}, "LOC");
  gaz.add({"new", "york", "city"}, "LOC");
  Sentence s;
  s.tokens = {"new", "york", "city"};
  CHECK(match_gazetteer(s, gaz) == std::vector<EntitySpan>{{1, 3, "LOC"}});
}

TEST_CASE("empty gazetteer matches nothing") {
  Sentence s;
  s.tokens = {"a", "b"};
  CHECK(match_gazetteer(s, Gazetteer{}).empty());
}

TEST_CASE("gazetteer matches never overlap and are reproducible") {
  Gazetteer gaz;
  gaz.add({"a"}, "PER");
  gaz.add({"a", "b"}, "LOC");
  gaz.add({"b", "c"}, "ORG");
  gaz.add({"c"}, "ORG");
  Rng rng(5);
  const char* alphabet[] = {"a", "b", "c", "d"};
  for (int it = 0; it < 100; ++it) {
    Sentence s;
    const int n = 1 + static_cast<int>(rng.uniform_below(10));
    for (int i = 0; i < n; ++i)
      s.tokens.push_back(alphabet[rng.uniform_below(4)]);
    const auto first = match_gazetteer(s, gaz);
    CHECK(first == match_gazetteer(s, gaz));
    CHECK_NOTHROW(validate_spans(first, n));
  }
}

TEST_CASE("gazetteer file loading") {
  TempDir tmp;
  write_file(tmp.file("g.tsv"), "new york\tLOC\nacme\tORG\nacme\tMISC\n");
  const Gazetteer gaz = Gazetteer::load(tmp.file("g.tsv"));
  CHECK(gaz.size() == 2);  // duplicate surface merged
  CHECK(gaz.max_surface_len() == 2);
  write_file(tmp.file("bad.tsv"), "no-tab-here\n");
  CHECK_THROWS_AS(Gazetteer::load(tmp.file("bad.tsv")), ParseError);
}

TEST_CASE("enumerate_spans fixed cases") {
  CHECK(enumerate_spans(3, 1) ==
        std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {3, 3}});
  CHECK(enumerate_spans(3, 2).size() == 5);
  CHECK(enumerate_spans(2, 10) ==
        std::vector<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 2}});
  CHECK_THROWS_AS(enumerate_spans(3, 0), std::invalid_argument);
}

TEST_CASE("enumerate_spans count matches the closed form for all n, max_len <= 20") {
  for (int n = 0; n <= 20; ++n)
    for (int max_len = 1; max_len <= 20; ++max_len) {
      std::size_t expected = 0;
      for (int k = 1; k <= std::min(max_len, n); ++k)
        expected += static_cast<std::size_t>(n - k + 1);
      const auto spans = enumerate_spans(n, max_len);
      REQUIRE(spans.size() == expected);
      // Lexicographic order and length bound.
      for (std::size_t i = 0; i < spans.size(); ++i) {
        CHECK(spans[i].second - spans[i].first + 1 <= max_len);
        if (i > 0) CHECK(spans[i - 1] < spans[i]);
      }
    }
}

TEST_CASE("compute_noise_rates is all-zero on identical layers") {
  auto gold = synthetic::generate(20, 9);
  auto distant = gold;
  for (Sentence& s : distant) {
    s.distant_spans = *s.gold_spans;
    s.gold_spans.reset();
  }
  const NoiseReport rep = compute_noise_rates(gold, distant);
  for (const auto& [type, r] : rep.per_type) {
    if (r.inaccurate_rate()) CHECK(*r.inaccurate_rate() == 0.0);
    if (r.incomplete_rate()) CHECK(*r.incomplete_rate() == 0.0);
  }
  CHECK(*rep.totals.inaccurate_rate() == 0.0);
  CHECK(*rep.totals.incomplete_rate() == 0.0);
}

TEST_CASE("compute_noise_rates on the 10-token hand-counted fixture") {
  // Gold: 4 PER tokens (1-4). Distant: tokens 1-2 PER, token 3 LOC,
  // token 4 unlabeled, token 6 (gold O) PER.
  Sentence gold_s;
  gold_s.tokens = {"t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9", "t10"};
  gold_s.gold_spans = std::vector<EntitySpan>{{1, 4, "PER"}};
  Sentence dist_s;
  dist_s.tokens = gold_s.tokens;
  dist_s.distant_spans =
      std::vector<EntitySpan>{{1, 2, "PER"}, {3, 3, "LOC"}, {6, 6, "PER"}};
  const NoiseReport rep = compute_noise_rates({gold_s}, {dist_s});
  const auto& per = rep.per_type.at("PER");
  REQUIRE(per.inaccurate_rate().has_value());
  REQUIRE(per.incomplete_rate().has_value());
  CHECK_THAT(*per.inaccurate_rate(), Catch::Matchers::WithinAbs(100.0 / 3.0, 1e-9));
  CHECK_THAT(*per.incomplete_rate(), Catch::Matchers::WithinAbs(25.0, 1e-9));
  const auto& loc = rep.per_type.at("LOC");
  CHECK_THAT(*loc.inaccurate_rate(), Catch::Matchers::WithinAbs(100.0, 1e-9));
  CHECK_FALSE(loc.incomplete_rate().has_value());  // zero gold LOC tokens
}

TEST_CASE("compute_noise_rates rejects non-parallel corpora") {
  Sentence a;
  a.tokens = {"x"};
  a.gold_spans = std::vector<EntitySpan>{};
  Sentence b;
  b.tokens = {"x", "y"};
  b.distant_spans = std::vector<EntitySpan>{};
  CHECK_THROWS_AS(compute_noise_rates({a}, {b, b}), Error);
  CHECK_THROWS_AS(compute_noise_rates({a}, {b}), Error);
}

TEST_CASE("inject_noise with zero rates is the identity on annotations") {
  const auto gold = synthetic::generate(30, 17);
  const auto noisy = inject_noise(gold, 0.0, 0.0, {}, 1);
  REQUIRE(noisy.size() == gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i)
    CHECK(*noisy[i].distant_spans == *gold[i].gold_spans);
}

TEST_CASE("inject_noise is bit-reproducible for a fixed seed") {
  const auto gold = synthetic::generate(30, 21);
  const auto a = inject_noise(gold, 0.3, 0.3, {}, 99);
  const auto b = inject_noise(gold, 0.3, 0.3, {}, 99);
  for (std::size_t i = 0; i < gold.size(); ++i)
    CHECK(*a[i].distant_spans == *b[i].distant_spans);
}

TEST_CASE("inject_noise flip on a single-type label set keeps spans and warns") {
  Sentence s;
  s.tokens = {"a", "b", "c"};
  s.gold_spans = std::vector<EntitySpan>{{1, 1, "PER"}, {3, 3, "PER"}};
  NoiseInjectionStats stats;
  const auto noisy = inject_noise({s}, 1.0, 0.0, {}, 4, &stats);
  CHECK(*noisy[0].distant_spans == *s.gold_spans);
  CHECK(stats.flipped == 0);
  CHECK(stats.kept == 2);
  REQUIRE_FALSE(stats.warnings.empty());
}

TEST_CASE("inject_noise drop multipliers hit the expected survival rates") {
  // 100 PER + 100 LOC, drop 0.3 with LOC x2: expect ~70 PER, ~40 LOC
  // surviving on average (tolerance 10% over 20 seeds).
  std::vector<Sentence> gold;
  for (int i = 0; i < 100; ++i) {
    Sentence s;
    s.tokens = {"p", "x", "l"};
    s.gold_spans = std::vector<EntitySpan>{{1, 1, "PER"}, {3, 3, "LOC"}};
    gold.push_back(std::move(s));
  }
  double per_sum = 0, loc_sum = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto noisy = inject_noise(gold, 0.0, 0.3, {{"LOC", 2.0}}, seed);
    for (const Sentence& s : noisy)
      for (const EntitySpan& sp : *s.distant_spans)
        (sp.label == "PER" ? per_sum : loc_sum) += 1.0;
  }
  CHECK_THAT(per_sum / 20.0, Catch::Matchers::WithinAbs(70.0, 7.0));
  CHECK_THAT(loc_sum / 20.0, Catch::Matchers::WithinAbs(40.0, 4.0));
}

TEST_CASE("inject_noise validates rates") {
  Sentence s;
  s.tokens = {"ann"};
  s.gold_spans = std::vector<EntitySpan>{{1, 1, "PER"}};
  const std::vector<Sentence> gold = {s};
  CHECK_THROWS_AS(inject_noise(gold, -0.1, 0.0, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(inject_noise(gold, 0.0, 1.5, {}, 1), std::invalid_argument);
  // The multiplier pushes the effective per-type rate past 1.
  CHECK_THROWS_AS(inject_noise(gold, 0.0, 0.8, {{"PER", 2.0}}, 1),
                  std::invalid_argument);
  // Multipliers for types absent from the corpus are inert.
  CHECK_NOTHROW(inject_noise(gold, 0.0, 0.8, {{"LOC", 2.0}}, 1));
}

TEST_CASE("synthetic generator is deterministic and well-formed") {
  const auto a = synthetic::generate(40, 123);
  const auto b = synthetic::generate(40, 123);
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(*a[i].gold_spans == *b[i].gold_spans);
    CHECK_NOTHROW(validate_sentence(a[i]));
    REQUIRE_FALSE(a[i].gold_spans->empty());
  }
  // All four types appear in a non-trivial sample.
  std::set<std::string> seen;
  for (const Sentence& s : a)
    for (const EntitySpan& sp : *s.gold_spans) seen.insert(sp.label);
  CHECK(seen == std::set<std::string>{"LOC", "MISC", "ORG", "PER"});
}

TEST_CASE("span and sentence validation") {
  CHECK_THROWS_AS(validate_spans({{0, 1, "PER"}}, 3), Error);
  CHECK_THROWS_AS(validate_spans({{2, 1, "PER"}}, 3), Error);
  CHECK_THROWS_AS(validate_spans({{1, 4, "PER"}}, 3), Error);
  CHECK_THROWS_AS(validate_spans({{1, 1, "O"}}, 3), Error);
  CHECK_THROWS_AS(validate_spans({{1, 2, "PER"}, {2, 3, "LOC"}}, 3), Error);
  CHECK_NOTHROW(validate_spans({{1, 1, "PER"}, {2, 3, "LOC"}}, 3));
  Sentence empty;
  CHECK_THROWS_AS(validate_sentence(empty), Error);
}

TEST_CASE("label sets are ordered, reproducible, and validated") {
  const LabelSet ls({"PER", "LOC", "ORG"});
  CHECK(ls.size() == 4);
  CHECK(ls.entity_count() == 3);
  CHECK(ls.name(0) == std::string(kNonEntity));
  CHECK(ls.name(1) == "LOC");  // lexicographic entity order
  CHECK(ls.id("PER") == 3);
  CHECK(ls.id("nope") == -1);
  CHECK(ls.is_entity(1));
  CHECK_FALSE(ls.is_entity(0));
  CHECK_THROWS_AS(LabelSet({"O"}), std::invalid_argument);
  CHECK(LabelSet::from_names({"O", "LOC", "PER"}).id("PER") == 2);
  CHECK_THROWS_AS(LabelSet::from_names({"LOC", "O"}), Error);
  CHECK_THROWS_AS(LabelSet::from_names({"O", "LOC", "LOC"}), Error);
}
