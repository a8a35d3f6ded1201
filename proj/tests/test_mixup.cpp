#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>
#include <vector>

#include "dsner/mixup.hpp"
#include "dsner/rng.hpp"
#include "testutil.hpp"

using namespace dsner;
using testutil::rel_close;
using testutil::tiny_model;

namespace {

VectorXd vec3(double a, double b, double c) {
  VectorXd v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("entity cache is a bounded per-class FIFO") {
  EntityCache cache(3, 2);
  CHECK(cache.capacity() == 2);
  CHECK(cache.empty(1));
  VectorXd a = vec3(1, 0, 0), b = vec3(0, 1, 0), c = vec3(0, 0, 1);
  cache.push(1, a);
  cache.push(1, b);
  cache.push(1, c);  // evicts a
  CHECK(cache.size(1) == 2);
  CHECK(cache.empty(2));
  Rng rng(3);
  std::set<double> seen;
  for (int i = 0; i < 200; ++i) seen.insert(cache.sample(1, rng)(1));
  // Only b (coordinate 1 == 1) and c (coordinate 1 == 0) remain; the
  // evicted a would show up as coordinate 1 == 0 with coordinate 0 == 1.
  CHECK(seen == std::set<double>{0.0, 1.0});
  for (int i = 0; i < 200; ++i) CHECK(cache.sample(1, rng)(0) == 0.0);
}

TEST_CASE("entity cache entries are detached copies") {
  EntityCache cache(3, 4);
  VectorXd a = vec3(1, 2, 3);
  cache.push(1, a);
  a(0) = 99.0;
  Rng rng(1);
  CHECK(cache.sample(1, rng)(0) == 1.0);
}

TEST_CASE("entity cache validates labels and capacity") {
  CHECK_THROWS_AS(EntityCache(1, 4), std::invalid_argument);
  CHECK_THROWS_AS(EntityCache(3, 0), std::invalid_argument);
  EntityCache cache(3, 4);
  CHECK_THROWS_AS(cache.push(0, vec3(0, 0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(cache.push(3, vec3(0, 0, 0)), std::invalid_argument);
  Rng rng(1);
  CHECK_THROWS_AS(cache.sample(1, rng), std::invalid_argument);
  CHECK_THROWS_AS(cache.size(0), std::invalid_argument);
}

TEST_CASE("boundary selection picks uncertain non-entity spans") {
  std::vector<VectorXd> dists = {
      vec3(0.99, 0.005, 0.005),  // confident non-entity: skip
      vec3(0.45, 0.40, 0.15),    // uncertain non-entity: select, partner 1
      vec3(0.45, 0.15, 0.40),    // uncertain non-entity: select, partner 2
      vec3(0.30, 0.50, 0.20),    // predicts an entity: skip
      vec3(0.45, 0.40, 0.15),    // distant label is an entity: skip
  };
  const std::vector<int> distant = {0, 0, 0, 0, 1};
  const auto sel = select_boundary_spans(dists, distant, 0.5);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0].index == 1);
  CHECK(sel[0].partner_label == 1);
  CHECK(sel[1].index == 2);
  CHECK(sel[1].partner_label == 2);
}

TEST_CASE("boundary selection threshold is strict and zero disables it") {
  const std::vector<VectorXd> dists = {vec3(0.5, 0.3, 0.2)};
  const std::vector<int> distant = {0};
  CHECK(select_boundary_spans(dists, distant, 0.5).empty());
  CHECK(select_boundary_spans(dists, distant, 0.500001).size() == 1);
  CHECK(select_boundary_spans(dists, distant, 0.0).empty());
  // Even a maximally uncertain span is skipped at epsilon zero.
  const std::vector<VectorXd> tight = {vec3(0.34, 0.33, 0.33)};
  CHECK(select_boundary_spans(tight, distant, 0.0).empty());
}

TEST_CASE("boundary selection validates inputs") {
  const std::vector<VectorXd> dists = {vec3(0.5, 0.3, 0.2)};
  CHECK_THROWS_AS(select_boundary_spans(dists, {0, 0}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(select_boundary_spans(dists, {0}, -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(select_boundary_spans(dists, {0}, 1.5),
                  std::invalid_argument);
}

TEST_CASE("mixing keeps the non-entity side dominant") {
  Rng rng(7);
  const VectorXd r_span = vec3(1, 0, 0).head(2);
  const VectorXd r_e = vec3(0, 1, 0).head(2);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const MixedInstance mi = mix_instance(r_span, r_e, 2, 3, 0.2, rng);
    CHECK(mi.theta_prime >= 0.5);
    CHECK(mi.theta_prime <= 1.0);
    // The mix is the stated convex combination of both sides.
    CHECK_THAT(mi.r_hat(0), Catch::Matchers::WithinAbs(mi.theta_prime, 1e-12));
    CHECK_THAT(mi.r_hat(1),
               Catch::Matchers::WithinAbs(1.0 - mi.theta_prime, 1e-12));
    CHECK_THAT(mi.y_hat(0), Catch::Matchers::WithinAbs(mi.theta_prime, 1e-12));
    CHECK_THAT(mi.y_hat(2),
               Catch::Matchers::WithinAbs(1.0 - mi.theta_prime, 1e-12));
    CHECK(mi.y_hat(1) == 0.0);
    CHECK_THAT(mi.y_hat.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    lo = std::min(lo, mi.theta_prime);
    hi = std::max(hi, mi.theta_prime);
  }
  // A small concentration parameter pushes mass toward the ends, so the
  // folded draw should cover both halves of [0.5, 1].
  CHECK(lo < 0.6);
  CHECK(hi > 0.9);
}

TEST_CASE("mixed representations stay between their endpoints") {
  Rng rng(8);
  for (int it = 0; it < 50; ++it) {
    const VectorXd a = testutil::random_vector(5, rng);
    const VectorXd b = testutil::random_vector(5, rng);
    const MixedInstance mi = mix_instance(a, b, 1, 3, 0.2, rng);
    for (int i = 0; i < 5; ++i) {
      CHECK(mi.r_hat(i) >= std::min(a(i), b(i)) - 1e-12);
      CHECK(mi.r_hat(i) <= std::max(a(i), b(i)) + 1e-12);
    }
  }
}

TEST_CASE("mixing draws are seed-deterministic") {
  const VectorXd a = vec3(1, 2, 3);
  const VectorXd b = vec3(-1, 0, 1);
  Rng r1(99), r2(99);
  for (int i = 0; i < 10; ++i) {
    const auto m1 = mix_instance(a, b, 1, 3, 0.2, r1);
    const auto m2 = mix_instance(a, b, 1, 3, 0.2, r2);
    CHECK(m1.theta_prime == m2.theta_prime);
  }
}

TEST_CASE("mix instance validates its inputs") {
  Rng rng(1);
  const VectorXd a = vec3(1, 0, 0);
  CHECK_THROWS_AS(mix_instance(a, a, 1, 3, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(mix_instance(a, a, 0, 3, 0.2, rng), std::invalid_argument);
  CHECK_THROWS_AS(mix_instance(a, a, 3, 3, 0.2, rng), std::invalid_argument);
  CHECK_THROWS_AS(mix_instance(a, vec3(1, 0, 0).head(2), 1, 3, 0.2, rng),
                  std::invalid_argument);
}

TEST_CASE("augmentation loss of an empty batch is zero") {
  const Model m = tiny_model();
  CHECK(mixup_loss({}, m) == 0.0);
  ModelParams grads = m.params().zeros_like();
  std::vector<VectorXd> d_r;
  CHECK(mixup_loss_backward({}, m, 1.0, grads, d_r) == 0.0);
}

TEST_CASE("augmentation loss hand value under a pinned classifier") {
  // Zero scorer with a bias that suppresses the last two labels leaves a
  // fifty-fifty split over the first two: the soft cross-entropy of any
  // target supported on those two is exactly log 2.
  Model m = tiny_model();  // labels O, LOC, ORG, PER
  m.params().cls.setZero();
  m.params().cls_bias.setZero();
  m.params().cls_bias(2, 0) = -50.0;
  m.params().cls_bias(3, 0) = -50.0;
  MixedInstance mi;
  mi.r_hat = VectorXd::Ones(m.d_r());
  mi.y_hat = VectorXd::Zero(4);
  mi.y_hat(0) = 0.7;
  mi.y_hat(1) = 0.3;
  mi.theta_prime = 0.7;
  CHECK_THAT(mixup_loss({mi}, m),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-9));
}

TEST_CASE("augmentation loss is the mean over instances") {
  const Model m = tiny_model(17);
  Rng rng(18);
  std::vector<MixedInstance> instances(3);
  double expected = 0.0;
  for (auto& mi : instances) {
    mi.r_hat = testutil::random_vector(m.d_r(), rng, 0.8);
    mi.y_hat = testutil::random_distribution(4, rng);
    expected += soft_cross_entropy(m.classify(mi.r_hat), mi.y_hat);
  }
  expected /= 3.0;
  CHECK_THAT(mixup_loss(instances, m),
             Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("augmentation backward matches finite differences") {
  Model m = tiny_model(23);
  Rng rng(24);
  const double weight = 0.6;
  // Instances built from explicit span/partner pairs so the chain into
  // the span representation can be re-evaluated under perturbation.
  const int n_spans = 3;
  std::vector<VectorXd> r_span, r_e;
  std::vector<double> theta;
  std::vector<int> partner = {1, 3, 2};
  for (int i = 0; i < n_spans; ++i) {
    r_span.push_back(testutil::random_vector(m.d_r(), rng, 0.7));
    r_e.push_back(testutil::random_vector(m.d_r(), rng, 0.7));
    theta.push_back(rng.uniform(0.5, 1.0));
  }
  const auto build = [&]() {
    std::vector<MixedInstance> out(n_spans);
    for (int i = 0; i < n_spans; ++i) {
      out[i].theta_prime = theta[i];
      out[i].r_hat = theta[i] * r_span[i] + (1.0 - theta[i]) * r_e[i];
      out[i].y_hat = VectorXd::Zero(4);
      out[i].y_hat(0) = theta[i];
      out[i].y_hat(partner[i]) = 1.0 - theta[i];
      out[i].span_index = i;
    }
    return out;
  };
  const auto weighted_loss = [&]() { return weight * mixup_loss(build(), m); };

  ModelParams grads = m.params().zeros_like();
  std::vector<VectorXd> d_r_span(n_spans);
  const double ret = mixup_loss_backward(build(), m, weight, grads, d_r_span);
  CHECK_THAT(ret, Catch::Matchers::WithinAbs(mixup_loss(build(), m), 1e-12));

  // Classifier parameters.
  for (int probe = 0; probe < 6; ++probe) {
    const auto idx = static_cast<Eigen::Index>(
        rng.uniform_below(static_cast<std::uint64_t>(m.params().cls.size())));
    const double numeric =
        testutil::central_diff(m.params().cls.data()[idx], weighted_loss);
    CHECK(rel_close(grads.cls.data()[idx], numeric));
  }
  for (int i = 0; i < 4; ++i) {
    const double numeric =
        testutil::central_diff(m.params().cls_bias(i, 0), weighted_loss);
    CHECK(rel_close(grads.cls_bias(i, 0), numeric));
  }
  // Span representations: the partner side is held constant, so the only
  // path into the loss is the theta'-scaled chain.
  for (int i = 0; i < n_spans; ++i) {
    REQUIRE(d_r_span[i].size() == m.d_r());
    for (int probe = 0; probe < 3; ++probe) {
      const int c = static_cast<int>(rng.uniform_below(m.d_r()));
      const double numeric =
          testutil::central_diff(r_span[i](c), weighted_loss);
      CHECK(rel_close(d_r_span[i](c), numeric));
    }
  }
  // Untouched parameter blocks stay zero.
  CHECK(grads.proj.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.embed.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("augmentation gradients scale linearly with the weight") {
  Model m = tiny_model(29);
  Rng rng(30);
  std::vector<MixedInstance> instances(2);
  for (int i = 0; i < 2; ++i) {
    instances[i].r_hat = testutil::random_vector(m.d_r(), rng, 0.5);
    instances[i].y_hat = testutil::random_distribution(4, rng);
    instances[i].theta_prime = 0.8;
    instances[i].span_index = i;
  }
  ModelParams g1 = m.params().zeros_like();
  ModelParams g2 = m.params().zeros_like();
  std::vector<VectorXd> d1(2), d2(2);
  const double l1 = mixup_loss_backward(instances, m, 1.0, g1, d1);
  const double l2 = mixup_loss_backward(instances, m, 2.0, g2, d2);
  CHECK(l1 == l2);  // the return value is the unweighted mean
  CHECK((g2.cls - 2.0 * g1.cls).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d2[0] - 2.0 * d1[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("instances without a batch span leave the span gradients alone") {
  Model m = tiny_model(31);
  Rng rng(32);
  MixedInstance mi;
  mi.r_hat = testutil::random_vector(m.d_r(), rng);
  mi.y_hat = testutil::random_distribution(4, rng);
  mi.span_index = -1;
  ModelParams grads = m.params().zeros_like();
  std::vector<VectorXd> d_r_span(2);
  mixup_loss_backward({mi}, m, 1.0, grads, d_r_span);
  CHECK(d_r_span[0].size() == 0);
  CHECK(d_r_span[1].size() == 0);
  CHECK(grads.cls.cwiseAbs().maxCoeff() > 0.0);
}
