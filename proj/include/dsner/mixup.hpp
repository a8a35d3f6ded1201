#pragma once

#include <Eigen/Dense>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dsner/losses.hpp"
#include "dsner/model.hpp"
#include "dsner/rng.hpp"

namespace dsner {

/// Per-class bounded FIFO of recent entity representations, used to draw
/// mixing partners. Entries are detached value copies: nothing that goes
/// in ever receives gradient. Index 0 (the non-entity label) is unused.
class EntityCache {
 public:
  EntityCache(int n_labels, int capacity)
      : capacity_(capacity), slots_(n_labels) {
    if (n_labels < 2) throw std::invalid_argument("need at least two labels");
    if (capacity < 1) throw std::invalid_argument("cache capacity must be >= 1");
  }

  void push(int label, VectorXd r) {
    auto& q = slot(label);
    q.push_back(std::move(r));
    if (static_cast<int>(q.size()) > capacity_) q.pop_front();
  }

  int size(int label) const { return static_cast<int>(slot(label).size()); }
  bool empty(int label) const { return slot(label).empty(); }
  int capacity() const { return capacity_; }

  /// Uniformly random cached representation for the class.
  const VectorXd& sample(int label, Rng& rng) const {
    const auto& q = slot(label);
    if (q.empty()) throw std::invalid_argument("sampling from empty cache slot");
    return q[rng.uniform_below(q.size())];
  }

 private:
  const std::deque<VectorXd>& slot(int label) const {
    if (label <= 0 || label >= static_cast<int>(slots_.size()))
      throw std::invalid_argument("cache slots exist for entity labels only");
    return slots_[label];
  }
  std::deque<VectorXd>& slot(int label) {
    if (label <= 0 || label >= static_cast<int>(slots_.size()))
      throw std::invalid_argument("cache slots exist for entity labels only");
    return slots_[label];
  }

  int capacity_;
  std::vector<std::deque<VectorXd>> slots_;
};

/// A span chosen for augmentation: its index in the batch's span list and
/// the entity class whose cached representation it will be mixed with.
struct BoundarySelection {
  int index = 0;
  int partner_label = 0;
};

/// Picks the spans sitting near the decision boundary: distant label is
/// the non-entity class, the model also predicts non-entity, yet with
/// confidence below `epsilon`. The partner class is the highest-scoring
/// entity label. `epsilon` = 0 disables augmentation (selects nothing).
inline std::vector<BoundarySelection> select_boundary_spans(
    const std::vector<VectorXd>& distributions,
    const std::vector<int>& distant_labels, double epsilon) {
  if (distributions.size() != distant_labels.size())
    throw std::invalid_argument("distributions/labels length mismatch");
  if (epsilon < 0 || epsilon > 1)
    throw std::invalid_argument("epsilon must be in [0,1]");
  std::vector<BoundarySelection> out;
  for (std::size_t i = 0; i < distributions.size(); ++i) {
    if (distant_labels[i] != 0) continue;
    const VectorXd& o = distributions[i];
    Eigen::Index argmax = 0;
    o.maxCoeff(&argmax);
    if (argmax != 0) continue;
    if (!(o(0) < epsilon)) continue;
    Eigen::Index best_entity = 1;
    o.tail(o.size() - 1).maxCoeff(&best_entity);
    out.push_back({static_cast<int>(i), static_cast<int>(best_entity) + 1});
  }
  return out;
}

/// An augmented training point: a convex combination of a boundary span's
/// representation and an entity partner, labeled with the same mix of
/// their one-hot labels. `theta_prime` >= 0.5 keeps the non-entity side
/// dominant.
struct MixedInstance {
  VectorXd r_hat;
  VectorXd y_hat;
  double theta_prime = 1.0;
  int span_index = -1;  ///< batch span the gradient chains back into
};

/// Draws theta ~ Beta(alpha', alpha'), folds it to theta' = max(theta,
/// 1-theta), and mixes representation and label. The partner `r_e` is
/// treated as a constant.
inline MixedInstance mix_instance(const VectorXd& r_span, const VectorXd& r_e,
                                  int entity_label, int n_labels,
                                  double alpha_prime, Rng& rng) {
  if (!(alpha_prime > 0)) throw std::invalid_argument("alpha_prime must be > 0");
  if (entity_label <= 0 || entity_label >= n_labels)
    throw std::invalid_argument("mix partner must be an entity label");
  if (r_span.size() != r_e.size())
    throw std::invalid_argument("representation dimension mismatch");
  const double theta = rng.beta(alpha_prime, alpha_prime);
  MixedInstance mi;
  mi.theta_prime = std::max(theta, 1.0 - theta);
  mi.r_hat = mi.theta_prime * r_span + (1.0 - mi.theta_prime) * r_e;
  mi.y_hat = VectorXd::Zero(n_labels);
  mi.y_hat(0) = mi.theta_prime;
  mi.y_hat(entity_label) = 1.0 - mi.theta_prime;
  return mi;
}

/// Mean soft cross-entropy of the augmented instances under the model's
/// classifier; 0 when there are none.
inline double mixup_loss(const std::vector<MixedInstance>& instances,
                         const Model& model) {
  if (instances.empty()) return 0.0;
  double total = 0.0;
  for (const auto& mi : instances)
    total += soft_cross_entropy(model.classify(mi.r_hat), mi.y_hat);
  return total / static_cast<double>(instances.size());
}

/// Gradient-carrying version: accumulates classifier gradients for
/// `weight * mean loss` into `grads` and adds each instance's
/// contribution to `d_r_span[span_index]` (the theta'-scaled chain into
/// the boundary span's representation). Partner representations receive
/// no gradient.
inline double mixup_loss_backward(const std::vector<MixedInstance>& instances,
                                  const Model& model, double weight,
                                  ModelParams& grads,
                                  std::vector<VectorXd>& d_r_span) {
  if (instances.empty()) return 0.0;
  const double scale = weight / static_cast<double>(instances.size());
  double total = 0.0;
  for (const auto& mi : instances) {
    VectorXd d_logits;
    total += soft_cross_entropy(model.classify(mi.r_hat), mi.y_hat, &d_logits);
    d_logits *= scale;
    const VectorXd d_r_hat = model.classifier_backward(d_logits, mi.r_hat, grads);
    if (mi.span_index >= 0) {
      auto& slot = d_r_span.at(mi.span_index);
      if (slot.size() == 0) slot = VectorXd::Zero(d_r_hat.size());
      slot += mi.theta_prime * d_r_hat;
    }
  }
  return total / static_cast<double>(instances.size());
}

}  // namespace dsner
