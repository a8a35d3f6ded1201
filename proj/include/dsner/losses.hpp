#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dsner/common.hpp"
#include "dsner/config.hpp"
#include "dsner/model.hpp"
#include "dsner/types.hpp"

namespace dsner {

/// Probabilities are clamped to at least this before any logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Scalar parameters of the loss components, validated as a bundle.
struct LossWeights {
  double eta = 0.9;    ///< entity-loss vs contrastive-loss weight
  double alpha = 0.5;  ///< focal scale
  double gamma = 2.0;  ///< focal exponent
  double tau = 0.05;   ///< contrastive temperature
  double q = 0.3;      ///< generalized-CE exponent
  double p = 0.5;      ///< sparse-regularization exponent

  static LossWeights from(const RunConfig& cfg) {
    LossWeights w{cfg.eta, cfg.alpha, cfg.gamma, cfg.tau, cfg.q, cfg.p};
    w.validate();
    return w;
  }

  void validate() const {
    if (eta < 0 || eta > 1) throw std::invalid_argument("eta must be in [0,1]");
    if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
    if (gamma < 0) throw std::invalid_argument("gamma must be >= 0");
    if (!(tau > 0)) throw std::invalid_argument("tau must be > 0");
    if (!(q > 0) || q > 1) throw std::invalid_argument("q must be in (0,1]");
    if (!(p > 0) || p > 1) throw std::invalid_argument("p must be in (0,1]");
  }
};

/// One collected prediction for the epoch-end memory update.
struct EpochPrediction {
  int label = 0;   ///< assigned (distant) entity label id
  VectorXd o;      ///< full label distribution at prediction time
  bool correct = false;  ///< argmax(o) == label
};

/// Epoch-indexed soft-label history. Matrix t holds, per entity label y
/// (row), the mean prediction distribution over the spans of label y that
/// were predicted correctly during epoch t; matrix 0 is the identity.
/// Rows that saw no correct prediction carry the previous epoch's row
/// forward, so every row stays a probability distribution.
class SoftLabelMemory {
 public:
  SoftLabelMemory(int n_labels, int G, double lambda)
      : n_labels_(n_labels), G_(G), lambda_(lambda) {
    if (n_labels < 2) throw std::invalid_argument("need at least two labels");
    if (G < 1) throw std::invalid_argument("G must be >= 1");
    if (lambda < 0 || lambda > 1)
      throw std::invalid_argument("lambda must be in [0,1]");
    history_.push_back(MatrixXd::Identity(n_labels, n_labels));
  }

  /// Number of completed updates; history holds epochs 0..epoch().
  int epoch() const { return static_cast<int>(history_.size()) - 1; }

  const MatrixXd& matrix(int t) const { return history_.at(t); }

  /// Appends matrix t+1 from the epoch's collected entity predictions.
  void update(const std::vector<EpochPrediction>& predictions) {
    MatrixXd next = history_.back();
    std::vector<int> counts(n_labels_, 0);
    MatrixXd sums = MatrixXd::Zero(n_labels_, n_labels_);
    for (const auto& pr : predictions) {
      if (pr.label <= 0 || pr.label >= n_labels_)
        throw std::invalid_argument("memory update requires entity labels");
      if (pr.o.size() != n_labels_)
        throw std::invalid_argument("prediction distribution has wrong length");
      if (!pr.correct) continue;
      sums.row(pr.label) += pr.o.transpose();
      ++counts[pr.label];
    }
    for (int y = 1; y < n_labels_; ++y)
      if (counts[y] > 0) next.row(y) = sums.row(y) / counts[y];
    for (int y = 0; y < n_labels_; ++y) {
      const double s = next.row(y).sum();
      if (next.row(y).minCoeff() < -1e-9 || std::abs(s - 1.0) > 1e-6)
        throw Error("soft-label memory row " + std::to_string(y) +
                    " is not a distribution (sum " + std::to_string(s) + ")");
    }
    history_.push_back(std::move(next));
  }

  /// Training target for an entity label at epoch t: the hard one-hot
  /// vector interpolated toward the mean of the previous min(G, t)
  /// memory rows. Epoch 0 has no history and trains on hard labels.
  VectorXd smoothed_target(int y, int t) const {
    if (y <= 0 || y >= n_labels_)
      throw std::invalid_argument("smoothed target is defined for entity labels only");
    // While epoch t trains, the history holds matrices 0..t-1, so t may
    // exceed the last recorded index by exactly one.
    if (t < 0 || t > epoch() + 1)
      throw std::invalid_argument("epoch " + std::to_string(t) + " not in memory");
    VectorXd hard = VectorXd::Zero(n_labels_);
    hard(y) = 1.0;
    if (t == 0) return hard;
    const int window = std::min(G_, t);
    VectorXd soft = VectorXd::Zero(n_labels_);
    for (int g = 1; g <= window; ++g) soft += history_[t - g].row(y).transpose();
    soft /= window;
    return lambda_ * hard + (1.0 - lambda_) * soft;
  }

  nlohmann::json to_json(const LabelSet& labels) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : history_) {
      nlohmann::json jm;
      for (int y = 0; y < n_labels_; ++y) {
        nlohmann::json row = nlohmann::json::array();
        for (int l = 0; l < n_labels_; ++l) row.push_back(m(y, l));
        jm[labels.name(y)] = row;
      }
      out.push_back(jm);
    }
    return out;
  }

 private:
  int n_labels_;
  int G_;
  double lambda_;
  std::vector<MatrixXd> history_;
};

/// Focal loss against a (possibly smoothed) target distribution:
///   L = -sum_l alpha * Y_l * (1 - o_l)^gamma * log(o_l)
/// with o clamped to [1e-12, 1] before the log. If `d_o` is given it
/// receives dL/do.
inline double mfl_loss(const VectorXd& o, const VectorXd& y_final, double alpha,
                       double gamma, VectorXd* d_o = nullptr) {
  if (o.size() != y_final.size())
    throw std::invalid_argument("distribution/target length mismatch");
  double loss = 0.0;
  if (d_o) *d_o = VectorXd::Zero(o.size());
  for (Eigen::Index l = 0; l < o.size(); ++l) {
    const double ol = std::min(std::max(o(l), kProbFloor), 1.0);
    const double one_minus = std::max(1.0 - o(l), 0.0);
    const double focal = std::pow(one_minus, gamma);
    loss -= alpha * y_final(l) * focal * std::log(ol);
    if (d_o) {
      double g = -alpha * y_final(l) * focal / ol;
      if (gamma > 0 && one_minus > 0)
        g += alpha * y_final(l) * gamma * std::pow(one_minus, gamma - 1.0) *
             std::log(ol);
      (*d_o)(l) = g;
    }
  }
  return loss;
}

/// Supervised contrastive loss over projected span representations with
/// cosine similarity. Anchors are the items whose label occurs at least
/// twice; each anchor averages -log(exp(cos(a,p)/tau) / sum_m exp(cos(a,m)/tau))
/// over its same-label positives p, where m ranges over the denominator
/// set (all other items, or only different-label items, per `den`);
/// anchor terms are summed. If `d_reps` is given it receives dL/dr per
/// item; if `n_anchors` is given it receives the number of anchors that
/// contributed a term (for subset-mean normalization).
inline double entity_cl_loss(const std::vector<VectorXd>& reps,
                             const std::vector<int>& labels, double tau,
                             ClDenominator den = ClDenominator::kAll,
                             std::vector<VectorXd>* d_reps = nullptr,
                             int* n_anchors = nullptr) {
  if (reps.size() != labels.size())
    throw std::invalid_argument("reps/labels length mismatch");
  if (!(tau > 0)) throw std::invalid_argument("tau must be > 0");
  const auto n = static_cast<int>(reps.size());
  if (d_reps) {
    d_reps->assign(n, VectorXd());
    for (int i = 0; i < n; ++i) (*d_reps)[i] = VectorXd::Zero(reps[i].size());
  }
  if (n_anchors) *n_anchors = 0;
  if (n < 2) return 0.0;
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    norms[i] = reps[i].norm();
    if (!(norms[i] > 0))
      throw std::invalid_argument("zero-norm representation in contrastive batch");
  }
  // Pairwise cosines.
  MatrixXd cosine = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      cosine(i, j) = cosine(j, i) = reps[i].dot(reps[j]) / (norms[i] * norms[j]);
  // dL/d cosine(i,j), accumulated symmetrically.
  MatrixXd d_cos = MatrixXd::Zero(n, n);
  double loss = 0.0;
  for (int a = 0; a < n; ++a) {
    std::vector<int> positives, denom;
    for (int m = 0; m < n; ++m) {
      if (m == a) continue;
      if (labels[m] == labels[a]) positives.push_back(m);
      if (den == ClDenominator::kAll || labels[m] != labels[a]) denom.push_back(m);
    }
    if (positives.empty() || denom.empty()) continue;
    if (n_anchors) ++*n_anchors;
    // log-sum-exp over the denominator set, stabilized.
    double mx = -std::numeric_limits<double>::infinity();
    for (int m : denom) mx = std::max(mx, cosine(a, m) / tau);
    double z = 0.0;
    for (int m : denom) z += std::exp(cosine(a, m) / tau - mx);
    const double lse = mx + std::log(z);
    double mean_pos = 0.0;
    for (int p : positives) mean_pos += cosine(a, p) / tau;
    mean_pos /= static_cast<double>(positives.size());
    loss += lse - mean_pos;
    if (d_reps) {
      const double inv_p = 1.0 / static_cast<double>(positives.size());
      for (int p : positives) d_cos(a, p) += -inv_p / tau;
      for (int m : denom) {
        const double w = std::exp(cosine(a, m) / tau - mx) / z;
        d_cos(a, m) += w / tau;
      }
    }
  }
  if (d_reps) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double g = d_cos(i, j);
        if (g == 0.0) continue;
        // d cos(i,j) / d r_i = r_j/(|r_i||r_j|) - cos * r_i/|r_i|^2
        (*d_reps)[i] += g * (reps[j] / (norms[i] * norms[j]) -
                             cosine(i, j) * reps[i] / (norms[i] * norms[i]));
        (*d_reps)[j] += g * (reps[i] / (norms[i] * norms[j]) -
                             cosine(i, j) * reps[j] / (norms[j] * norms[j]));
      }
  }
  return loss;
}

/// Noise-robust objective for spans whose distant label is the non-entity
/// class: generalized cross-entropy on the non-entity probability plus a
/// sparse-regularization p-norm term over the whole distribution,
///   L = (1 - o_O^q)/q + sum_l o_l^p.
/// Index 0 of `o` is the non-entity label. If `d_o` is given it receives
/// dL/do.
inline double gce_sr_loss(const VectorXd& o, double q, double p,
                          VectorXd* d_o = nullptr) {
  if (!(q > 0) || q > 1) throw std::invalid_argument("q must be in (0,1]");
  if (!(p > 0) || p > 1) throw std::invalid_argument("p must be in (0,1]");
  if (o.size() < 2) throw std::invalid_argument("distribution too short");
  const double o0 = std::min(std::max(o(0), 0.0), 1.0);
  double loss = (1.0 - std::pow(o0, q)) / q;
  for (Eigen::Index l = 0; l < o.size(); ++l)
    loss += std::pow(std::max(o(l), 0.0), p);
  if (d_o) {
    *d_o = VectorXd::Zero(o.size());
    for (Eigen::Index l = 0; l < o.size(); ++l)
      (*d_o)(l) = p * std::pow(std::max(o(l), kProbFloor), p - 1.0);
    (*d_o)(0) -= std::pow(std::max(o0, kProbFloor), q - 1.0);
  }
  return loss;
}

/// Soft cross-entropy -sum_l t_l log(o_l) with the usual clamp. When
/// `d_logits` is given it receives the gradient w.r.t. the logits that
/// produced `o` via softmax (the textbook o - t form).
inline double soft_cross_entropy(const VectorXd& o, const VectorXd& target,
                                 VectorXd* d_logits = nullptr) {
  if (o.size() != target.size())
    throw std::invalid_argument("distribution/target length mismatch");
  double loss = 0.0;
  for (Eigen::Index l = 0; l < o.size(); ++l)
    loss -= target(l) * std::log(std::min(std::max(o(l), kProbFloor), 1.0));
  if (d_logits) *d_logits = o - target;
  return loss;
}

/// Converts a gradient w.r.t. softmax outputs into one w.r.t. the logits:
/// d_logits = o .* (d_o - (d_o . o)).
inline VectorXd softmax_backward(const VectorXd& o, const VectorXd& d_o) {
  const double dot = d_o.dot(o);
  return o.cwiseProduct(d_o - VectorXd::Constant(o.size(), dot));
}

/// Total training objective: eta * entity loss + (1 - eta) * contrastive
/// loss + non-entity loss + augmentation loss.
inline double combine_losses(double l_mfl, double l_cl, double l_gce_sr,
                             double l_mix, double eta) {
  if (eta < 0 || eta > 1) throw std::invalid_argument("eta must be in [0,1]");
  return eta * l_mfl + (1.0 - eta) * l_cl + l_gce_sr + l_mix;
}

}  // namespace dsner
