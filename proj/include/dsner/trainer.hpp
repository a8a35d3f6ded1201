#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsner/checkpoint.hpp"
#include "dsner/config.hpp"
#include "dsner/knn.hpp"
#include "dsner/losses.hpp"
#include "dsner/mixup.hpp"
#include "dsner/model.hpp"
#include "dsner/rng.hpp"
#include "dsner/spans.hpp"
#include "dsner/types.hpp"

namespace dsner {

// ---------------------------------------------------------------------------
// Span candidate labeling and routing
// ---------------------------------------------------------------------------

/// Label id per candidate: the distant span's label where (start, end)
/// matches exactly, the non-entity id otherwise.
inline std::vector<int> assign_distant_labels(
    const Sentence& s, const LabelSet& labels,
    const std::vector<std::pair<int, int>>& candidates) {
  std::map<std::pair<int, int>, int> by_pos;
  if (s.distant_spans)
    for (const EntitySpan& sp : *s.distant_spans) {
      const int id = labels.id(sp.label);
      if (id < 0) throw Error("distant label '" + sp.label + "' not in label set");
      by_pos[{sp.start, sp.end}] = id;
    }
  std::vector<int> out(candidates.size(), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto it = by_pos.find(candidates[i]);
    if (it != by_pos.end()) out[i] = it->second;
  }
  return out;
}

/// Splits candidate indices into the entity-labeled route and the
/// non-entity route. Every index lands in exactly one of the two.
inline std::pair<std::vector<int>, std::vector<int>> partition_by_label(
    const std::vector<int>& assigned) {
  std::pair<std::vector<int>, std::vector<int>> out;
  for (std::size_t i = 0; i < assigned.size(); ++i)
    (assigned[i] != 0 ? out.first : out.second).push_back(static_cast<int>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Decoding and evaluation
// ---------------------------------------------------------------------------

/// Greedy non-overlap decoding: score every candidate span, keep those
/// whose final distribution favors an entity label, accept them in order
/// of descending probability (ties: earlier start, earlier end, lower
/// label id), and drop any span that overlaps an accepted one. When a
/// datastore is given, each span's distribution is first interpolated
/// with the neighbour vote.
inline std::vector<EntitySpan> decode(const Model& model,
                                      const std::vector<std::string>& tokens,
                                      int max_span_len,
                                      const DataStore* store = nullptr,
                                      double mu = 0.0, int K = 1,
                                      bool weighted = false) {
  struct Scored {
    double prob;
    int start, end, label;
  };
  const SentenceForward f =
      model.forward(tokens, enumerate_spans(static_cast<int>(tokens.size()),
                                            max_span_len));
  std::vector<Scored> entity_like;
  for (std::size_t k = 0; k < f.spans.size(); ++k) {
    VectorXd o = f.o[k];
    if (store) {
      const KnnVote vote = knn_vote(*store, f.r[k], K, weighted);
      o = interpolate_distribution(o, vote.o_knn, mu);
    }
    Eigen::Index argmax = 0;
    const double prob = o.maxCoeff(&argmax);
    if (argmax == 0) continue;
    entity_like.push_back({prob, f.spans[k].first, f.spans[k].second,
                           static_cast<int>(argmax)});
  }
  std::sort(entity_like.begin(), entity_like.end(),
            [](const Scored& a, const Scored& b) {
              if (a.prob != b.prob) return a.prob > b.prob;
              if (a.start != b.start) return a.start < b.start;
              if (a.end != b.end) return a.end < b.end;
              return a.label < b.label;
            });
  std::vector<Scored> accepted;
  for (const Scored& c : entity_like) {
    bool overlaps = false;
    for (const Scored& a : accepted)
      if (!(c.end < a.start || c.start > a.end)) {
        overlaps = true;
        break;
      }
    if (!overlaps) accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end(), [](const Scored& a, const Scored& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  std::vector<EntitySpan> out;
  out.reserve(accepted.size());
  for (const Scored& a : accepted)
    out.push_back({a.start, a.end, model.labels().name(a.label)});
  return out;
}

/// Entity-level exact-match scores, in percent.
struct TypeMetrics {
  int tp = 0, fp = 0, fn = 0;
  int support = 0;  ///< gold span count
  double precision = 0, recall = 0, f1 = 0;
};

struct EvalResult {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
  std::map<std::string, TypeMetrics> per_type;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
    nlohmann::json types = nlohmann::json::object();
    for (const auto& [name, m] : per_type)
      types[name] = {{"precision", m.precision}, {"recall", m.recall},
                     {"f1", m.f1},               {"tp", m.tp},
                     {"fp", m.fp},               {"fn", m.fn},
                     {"support", m.support}};
    j["per_type"] = types;
    return j;
  }
};

namespace detail {
inline void finish_prf(int tp, int fp, int fn, double& prec, double& rec,
                       double& f1) {
  prec = tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0;
  rec = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
  f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
}
}  // namespace detail

/// Micro-averaged precision/recall/F1 over parallel per-sentence span
/// lists, exact (start, end, label) matching, plus a per-type breakdown.
inline EvalResult evaluate_spans(
    const std::vector<std::vector<EntitySpan>>& predicted,
    const std::vector<std::vector<EntitySpan>>& gold) {
  if (predicted.size() != gold.size())
    throw std::invalid_argument("prediction/gold sentence count mismatch");
  EvalResult res;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    std::set<EntitySpan> gold_set(gold[s].begin(), gold[s].end());
    std::set<EntitySpan> pred_set(predicted[s].begin(), predicted[s].end());
    for (const EntitySpan& g : gold_set) {
      auto& t = res.per_type[g.label];
      ++t.support;
      if (pred_set.count(g)) {
        ++res.tp;
        ++t.tp;
      } else {
        ++res.fn;
        ++t.fn;
      }
    }
    for (const EntitySpan& p : pred_set)
      if (!gold_set.count(p)) {
        ++res.fp;
        ++res.per_type[p.label].fp;
      }
  }
  detail::finish_prf(res.tp, res.fp, res.fn, res.precision, res.recall, res.f1);
  for (auto& [name, t] : res.per_type)
    detail::finish_prf(t.tp, t.fp, t.fn, t.precision, t.recall, t.f1);
  return res;
}

/// Decodes every sentence and scores against the gold layer. Every
/// sentence must carry gold annotation.
inline EvalResult evaluate(const Model& model, const std::vector<Sentence>& corpus,
                           int max_span_len, const DataStore* store = nullptr,
                           double mu = 0.0, int K = 1, bool weighted = false) {
  if (corpus.empty()) throw Error("evaluation corpus is empty");
  std::vector<std::vector<EntitySpan>> predicted, gold;
  predicted.reserve(corpus.size());
  gold.reserve(corpus.size());
  for (const Sentence& s : corpus) {
    if (!s.gold_spans)
      throw Error("evaluation corpus has a sentence without gold annotation");
    gold.push_back(*s.gold_spans);
    predicted.push_back(decode(model, s.tokens, max_span_len, store, mu, K, weighted));
  }
  return evaluate_spans(predicted, gold);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(double lr, const std::vector<MatrixXd*>& shapes) : lr_(lr) {
    m_.reserve(shapes.size());
    v_.reserve(shapes.size());
    for (const MatrixXd* p : shapes) {
      m_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<MatrixXd*>& params,
            const std::vector<MatrixXd*>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("optimizer tensor list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * (*grads[i]);
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i]->cwiseProduct(*grads[i]);
      const MatrixXd m_hat = m_[i] / bc1;
      const MatrixXd v_hat = v_[i] / bc2;
      params[i]->noalias() -=
          lr_ * (m_hat.array() / (v_hat.array().sqrt() + kEps)).matrix();
    }
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  double lr_;
  long t_ = 0;
  std::vector<MatrixXd> m_, v_;
};

/// Scales gradients in place so their global L2 norm is at most
/// `max_norm`; returns the pre-clip norm.
inline double clip_global_norm(const std::vector<MatrixXd*>& grads,
                               double max_norm) {
  double sq = 0.0;
  for (const MatrixXd* g : grads) sq += g->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double scale = max_norm / norm;
    for (MatrixXd* g : grads) *g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Per-epoch report row; serialized as one JSON line by the CLI.
struct EpochMetrics {
  int epoch = 0;
  double loss_entity = 0;     ///< focal path, subset mean over the epoch
  double loss_contrastive = 0;
  double loss_non_entity = 0; ///< GCE+SR path
  double loss_mixup = 0;      ///< weighted augmentation loss
  double loss_total = 0;
  int mixup_instances = 0;
  int mixup_skipped = 0;      ///< boundary spans without a cached partner
  double dev_precision = 0, dev_recall = 0, dev_f1 = 0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"loss_entity", loss_entity},
            {"loss_contrastive", loss_contrastive},
            {"loss_non_entity", loss_non_entity},
            {"loss_mixup", loss_mixup},
            {"loss_total", loss_total},
            {"mixup_instances", mixup_instances},
            {"mixup_skipped", mixup_skipped},
            {"dev_precision", dev_precision},
            {"dev_recall", dev_recall},
            {"dev_f1", dev_f1}};
  }
};

struct TrainResult {
  Checkpoint checkpoint;  ///< parameters of the best-dev epoch
  int best_epoch = -1;
  double best_dev_f1 = 0;
  std::vector<EpochMetrics> metrics;
};

/// Full training loop. Per batch, candidates route by distant label:
/// entity spans feed the focal loss (against memory-smoothed targets) and
/// the contrastive loss; non-entity spans feed the noise-robust GCE+SR
/// objective and may spawn boundary-mixup instances. Each component is
/// averaged over its own span subset, combined with the eta weighting,
/// and optimized with Adam under a global gradient-norm clip of 1. The
/// soft-label memory updates once per epoch from the predictions made
/// during that epoch; the returned checkpoint is the epoch with the best
/// dev F1 (earlier epoch on ties), decoded without neighbour
/// interpolation. With `cfg.ce_baseline` the objective is plain
/// cross-entropy over all candidates instead.
inline TrainResult train(const RunConfig& cfg,
                         const std::vector<Sentence>& train_corpus,
                         const std::vector<Sentence>& dev_corpus) {
  cfg.validate();
  if (train_corpus.empty()) throw Error("training corpus is empty");
  for (const Sentence& s : train_corpus) validate_sentence(s, "(train)");
  const LabelSet labels =
      LabelSet::from_corpus(train_corpus, AnnotationLayer::kDistant);
  if (labels.entity_count() == 0)
    throw Error("training corpus has no distant entity spans");
  for (const Sentence& s : dev_corpus) {
    if (!s.gold_spans) throw Error("dev corpus has a sentence without gold spans");
    for (const EntitySpan& sp : *s.gold_spans)
      if (labels.id(sp.label) < 0)
        throw Error("dev label '" + sp.label + "' does not occur in training data");
  }

  Model model =
      cfg.encoder.kind == EncoderKind::kToy
          ? Model(cfg.encoder, cfg.d_r, cfg.use_bias, labels,
                  Vocab::from_corpus(train_corpus), cfg.seed)
          : Model(cfg.encoder, cfg.d_r, cfg.use_bias, labels,
                  load_vector_table(cfg.encoder.table_path), cfg.seed);
  const LossWeights lw = LossWeights::from(cfg);
  SoftLabelMemory memory(labels.size(), cfg.G, cfg.lambda);
  EntityCache cache(labels.size(), cfg.cache_capacity);
  Rng rng(Rng::mix(cfg.seed, 0x747261696eull));  // training stream
  Adam adam(cfg.lr, model.trainable(model.params()));

  TrainResult result;
  auto snapshot_best = [&](int epoch, double f1) {
    result.checkpoint = Checkpoint::of(model, cfg.hash());
    result.best_epoch = epoch;
    result.best_dev_f1 = f1;
  };

  if (cfg.epochs == 0) {
    snapshot_best(-1, evaluate(model, dev_corpus, cfg.max_span_len).f1);
    return result;
  }

  std::vector<int> order(train_corpus.size());
  std::iota(order.begin(), order.end(), 0);
  ModelParams grads = model.params().zeros_like();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    std::vector<EpochPrediction> epoch_predictions;
    EpochMetrics em;
    em.epoch = epoch;
    double sum_entity = 0, sum_cl = 0, sum_gce = 0, sum_mix = 0, sum_total = 0;
    int n_batches = 0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_end = std::min(
          order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
      const auto n_sents = static_cast<int>(batch_end - batch_start);

      // Forward every sentence; collect routing info.
      std::vector<SentenceForward> fwd(n_sents);
      std::vector<std::vector<int>> assigned(n_sents);
      std::vector<std::vector<VectorXd>> d_logits(n_sents), d_r_extra(n_sents);
      struct SpanRef {
        int sent, span, label;
      };
      std::vector<SpanRef> entity_refs, o_refs;
      for (int si = 0; si < n_sents; ++si) {
        const Sentence& sent = train_corpus[order[batch_start + si]];
        auto candidates = enumerate_spans(sent.size(), cfg.max_span_len);
        assigned[si] = assign_distant_labels(sent, labels, candidates);
        fwd[si] = model.forward(sent.tokens, std::move(candidates));
        d_logits[si].assign(fwd[si].spans.size(), VectorXd());
        d_r_extra[si].assign(fwd[si].spans.size(), VectorXd());
        const auto [ent_idx, o_idx] = partition_by_label(assigned[si]);
        for (int k : ent_idx) entity_refs.push_back({si, k, assigned[si][k]});
        for (int k : o_idx) o_refs.push_back({si, k, 0});
      }

      grads.set_zero();
      double l_entity = 0, l_cl = 0, l_gce = 0, l_mix_w = 0;

      if (cfg.ce_baseline) {
        // Plain cross-entropy over every candidate.
        const auto n_spans =
            static_cast<double>(entity_refs.size() + o_refs.size());
        if (n_spans > 0) {
          double total = 0;
          auto add = [&](const SpanRef& ref) {
            VectorXd target = VectorXd::Zero(labels.size());
            target(ref.label) = 1.0;
            VectorXd dl;
            total += soft_cross_entropy(fwd[ref.sent].o[ref.span], target, &dl);
            d_logits[ref.sent][ref.span] = dl / n_spans;
          };
          for (const SpanRef& ref : entity_refs) add(ref);
          for (const SpanRef& ref : o_refs) add(ref);
          l_entity = total / n_spans;
        }
      } else {
        // Entity route: focal loss against smoothed targets.
        if (!entity_refs.empty()) {
          const double inv = 1.0 / static_cast<double>(entity_refs.size());
          for (const SpanRef& ref : entity_refs) {
            const VectorXd& o = fwd[ref.sent].o[ref.span];
            const VectorXd target = memory.smoothed_target(ref.label, epoch + 1);
            VectorXd d_o;
            l_entity += mfl_loss(o, target, lw.alpha, lw.gamma, &d_o) * inv;
            d_logits[ref.sent][ref.span] =
                softmax_backward(o, d_o) * (lw.eta * inv);
            Eigen::Index argmax = 0;
            o.maxCoeff(&argmax);
            epoch_predictions.push_back(
                {ref.label, o, static_cast<int>(argmax) == ref.label});
          }
        }
        // Entity route: contrastive pull/push over the batch.
        if (entity_refs.size() >= 2) {
          std::vector<VectorXd> reps;
          std::vector<int> rep_labels;
          reps.reserve(entity_refs.size());
          for (const SpanRef& ref : entity_refs) {
            reps.push_back(fwd[ref.sent].r[ref.span]);
            rep_labels.push_back(ref.label);
          }
          std::vector<VectorXd> d_reps;
          int n_anchors = 0;
          const double cl_sum = entity_cl_loss(reps, rep_labels, lw.tau,
                                               cfg.cl_denominator, &d_reps,
                                               &n_anchors);
          if (n_anchors > 0) {
            const double inv = 1.0 / n_anchors;
            l_cl = cl_sum * inv;
            const double gscale = (1.0 - lw.eta) * inv;
            for (std::size_t i = 0; i < entity_refs.size(); ++i) {
              auto& slot = d_r_extra[entity_refs[i].sent][entity_refs[i].span];
              if (slot.size() == 0) slot = VectorXd::Zero(model.d_r());
              slot += d_reps[i] * gscale;
            }
          }
        }
        // Refresh the mixing cache with this batch's entity representations.
        for (const SpanRef& ref : entity_refs)
          cache.push(ref.label, fwd[ref.sent].r[ref.span]);
        // Non-entity route: noise-robust objective.
        if (!o_refs.empty()) {
          const double inv = 1.0 / static_cast<double>(o_refs.size());
          for (const SpanRef& ref : o_refs) {
            const VectorXd& o = fwd[ref.sent].o[ref.span];
            VectorXd d_o;
            l_gce += gce_sr_loss(o, lw.q, lw.p, &d_o) * inv;
            VectorXd dl = softmax_backward(o, d_o) * inv;
            auto& slot = d_logits[ref.sent][ref.span];
            if (slot.size() == 0)
              slot = std::move(dl);
            else
              slot += dl;
          }
        }
        // Non-entity route: boundary mixup.
        if (cfg.epsilon > 0 && !o_refs.empty()) {
          std::vector<VectorXd> o_dists;
          std::vector<int> o_labels(o_refs.size(), 0);
          o_dists.reserve(o_refs.size());
          for (const SpanRef& ref : o_refs)
            o_dists.push_back(fwd[ref.sent].o[ref.span]);
          std::vector<MixedInstance> instances;
          for (const BoundarySelection& sel :
               select_boundary_spans(o_dists, o_labels, cfg.epsilon)) {
            if (cache.empty(sel.partner_label)) {
              ++em.mixup_skipped;
              continue;
            }
            const SpanRef& ref = o_refs[sel.index];
            MixedInstance mi = mix_instance(
                fwd[ref.sent].r[ref.span], cache.sample(sel.partner_label, rng),
                sel.partner_label, labels.size(), cfg.alpha_prime, rng);
            mi.span_index = sel.index;  // index into o_refs
            instances.push_back(std::move(mi));
          }
          if (!instances.empty()) {
            std::vector<VectorXd> d_r_span(o_refs.size());
            const double mix_mean = mixup_loss_backward(
                instances, model, cfg.mixup_weight, grads, d_r_span);
            l_mix_w = cfg.mixup_weight * mix_mean;
            em.mixup_instances += static_cast<int>(instances.size());
            for (std::size_t i = 0; i < o_refs.size(); ++i) {
              if (d_r_span[i].size() == 0) continue;
              auto& slot = d_r_extra[o_refs[i].sent][o_refs[i].span];
              if (slot.size() == 0) slot = VectorXd::Zero(model.d_r());
              slot += d_r_span[i];
            }
          }
        }
      }

      const double batch_loss =
          cfg.ce_baseline ? l_entity
                          : combine_losses(l_entity, l_cl, l_gce, l_mix_w, lw.eta);
      if (!std::isfinite(batch_loss))
        throw Error("non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(n_batches));

      for (int si = 0; si < n_sents; ++si)
        model.backward(fwd[si], d_logits[si], d_r_extra[si], grads);
      const auto grad_list = model.trainable(grads);
      clip_global_norm(grad_list, 1.0);
      adam.step(model.trainable(model.params()), grad_list);

      sum_entity += l_entity;
      sum_cl += l_cl;
      sum_gce += l_gce;
      sum_mix += l_mix_w;
      sum_total += batch_loss;
      ++n_batches;
    }

    if (!cfg.ce_baseline) memory.update(epoch_predictions);

    const EvalResult dev = evaluate(model, dev_corpus, cfg.max_span_len);
    em.loss_entity = sum_entity / n_batches;
    em.loss_contrastive = sum_cl / n_batches;
    em.loss_non_entity = sum_gce / n_batches;
    em.loss_mixup = sum_mix / n_batches;
    em.loss_total = sum_total / n_batches;
    em.dev_precision = dev.precision;
    em.dev_recall = dev.recall;
    em.dev_f1 = dev.f1;
    result.metrics.push_back(em);
    if (result.best_epoch < 0 || dev.f1 > result.best_dev_f1)
      snapshot_best(epoch, dev.f1);
  }
  return result;
}

}  // namespace dsner
