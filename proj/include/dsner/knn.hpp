#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsner/binio.hpp"
#include "dsner/common.hpp"
#include "dsner/model.hpp"
#include "dsner/spans.hpp"
#include "dsner/types.hpp"

namespace dsner {

/// Immutable store of training entity representations and their labels,
/// queried at inference time by cosine similarity. Keys are held (and
/// persisted) as 32-bit floats; similarities are computed in double.
class DataStore {
 public:
  static constexpr char kMagic[9] = "DSNERDS1";
  static constexpr std::uint32_t kVersion = 1;

  DataStore(int d_r, LabelSet labels, std::uint64_t checkpoint_hash)
      : d_r_(d_r), labels_(std::move(labels)), checkpoint_hash_(checkpoint_hash) {
    if (d_r_ < 1) throw std::invalid_argument("d_r must be >= 1");
  }

  int d_r() const { return d_r_; }
  const LabelSet& labels() const { return labels_; }
  std::uint64_t checkpoint_hash() const { return checkpoint_hash_; }
  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<Eigen::VectorXf>& keys() const { return keys_; }
  const std::vector<int>& values() const { return values_; }

  void add(const VectorXd& r, int label) {
    if (r.size() != d_r_)
      throw std::invalid_argument("key has wrong dimension");
    if (!labels_.is_entity(label))
      throw std::invalid_argument("datastore values must be entity labels");
    if (!(r.norm() > 0)) throw Error("zero-norm entity representation");
    keys_.push_back(r.cast<float>());
    values_.push_back(label);
  }

  /// Errors unless the store was built from the given model identity.
  void verify_checkpoint(std::uint64_t hash) const {
    if (hash != checkpoint_hash_)
      throw Error("datastore was built from a different model checkpoint");
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write datastore: " + path);
    out.write(kMagic, 8);
    binio::write_u32(out, kVersion);
    binio::write_u32(out, static_cast<std::uint32_t>(d_r_));
    binio::write_u64(out, labels_.size());
    for (const auto& name : labels_.names()) binio::write_string(out, name);
    binio::write_u64(out, checkpoint_hash_);
    binio::write_u64(out, static_cast<std::uint64_t>(size()));
    for (int i = 0; i < size(); ++i)
      for (int d = 0; d < d_r_; ++d) binio::write_f32(out, keys_[i](d));
    for (int v : values_) binio::write_u32(out, static_cast<std::uint32_t>(v));
    if (!out) throw IoError("failed writing datastore: " + path);
  }

  static DataStore load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open datastore: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
      throw Error("not a datastore file: " + path);
    const std::uint32_t version = binio::read_u32(in);
    if (version != kVersion)
      throw Error("unsupported datastore version " + std::to_string(version));
    const int d_r = static_cast<int>(binio::read_u32(in));
    const auto n_labels = binio::read_u64(in);
    std::vector<std::string> names;
    names.reserve(n_labels);
    for (std::uint64_t i = 0; i < n_labels; ++i)
      names.push_back(binio::read_string(in));
    const std::uint64_t ckpt = binio::read_u64(in);
    const std::uint64_t count = binio::read_u64(in);
    DataStore ds(d_r, LabelSet::from_names(names), ckpt);
    ds.keys_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Eigen::VectorXf k(d_r);
      for (int d = 0; d < d_r; ++d) k(d) = binio::read_f32(in);
      ds.keys_.push_back(std::move(k));
    }
    ds.values_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto v = static_cast<int>(binio::read_u32(in));
      if (!ds.labels_.is_entity(v))
        throw Error("corrupted datastore: non-entity value");
      ds.values_.push_back(v);
    }
    return ds;
  }

 private:
  int d_r_;
  LabelSet labels_;
  std::uint64_t checkpoint_hash_;
  std::vector<Eigen::VectorXf> keys_;
  std::vector<int> values_;
};

/// Fills a datastore with one entry per distant-labeled entity span of
/// the corpus, representations computed in inference mode. A corpus with
/// no entity spans is an error (the store would be unusable).
inline DataStore build_datastore(const Model& model, std::uint64_t checkpoint_hash,
                                 const std::vector<Sentence>& corpus) {
  DataStore ds(model.d_r(), model.labels(), checkpoint_hash);
  for (const Sentence& s : corpus) {
    if (!s.distant_spans || s.distant_spans->empty()) continue;
    const MatrixXd h = model.encode(s.tokens);
    for (const EntitySpan& sp : *s.distant_spans) {
      const int label = model.labels().id(sp.label);
      if (label < 0)
        throw Error("span label '" + sp.label + "' unknown to the model");
      ds.add(model.project(span_representation(h, sp.start, sp.end)), label);
    }
  }
  if (ds.size() == 0)
    throw Error("corpus contains no distant entity spans; datastore would be empty");
  return ds;
}

/// Vote outcome: the winning label and its distribution form.
struct KnnVote {
  int label = 0;
  VectorXd o_knn;
};

/// Exhaustive top-K cosine retrieval with deterministic tie handling:
/// equal similarities prefer the lower entry index; equal vote counts
/// prefer the larger summed similarity, then the lower label index.
/// `o_knn` is one-hot on the winner unless `weighted` is set, in which
/// case mass is spread over the retrieved labels proportionally to their
/// non-negative summed similarity.
inline KnnVote knn_vote(const DataStore& ds, const VectorXd& r, int K,
                        bool weighted = false) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (r.size() != ds.d_r())
    throw std::invalid_argument("query has wrong dimension");
  const double qn = r.norm();
  if (!(qn > 0)) throw std::invalid_argument("zero-norm query representation");
  if (ds.size() == 0) throw Error("empty datastore");
  const int n = ds.size();
  const int k = std::min(K, n);
  std::vector<double> sim(n);
  for (int i = 0; i < n; ++i) {
    const VectorXd key = ds.keys()[i].cast<double>();
    sim[i] = key.dot(r) / (key.norm() * qn);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) {
                      if (sim[a] != sim[b]) return sim[a] > sim[b];
                      return a < b;
                    });
  const int n_labels = ds.labels().size();
  std::vector<int> votes(n_labels, 0);
  std::vector<double> summed(n_labels, 0.0);
  for (int j = 0; j < k; ++j) {
    const int idx = order[j];
    votes[ds.values()[idx]] += 1;
    summed[ds.values()[idx]] += sim[idx];
  }
  int best = -1;
  for (int l = 1; l < n_labels; ++l) {
    if (votes[l] == 0) continue;
    if (best < 0 || votes[l] > votes[best] ||
        (votes[l] == votes[best] && summed[l] > summed[best]))
      best = l;
  }
  KnnVote out;
  out.label = best;
  out.o_knn = VectorXd::Zero(n_labels);
  if (weighted) {
    double total = 0.0;
    for (int l = 1; l < n_labels; ++l) total += std::max(summed[l], 0.0);
    if (total > 0) {
      for (int l = 1; l < n_labels; ++l)
        out.o_knn(l) = std::max(summed[l], 0.0) / total;
      return out;
    }
  }
  out.o_knn(best) = 1.0;
  return out;
}

/// o_final = (1 - mu) * o_model + mu * o_knn.
inline VectorXd interpolate_distribution(const VectorXd& o_model,
                                         const VectorXd& o_knn, double mu) {
  if (mu < 0 || mu > 1) throw std::invalid_argument("mu must be in [0,1]");
  if (o_model.size() != o_knn.size())
    throw std::invalid_argument("distribution length mismatch");
  return (1.0 - mu) * o_model + mu * o_knn;
}

}  // namespace dsner
