#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsner/common.hpp"
#include "dsner/rng.hpp"
#include "dsner/types.hpp"

namespace dsner {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Numerically stable softmax over a logit vector.
inline VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

/// Span feature from its endpoint token vectors:
/// concat(u, v, u - v, u .* v), dimension 4*d_h. `i`, `j` are 1-based
/// token positions into the columns of `h` with i <= j.
inline VectorXd span_representation(const MatrixXd& h, int i, int j) {
  const auto n = static_cast<int>(h.cols());
  if (i < 1 || j < i || j > n)
    throw std::invalid_argument("span endpoints out of range");
  const VectorXd u = h.col(i - 1);
  const VectorXd v = h.col(j - 1);
  const auto d = static_cast<int>(h.rows());
  VectorXd s(4 * d);
  s.segment(0, d) = u;
  s.segment(d, d) = v;
  s.segment(2 * d, d) = u - v;
  s.segment(3 * d, d) = u.cwiseProduct(v);
  return s;
}

enum class EncoderKind { kToy, kPretrainedAdapter };

inline std::string to_string(EncoderKind k) {
  return k == EncoderKind::kToy ? "toy" : "pretrained-adapter";
}

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "toy") return EncoderKind::kToy;
  if (s == "pretrained-adapter") return EncoderKind::kPretrainedAdapter;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

/// Hyperparameters of the token encoder. The toy encoder is a learned
/// embedding table followed by one bidirectional context-mixing layer of
/// receptive-field radius `window`; the pretrained-adapter variant swaps
/// the trainable table for a frozen vector table loaded from a file and
/// keeps the trainable mixing layer on top.
struct EncoderConfig {
  EncoderKind kind = EncoderKind::kToy;
  int d_h = 24;             ///< token vector dimension
  int window = 3;           ///< context radius w; position i sees [i-w, i+w]
  std::string table_path;   ///< pretrained-adapter only: vector table file

  void validate() const {
    if (d_h < 2) throw std::invalid_argument("encoder d_h must be >= 2");
    if (window < 0) throw std::invalid_argument("encoder window must be >= 0");
    if (kind == EncoderKind::kPretrainedAdapter && table_path.empty())
      throw std::invalid_argument("pretrained-adapter encoder needs a table path");
  }
};

/// Token-to-id mapping. Id 0 is the reserved unknown-token id; all other
/// ids are assigned to the distinct corpus tokens in lexicographic order,
/// so the mapping is deterministic for a given corpus.
class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";

  Vocab() { add(kUnk); }

  static Vocab from_corpus(const std::vector<Sentence>& corpus) {
    std::set<std::string> uniq;
    for (const auto& s : corpus) uniq.insert(s.tokens.begin(), s.tokens.end());
    Vocab v;
    for (const auto& t : uniq)
      if (t != kUnk) v.add(t);
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
      if (t == kUnk) continue;
      if (v.index_.count(t)) throw ParseError("duplicate token in vector table: " + t);
      v.add(t);
    }
    return v;
  }

  int id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? 0 : it->second;
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(const std::string& t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Reads a plain-text vector table: first line "<count> <dim>", then one
/// line per token: the token followed by <dim> decimal numbers. Row 0 of
/// the returned matrix is the all-zero unknown-token vector.
inline std::pair<Vocab, MatrixXd> load_vector_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vector table: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty vector table: " + path, 1);
  std::istringstream head(line);
  long count = 0, dim = 0;
  if (!(head >> count >> dim) || count < 1 || dim < 2)
    throw ParseError("vector table header must be '<count> <dim>' with dim >= 2", 1);
  std::vector<std::string> tokens;
  MatrixXd table(dim, count + 1);
  table.col(0).setZero();
  long row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= count) throw ParseError("more rows than declared in header", line_no);
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    for (long d = 0; d < dim; ++d)
      if (!(ls >> table(d, row + 1)))
        throw ParseError("expected " + std::to_string(dim) + " values for token '" + tok + "'", line_no);
    double extra;
    if (ls >> extra) throw ParseError("too many values for token '" + tok + "'", line_no);
    tokens.push_back(tok);
    ++row;
  }
  if (row != count)
    throw ParseError("vector table declares " + std::to_string(count) +
                     " rows but contains " + std::to_string(row));
  return {Vocab::from_tokens(tokens), std::move(table)};
}

/// All parameter tensors of the model, in one flat bundle so optimizer
/// state and gradient accumulators can share the same shape. `visit`
/// enumerates every tensor in a fixed order.
struct ModelParams {
  MatrixXd embed;                 ///< d_in x |V| token table (frozen for adapter)
  std::vector<MatrixXd> conv;     ///< 2w+1 mixing kernels, each d_h x d_in
  MatrixXd conv_bias;             ///< d_h x 1
  MatrixXd proj;                  ///< d_r x 4*d_h span projection
  MatrixXd proj_bias;             ///< d_r x 1
  MatrixXd cls;                   ///< |L| x d_r label scorer
  MatrixXd cls_bias;              ///< |L| x 1

  template <typename F>
  void visit(F&& f) {
    f(embed);
    for (auto& m : conv) f(m);
    f(conv_bias);
    f(proj);
    f(proj_bias);
    f(cls);
    f(cls_bias);
  }

  template <typename F>
  void visit(F&& f) const {
    f(embed);
    for (const auto& m : conv) f(m);
    f(conv_bias);
    f(proj);
    f(proj_bias);
    f(cls);
    f(cls_bias);
  }

  /// A same-shaped bundle with every entry zero (gradient accumulator).
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](auto& m) { m.setZero(); });
    return z;
  }

  void set_zero() {
    visit([](auto& m) { m.setZero(); });
  }
};

/// Per-sentence forward activations kept for the backward pass.
struct SentenceForward {
  std::vector<int> token_ids;
  MatrixXd emb;                    ///< d_in x n input vectors
  MatrixXd hidden;                 ///< d_h x n context-mixed token vectors
  std::vector<std::pair<int, int>> spans;  ///< candidate (start, end), 1-based
  std::vector<VectorXd> z;         ///< raw span features, 4*d_h each
  std::vector<VectorXd> r;         ///< projected representations, d_r each
  std::vector<VectorXd> o;         ///< label distributions, |L| each
};

/// Span scorer over a toy context-sensitive encoder.
///
/// Pipeline per span (i, j):
///   h_t = tanh(b_c + sum_{k=-w..w} M_k e_{t+k})   (zero-padded)
///   z   = h_i (+) h_j (+) (h_i - h_j) (+) (h_i .* h_j)
///   r   = tanh(W z + b_r)
///   o   = softmax(V r + b_o)
///
/// All gradients are hand-derived; `backward` accumulates into a
/// caller-owned ModelParams-shaped bundle.
class Model {
 public:
  Model(EncoderConfig enc, int d_r, bool use_bias, LabelSet labels, Vocab vocab,
        std::uint64_t seed)
      : enc_(std::move(enc)),
        d_r_(d_r),
        use_bias_(use_bias),
        labels_(std::move(labels)),
        vocab_(std::move(vocab)) {
    enc_.validate();
    if (d_r_ < 1) throw std::invalid_argument("d_r must be >= 1");
    if (labels_.size() < 2)
      throw std::invalid_argument("label set needs at least one entity type");
    d_in_ = enc_.d_h;  // toy: embeddings live in the hidden dimension
    init_params(seed);
  }

  /// Pretrained-adapter construction: the vector table supplies both the
  /// vocabulary and the frozen input vectors.
  Model(EncoderConfig enc, int d_r, bool use_bias, LabelSet labels,
        std::pair<Vocab, MatrixXd> table, std::uint64_t seed)
      : enc_(std::move(enc)),
        d_r_(d_r),
        use_bias_(use_bias),
        labels_(std::move(labels)),
        vocab_(std::move(table.first)) {
    enc_.validate();
    if (enc_.kind != EncoderKind::kPretrainedAdapter)
      throw std::invalid_argument("table constructor requires pretrained-adapter kind");
    if (d_r_ < 1) throw std::invalid_argument("d_r must be >= 1");
    d_in_ = static_cast<int>(table.second.rows());
    init_params(seed);
    params_.embed = std::move(table.second);
  }

  /// Rebuilds a model around previously trained tensors (checkpoint
  /// loading). Shapes are validated against the stated dimensions.
  static Model restore(const EncoderConfig& enc, int d_r, bool use_bias,
                       LabelSet labels, Vocab vocab, ModelParams params) {
    const auto d_in = static_cast<int>(params.embed.rows());
    Model m(enc.kind == EncoderKind::kToy
                ? enc
                : [&] {
                    EncoderConfig e = enc;
                    e.table_path = "<restored>";
                    return e;
                  }(),
            d_r, use_bias, std::move(labels), std::move(vocab), 0,
            RestoreTag{}, d_in);
    const int taps = 2 * enc.window + 1;
    if (static_cast<int>(params.conv.size()) != taps)
      throw Error("tensor bundle has wrong kernel count");
    auto expect = [](const MatrixXd& m_, Eigen::Index r, Eigen::Index c,
                     const char* what) {
      if (m_.rows() != r || m_.cols() != c)
        throw Error(std::string("tensor '") + what + "' has wrong shape");
    };
    expect(params.embed, d_in, m.vocab_.size(), "embed");
    for (const auto& k : params.conv) expect(k, enc.d_h, d_in, "conv");
    expect(params.conv_bias, enc.d_h, 1, "conv_bias");
    expect(params.proj, d_r, 4 * enc.d_h, "proj");
    expect(params.proj_bias, d_r, 1, "proj_bias");
    expect(params.cls, m.labels_.size(), d_r, "cls");
    expect(params.cls_bias, m.labels_.size(), 1, "cls_bias");
    m.params_ = std::move(params);
    return m;
  }

  const EncoderConfig& encoder_config() const { return enc_; }
  int d_h() const { return enc_.d_h; }
  int d_in() const { return d_in_; }
  int d_r() const { return d_r_; }
  bool use_bias() const { return use_bias_; }
  const LabelSet& labels() const { return labels_; }
  const Vocab& vocab() const { return vocab_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Trainable tensors in a fixed order (the frozen adapter table and
  /// disabled biases are excluded). Optimizers and finite-difference
  /// checks iterate exactly this list.
  std::vector<MatrixXd*> trainable(ModelParams& p) const {
    std::vector<MatrixXd*> out;
    if (enc_.kind == EncoderKind::kToy) out.push_back(&p.embed);
    for (auto& m : p.conv) out.push_back(&m);
    if (use_bias_) out.push_back(&p.conv_bias);
    out.push_back(&p.proj);
    if (use_bias_) out.push_back(&p.proj_bias);
    out.push_back(&p.cls);
    if (use_bias_) out.push_back(&p.cls_bias);
    return out;
  }

  /// Encodes a token sequence into context-mixed vectors, one column per
  /// token. Deterministic given parameters.
  MatrixXd encode(const std::vector<std::string>& tokens) const {
    SentenceForward f;
    run_encoder(tokens, f);
    return f.hidden;
  }

  /// r = tanh(W s + b_r). `s` must have dimension 4*d_h.
  VectorXd project(const VectorXd& s) const {
    if (s.size() != 4 * enc_.d_h)
      throw std::invalid_argument("span feature has wrong dimension");
    VectorXd pre = params_.proj * s;
    if (use_bias_) pre += params_.proj_bias;
    return pre.array().tanh();
  }

  /// o = softmax(V r + b_o) over the label set.
  VectorXd classify(const VectorXd& r) const {
    if (r.size() != d_r_)
      throw std::invalid_argument("representation has wrong dimension");
    VectorXd logits = params_.cls * r;
    if (use_bias_) logits += params_.cls_bias;
    return softmax(logits);
  }

  /// Full forward over one sentence and a set of span candidates,
  /// retaining every intermediate needed by `backward`.
  SentenceForward forward(const std::vector<std::string>& tokens,
                          std::vector<std::pair<int, int>> spans) const {
    SentenceForward f;
    run_encoder(tokens, f);
    const auto n = static_cast<int>(tokens.size());
    f.spans = std::move(spans);
    f.z.reserve(f.spans.size());
    f.r.reserve(f.spans.size());
    f.o.reserve(f.spans.size());
    for (const auto& [start, end] : f.spans) {
      if (start < 1 || end < start || end > n)
        throw std::invalid_argument("span candidate out of range");
      f.z.push_back(span_representation(f.hidden, start, end));
      f.r.push_back(project(f.z.back()));
      f.o.push_back(classify(f.r.back()));
    }
    return f;
  }

  /// Accumulates parameter gradients for one sentence. For span k the
  /// incoming gradient may arrive at the logits (`d_logits[k]`, empty
  /// vector = none) and/or directly at the representation
  /// (`d_r_extra[k]`, empty vector = none). Either list may be empty to
  /// mean "no gradients of that kind".
  void backward(const SentenceForward& f, const std::vector<VectorXd>& d_logits,
                const std::vector<VectorXd>& d_r_extra, ModelParams& grads) const {
    const auto n = static_cast<int>(f.hidden.cols());
    const int d = enc_.d_h;
    MatrixXd d_hidden = MatrixXd::Zero(d, n);
    for (std::size_t k = 0; k < f.spans.size(); ++k) {
      VectorXd d_r = VectorXd::Zero(d_r_);
      bool any = false;
      if (k < d_logits.size() && d_logits[k].size() != 0) {
        const VectorXd& dl = d_logits[k];
        grads.cls.noalias() += dl * f.r[k].transpose();
        if (use_bias_) grads.cls_bias += dl;
        d_r.noalias() += params_.cls.transpose() * dl;
        any = true;
      }
      if (k < d_r_extra.size() && d_r_extra[k].size() != 0) {
        d_r += d_r_extra[k];
        any = true;
      }
      if (!any) continue;
      const VectorXd d_pre =
          (1.0 - f.r[k].array().square()).matrix().cwiseProduct(d_r);
      grads.proj.noalias() += d_pre * f.z[k].transpose();
      if (use_bias_) grads.proj_bias += d_pre;
      const VectorXd d_z = params_.proj.transpose() * d_pre;
      const auto& [start, end] = f.spans[k];
      const VectorXd u = f.hidden.col(start - 1);
      const VectorXd v = f.hidden.col(end - 1);
      d_hidden.col(start - 1) += d_z.segment(0, d) + d_z.segment(2 * d, d) +
                                 v.cwiseProduct(d_z.segment(3 * d, d));
      d_hidden.col(end - 1) += d_z.segment(d, d) - d_z.segment(2 * d, d) +
                               u.cwiseProduct(d_z.segment(3 * d, d));
    }
    // Through the context-mixing layer into kernels, bias, and (for the
    // toy encoder) the embedding table.
    const int w = enc_.window;
    const bool train_embed = enc_.kind == EncoderKind::kToy;
    for (int i = 0; i < n; ++i) {
      const VectorXd d_act =
          (1.0 - f.hidden.col(i).array().square()).matrix().cwiseProduct(
              d_hidden.col(i));
      if (use_bias_) grads.conv_bias += d_act;
      for (int k = -w; k <= w; ++k) {
        const int j = i + k;
        if (j < 0 || j >= n) continue;
        grads.conv[k + w].noalias() += d_act * f.emb.col(j).transpose();
        if (train_embed)
          grads.embed.col(f.token_ids[j]).noalias() +=
              params_.conv[k + w].transpose() * d_act;
      }
    }
  }

  /// Classifier-only backward for gradients that arrive at the logits of
  /// a representation that is NOT a stored span activation (the mixed
  /// vectors of boundary mixup). Accumulates dV (and bias) against the
  /// given representation and returns the gradient w.r.t. it.
  VectorXd classifier_backward(const VectorXd& d_logits, const VectorXd& rep,
                               ModelParams& grads) const {
    grads.cls.noalias() += d_logits * rep.transpose();
    if (use_bias_) grads.cls_bias += d_logits;
    return params_.cls.transpose() * d_logits;
  }

 private:
  struct RestoreTag {};

  Model(EncoderConfig enc, int d_r, bool use_bias, LabelSet labels, Vocab vocab,
        std::uint64_t /*seed*/, RestoreTag, int d_in)
      : enc_(std::move(enc)),
        d_r_(d_r),
        use_bias_(use_bias),
        d_in_(d_in),
        labels_(std::move(labels)),
        vocab_(std::move(vocab)) {
    enc_.validate();
    if (d_r_ < 1) throw std::invalid_argument("d_r must be >= 1");
    if (labels_.size() < 2)
      throw std::invalid_argument("label set needs at least one entity type");
  }

  void init_params(std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0x6d6f64656cull));  // parameter-init stream
    const int d = enc_.d_h;
    const int taps = 2 * enc_.window + 1;
    params_.embed = MatrixXd::Zero(d_in_, vocab_.size());
    if (enc_.kind == EncoderKind::kToy) fill_uniform(params_.embed, 0.1, rng);
    params_.conv.assign(taps, MatrixXd::Zero(d, d_in_));
    const double conv_scale = std::sqrt(6.0 / (d_in_ * taps + d));
    for (auto& m : params_.conv) fill_uniform(m, conv_scale, rng);
    params_.proj = MatrixXd::Zero(d_r_, 4 * d);
    fill_uniform(params_.proj, std::sqrt(6.0 / (4 * d + d_r_)), rng);
    params_.cls = MatrixXd::Zero(labels_.size(), d_r_);
    fill_uniform(params_.cls, std::sqrt(6.0 / (d_r_ + labels_.size())), rng);
    params_.conv_bias = MatrixXd::Zero(d, 1);
    params_.proj_bias = MatrixXd::Zero(d_r_, 1);
    params_.cls_bias = MatrixXd::Zero(labels_.size(), 1);
  }

  static void fill_uniform(MatrixXd& m, double scale, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = rng.uniform(-scale, scale);
  }

  void run_encoder(const std::vector<std::string>& tokens,
                   SentenceForward& f) const {
    if (tokens.empty()) throw std::invalid_argument("cannot encode an empty sentence");
    const auto n = static_cast<int>(tokens.size());
    f.token_ids.resize(tokens.size());
    f.emb.resize(d_in_, n);
    for (int i = 0; i < n; ++i) {
      f.token_ids[i] = vocab_.id(tokens[i]);
      f.emb.col(i) = params_.embed.col(f.token_ids[i]);
    }
    const int w = enc_.window;
    f.hidden.resize(enc_.d_h, n);
    for (int i = 0; i < n; ++i) {
      VectorXd act = use_bias_ ? VectorXd(params_.conv_bias)
                               : VectorXd(VectorXd::Zero(enc_.d_h));
      for (int k = -w; k <= w; ++k) {
        const int j = i + k;
        if (j < 0 || j >= n) continue;
        act.noalias() += params_.conv[k + w] * f.emb.col(j);
      }
      f.hidden.col(i) = act.array().tanh();
    }
  }

  EncoderConfig enc_;
  int d_r_;
  bool use_bias_;
  int d_in_ = 0;
  LabelSet labels_;
  Vocab vocab_;
  ModelParams params_;
};

}  // namespace dsner
