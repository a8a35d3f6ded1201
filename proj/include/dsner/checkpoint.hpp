#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsner/binio.hpp"
#include "dsner/common.hpp"
#include "dsner/model.hpp"

namespace dsner {

/// On-disk model snapshot.
///
/// Layout: 8-byte magic, u32 format version, u64 FNV-1a hash of the body,
/// then the body: config hash, encoder description, label set, vocabulary,
/// and every parameter tensor. The body hash doubles as the checkpoint's
/// identity — artifacts derived from a checkpoint (e.g. neighbour
/// datastores) record it and refuse to run against a different model.
struct Checkpoint {
  static constexpr char kMagic[9] = "DSNERCK1";
  static constexpr std::uint32_t kVersion = 1;

  EncoderConfig encoder;  // table_path not persisted; the table itself is
  int d_r = 0;
  bool use_bias = true;
  std::uint64_t config_hash = 0;
  LabelSet labels;
  Vocab vocab;
  ModelParams params;
  std::uint64_t content_hash = 0;  ///< filled on save/load

  static Checkpoint of(const Model& m, std::uint64_t config_hash) {
    Checkpoint c;
    c.encoder = m.encoder_config();
    c.encoder.table_path.clear();
    c.d_r = m.d_r();
    c.use_bias = m.use_bias();
    c.config_hash = config_hash;
    c.labels = m.labels();
    c.vocab = m.vocab();
    c.params = m.params();
    return c;
  }

  Model to_model() const {
    return Model::restore(encoder, d_r, use_bias, labels, vocab, params);
  }

  /// Errors when the given label set does not fit this checkpoint: every
  /// label must be one the model was trained with, in the same order.
  void verify_labels(const LabelSet& other) const {
    for (const auto& name : other.names())
      if (labels.id(name) < 0)
        throw Error("label '" + name + "' is not part of this model's label set");
  }

  void save(const std::string& path) const {
    std::ostringstream body;
    write_body(body);
    const std::string bytes = body.str();
    const std::uint64_t h = fnv1a64(bytes);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    binio::write_u32(out, kVersion);
    binio::write_u64(out, h);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
  }

  /// Loads and verifies a checkpoint; `content_hash` is set to the body
  /// hash recorded (and re-verified) from the file.
  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
      throw Error("not a checkpoint file: " + path);
    const std::uint32_t version = binio::read_u32(in);
    if (version != kVersion)
      throw Error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t stored_hash = binio::read_u64(in);
    std::ostringstream rest;
    rest << in.rdbuf();
    const std::string bytes = rest.str();
    if (fnv1a64(bytes) != stored_hash)
      throw Error("checkpoint is corrupted (hash mismatch): " + path);
    std::istringstream body(bytes);
    Checkpoint c = read_body(body);
    c.content_hash = stored_hash;
    return c;
  }

  /// Identity of the current in-memory state (what `save` would record).
  std::uint64_t compute_hash() const {
    std::ostringstream body;
    write_body(body);
    return fnv1a64(body.str());
  }

 private:
  static void write_matrix(std::ostream& os, const MatrixXd& m) {
    binio::write_u64(os, static_cast<std::uint64_t>(m.rows()));
    binio::write_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) binio::write_f64(os, m.data()[i]);
  }

  static MatrixXd read_matrix(std::istream& is) {
    const auto rows = static_cast<Eigen::Index>(binio::read_u64(is));
    const auto cols = static_cast<Eigen::Index>(binio::read_u64(is));
    if (rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24))
      throw Error("corrupted checkpoint: implausible tensor shape");
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binio::read_f64(is);
    return m;
  }

  void write_body(std::ostream& os) const {
    binio::write_u64(os, config_hash);
    binio::write_u8(os, encoder.kind == EncoderKind::kToy ? 0 : 1);
    binio::write_u32(os, static_cast<std::uint32_t>(encoder.d_h));
    binio::write_u32(os, static_cast<std::uint32_t>(encoder.window));
    binio::write_u32(os, static_cast<std::uint32_t>(d_r));
    binio::write_u8(os, use_bias ? 1 : 0);
    binio::write_u64(os, labels.size());
    for (const auto& name : labels.names()) binio::write_string(os, name);
    binio::write_u64(os, static_cast<std::uint64_t>(vocab.size()));
    for (const auto& tok : vocab.tokens()) binio::write_string(os, tok);
    params.visit([&](const MatrixXd& m) { write_matrix(os, m); });
  }

  static Checkpoint read_body(std::istream& is) {
    Checkpoint c;
    c.config_hash = binio::read_u64(is);
    c.encoder.kind =
        binio::read_u8(is) == 0 ? EncoderKind::kToy : EncoderKind::kPretrainedAdapter;
    c.encoder.d_h = static_cast<int>(binio::read_u32(is));
    c.encoder.window = static_cast<int>(binio::read_u32(is));
    c.d_r = static_cast<int>(binio::read_u32(is));
    c.use_bias = binio::read_u8(is) != 0;
    const auto n_labels = binio::read_u64(is);
    std::vector<std::string> names;
    names.reserve(n_labels);
    for (std::uint64_t i = 0; i < n_labels; ++i) names.push_back(binio::read_string(is));
    c.labels = LabelSet::from_names(names);
    const auto n_tokens = binio::read_u64(is);
    std::vector<std::string> toks;
    toks.reserve(n_tokens);
    for (std::uint64_t i = 0; i < n_tokens; ++i) toks.push_back(binio::read_string(is));
    if (toks.empty() || toks.front() != Vocab::kUnk)
      throw Error("corrupted checkpoint: bad vocabulary block");
    c.vocab = Vocab::from_tokens({toks.begin() + 1, toks.end()});
    c.params.conv.resize(2 * c.encoder.window + 1);
    c.params.visit([&](MatrixXd& m) { m = read_matrix(is); });
    return c;
  }
};

}  // namespace dsner
