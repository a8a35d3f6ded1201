#pragma once

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "dsner/common.hpp"
#include "dsner/model.hpp"

namespace dsner {

/// Denominator policy for the contrastive loss: every other in-batch
/// entity span, or only spans carrying a different label.
enum class ClDenominator { kAll, kDifferentLabel };

inline std::string to_string(ClDenominator d) {
  return d == ClDenominator::kAll ? "all" : "different-label";
}

inline ClDenominator cl_denominator_from_string(const std::string& s) {
  if (s == "all") return ClDenominator::kAll;
  if (s == "different-label") return ClDenominator::kDifferentLabel;
  throw std::invalid_argument("cl_denominator must be 'all' or 'different-label'");
}

/// Every knob of a training/evaluation run, grouped by the module it
/// feeds. Two named profiles bake in the reference defaults: "standard"
/// for regular-size corpora and "small" for tiny ones (smaller batches,
/// narrower projection, fewer neighbours).
struct RunConfig {
  std::string profile = "standard";
  std::uint64_t seed = 42;

  // trainer
  double lr = 1e-5;
  int batch_size = 16;
  int epochs = 15;
  int max_span_len = 10;
  bool ce_baseline = false;  ///< plain cross-entropy over all spans

  // encoder + span scorer
  EncoderConfig encoder;
  int d_r = 256;
  bool use_bias = true;

  // soft-label memory
  int G = 1;
  double lambda = 0.8;

  // loss components
  double alpha = 0.5;
  double gamma = 2.0;
  double tau = 0.05;
  double q = 0.3;
  double p = 0.5;
  double eta = 0.9;
  ClDenominator cl_denominator = ClDenominator::kAll;

  // boundary mixup
  double epsilon = 0.5;
  double alpha_prime = 0.2;
  int cache_capacity = 256;
  double mixup_weight = 1.0;

  // nearest-neighbour inference
  int k = 64;
  double mu = 0.7;
  bool knn_weighted = false;  ///< similarity-weighted votes (off: one-hot)

  // informational paths, echoed into artifacts
  std::string train_path;
  std::string dev_path;

  static RunConfig with_profile(const std::string& name) {
    RunConfig c;
    c.profile = name;
    if (name == "standard") {
      // defaults above
    } else if (name == "small") {
      c.batch_size = 12;
      c.d_r = 128;
      c.k = 16;
    } else {
      throw std::invalid_argument("unknown profile: " + name);
    }
    return c;
  }

  void validate() const {
    if (profile != "standard" && profile != "small")
      throw std::invalid_argument("unknown profile: " + profile);
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (max_span_len < 1) throw std::invalid_argument("max_span_len must be >= 1");
    encoder.validate();
    if (d_r < 1) throw std::invalid_argument("d_r must be >= 1");
    if (G < 1) throw std::invalid_argument("G must be >= 1");
    if (lambda < 0 || lambda > 1) throw std::invalid_argument("lambda must be in [0,1]");
    if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
    if (gamma < 0) throw std::invalid_argument("gamma must be >= 0");
    if (!(tau > 0)) throw std::invalid_argument("tau must be > 0");
    if (!(q > 0) || q > 1) throw std::invalid_argument("q must be in (0,1]");
    if (!(p > 0) || p > 1) throw std::invalid_argument("p must be in (0,1]");
    if (eta < 0 || eta > 1) throw std::invalid_argument("eta must be in [0,1]");
    if (epsilon < 0 || epsilon > 1) throw std::invalid_argument("epsilon must be in [0,1]");
    if (!(alpha_prime > 0)) throw std::invalid_argument("alpha_prime must be > 0");
    if (cache_capacity < 1) throw std::invalid_argument("cache_capacity must be >= 1");
    if (mixup_weight < 0) throw std::invalid_argument("mixup_weight must be >= 0");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (mu < 0 || mu > 1) throw std::invalid_argument("mu must be in [0,1]");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["profile"] = profile;
    j["seed"] = seed;
    j["trainer"] = {{"lr", lr},
                    {"batch_size", batch_size},
                    {"epochs", epochs},
                    {"max_span_len", max_span_len},
                    {"ce_baseline", ce_baseline}};
    j["encoder"] = {{"kind", to_string(encoder.kind)},
                    {"d_h", encoder.d_h},
                    {"window", encoder.window},
                    {"table_path", encoder.table_path}};
    j["model"] = {{"d_r", d_r}, {"use_bias", use_bias}};
    j["memory"] = {{"G", G}, {"lambda", lambda}};
    j["losses"] = {{"alpha", alpha},
                   {"gamma", gamma},
                   {"tau", tau},
                   {"q", q},
                   {"p", p},
                   {"eta", eta},
                   {"cl_denominator", to_string(cl_denominator)}};
    j["mixup"] = {{"epsilon", epsilon},
                  {"alpha_prime", alpha_prime},
                  {"cache_capacity", cache_capacity},
                  {"mixup_weight", mixup_weight}};
    j["knn"] = {{"k", k}, {"mu", mu}, {"weighted", knn_weighted}};
    j["paths"] = {{"train", train_path}, {"dev", dev_path}};
    return j;
  }

  /// Parses a config object. Values start from the named profile's
  /// defaults; any present key overrides. Unknown keys are rejected so
  /// misspelled knobs fail loudly.
  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config root must be an object");
    RunConfig c = with_profile(j.value("profile", std::string("standard")));
    auto section = [&](const char* name) -> nlohmann::json {
      if (!j.contains(name)) return nlohmann::json::object();
      if (!j.at(name).is_object())
        throw std::invalid_argument(std::string("config section '") + name +
                                    "' must be an object");
      return j.at(name);
    };
    auto reject_unknown = [](const nlohmann::json& obj,
                             std::initializer_list<const char*> known,
                             const char* where) {
      for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : known)
          if (item.key() == k) ok = true;
        if (!ok)
          throw std::invalid_argument(std::string("unknown config key '") +
                                      item.key() + "' in " + where);
      }
    };
    reject_unknown(j,
                   {"profile", "seed", "trainer", "encoder", "model", "memory",
                    "losses", "mixup", "knn", "paths"},
                   "config root");
    try {
      c.seed = j.value("seed", c.seed);
      const auto tr = section("trainer");
      reject_unknown(tr, {"lr", "batch_size", "epochs", "max_span_len", "ce_baseline"},
                     "trainer");
      c.lr = tr.value("lr", c.lr);
      c.batch_size = tr.value("batch_size", c.batch_size);
      c.epochs = tr.value("epochs", c.epochs);
      c.max_span_len = tr.value("max_span_len", c.max_span_len);
      c.ce_baseline = tr.value("ce_baseline", c.ce_baseline);

      const auto enc = section("encoder");
      reject_unknown(enc, {"kind", "d_h", "window", "table_path"}, "encoder");
      c.encoder.kind = encoder_kind_from_string(
          enc.value("kind", to_string(c.encoder.kind)));
      c.encoder.d_h = enc.value("d_h", c.encoder.d_h);
      c.encoder.window = enc.value("window", c.encoder.window);
      c.encoder.table_path = enc.value("table_path", c.encoder.table_path);

      const auto mo = section("model");
      reject_unknown(mo, {"d_r", "use_bias"}, "model");
      c.d_r = mo.value("d_r", c.d_r);
      c.use_bias = mo.value("use_bias", c.use_bias);

      const auto me = section("memory");
      reject_unknown(me, {"G", "lambda"}, "memory");
      c.G = me.value("G", c.G);
      c.lambda = me.value("lambda", c.lambda);

      const auto lo = section("losses");
      reject_unknown(lo, {"alpha", "gamma", "tau", "q", "p", "eta", "cl_denominator"},
                     "losses");
      c.alpha = lo.value("alpha", c.alpha);
      c.gamma = lo.value("gamma", c.gamma);
      c.tau = lo.value("tau", c.tau);
      c.q = lo.value("q", c.q);
      c.p = lo.value("p", c.p);
      c.eta = lo.value("eta", c.eta);
      c.cl_denominator = cl_denominator_from_string(
          lo.value("cl_denominator", to_string(c.cl_denominator)));

      const auto mx = section("mixup");
      reject_unknown(mx, {"epsilon", "alpha_prime", "cache_capacity", "mixup_weight"},
                     "mixup");
      c.epsilon = mx.value("epsilon", c.epsilon);
      c.alpha_prime = mx.value("alpha_prime", c.alpha_prime);
      c.cache_capacity = mx.value("cache_capacity", c.cache_capacity);
      c.mixup_weight = mx.value("mixup_weight", c.mixup_weight);

      const auto kn = section("knn");
      reject_unknown(kn, {"k", "mu", "weighted"}, "knn");
      c.k = kn.value("k", c.k);
      c.mu = kn.value("mu", c.mu);
      c.knn_weighted = kn.value("weighted", c.knn_weighted);

      const auto pa = section("paths");
      reject_unknown(pa, {"train", "dev"}, "paths");
      c.train_path = pa.value("train", c.train_path);
      c.dev_path = pa.value("dev", c.dev_path);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("malformed config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path);
    out << to_json().dump(2) << '\n';
  }

  /// Stable identity of the effective configuration (hash of the
  /// canonical JSON dump; nlohmann objects serialize with sorted keys).
  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }
};

}  // namespace dsner
