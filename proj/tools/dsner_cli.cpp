// Command-line pipeline for the distantly-supervised NER toolkit:
// synthetic corpus generation, gazetteer labeling, noise auditing and
// injection, training, datastore building, evaluation, and prediction.
//
// Exit codes: 0 success, 2 argument/config validation, 3 I/O failure,
// 4 data or model error. Failures print one machine-readable JSON line
// to stderr: {"error":{"type":...,"message":...}}.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dsner/dsner.hpp"

namespace {

using nlohmann::json;

void print_warnings(const std::vector<dsner::ParseWarning>& warnings) {
  for (const auto& w : warnings)
    std::cerr << "warning: line " << w.line << ": " << w.message << '\n';
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw dsner::IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

/// Sidecar provenance record for artifacts that are not themselves JSON.
void write_meta(const std::string& artifact_path, const std::string& command,
                const json& effective_config) {
  write_json_file(artifact_path + ".meta.json",
                  json{{"command", command}, {"config", effective_config}});
}

/// Optional per-flag overrides layered on top of a config file.
struct ConfigOverrides {
  std::optional<std::string> profile;
  std::optional<double> lr, lambda, epsilon, alpha, gamma, tau, mu, p, q,
      alpha_prime, eta, mixup_weight;
  std::optional<int> batch_size, epochs, max_span_len, G, k, d_r, d_h, window,
      cache_capacity;
  std::optional<std::uint64_t> seed;
  std::optional<bool> ce_baseline, use_bias;
  std::optional<std::string> encoder_kind, table_path, cl_denominator;

  void apply(dsner::RunConfig& cfg) const {
    if (profile) {
      dsner::RunConfig fresh = dsner::RunConfig::with_profile(*profile);
      fresh.encoder = cfg.encoder;  // keep file-provided encoder settings
      cfg = fresh;
    }
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(cfg.lr, lr);
    set(cfg.lambda, lambda);
    set(cfg.epsilon, epsilon);
    set(cfg.alpha, alpha);
    set(cfg.gamma, gamma);
    set(cfg.tau, tau);
    set(cfg.mu, mu);
    set(cfg.p, p);
    set(cfg.q, q);
    set(cfg.alpha_prime, alpha_prime);
    set(cfg.eta, eta);
    set(cfg.mixup_weight, mixup_weight);
    set(cfg.batch_size, batch_size);
    set(cfg.epochs, epochs);
    set(cfg.max_span_len, max_span_len);
    set(cfg.G, G);
    set(cfg.k, k);
    set(cfg.d_r, d_r);
    set(cfg.encoder.d_h, d_h);
    set(cfg.encoder.window, window);
    set(cfg.cache_capacity, cache_capacity);
    set(cfg.seed, seed);
    set(cfg.ce_baseline, ce_baseline);
    set(cfg.use_bias, use_bias);
    if (encoder_kind)
      cfg.encoder.kind = dsner::encoder_kind_from_string(*encoder_kind);
    set(cfg.encoder.table_path, table_path);
    if (cl_denominator)
      cfg.cl_denominator = dsner::cl_denominator_from_string(*cl_denominator);
    cfg.validate();
  }
};

/// Registers the hyperparameter flags shared by config-consuming commands.
void add_config_flags(CLI::App* cmd, std::string& config_path,
                      ConfigOverrides& ov) {
  cmd->add_option("--config", config_path, "JSON config file");
  cmd->add_option("--profile", ov.profile, "config profile: standard|small");
  cmd->add_option("--lr", ov.lr, "learning rate");
  cmd->add_option("--batch-size", ov.batch_size, "sentences per batch");
  cmd->add_option("--epochs", ov.epochs, "training epochs");
  cmd->add_option("--max-span-len", ov.max_span_len, "span candidate cap");
  cmd->add_option("--G", ov.G, "memory window size");
  cmd->add_option("--lambda", ov.lambda, "hard/soft target weight");
  cmd->add_option("--epsilon", ov.epsilon, "boundary-span confidence gate");
  cmd->add_option("--alpha", ov.alpha, "focal scale");
  cmd->add_option("--gamma", ov.gamma, "focal exponent");
  cmd->add_option("--tau", ov.tau, "contrastive temperature");
  cmd->add_option("--mu", ov.mu, "neighbour interpolation weight");
  cmd->add_option("--p", ov.p, "sparse-regularization exponent");
  cmd->add_option("--q", ov.q, "generalized-CE exponent");
  cmd->add_option("--alpha-prime", ov.alpha_prime, "mixup Beta parameter");
  cmd->add_option("--eta", ov.eta, "entity-vs-contrastive weight");
  cmd->add_option("--k", ov.k, "neighbours retrieved per span");
  cmd->add_option("--seed", ov.seed, "run seed");
  cmd->add_option("--d-r", ov.d_r, "span representation width");
  cmd->add_option("--d-h", ov.d_h, "token vector width");
  cmd->add_option("--window", ov.window, "encoder context radius");
  cmd->add_option("--encoder-kind", ov.encoder_kind, "toy|pretrained-adapter");
  cmd->add_option("--table-path", ov.table_path, "pretrained vector table");
  cmd->add_option("--cl-denominator", ov.cl_denominator, "all|different-label");
  cmd->add_option("--cache-capacity", ov.cache_capacity, "mixup cache per class");
  cmd->add_option("--mixup-weight", ov.mixup_weight, "augmentation loss weight");
  cmd->add_flag("--ce-baseline,!--no-ce-baseline", ov.ce_baseline,
                "plain cross-entropy objective");
  cmd->add_flag("--use-bias,!--no-bias", ov.use_bias, "affine layer biases");
}

dsner::RunConfig effective_config(const std::string& config_path,
                                  const ConfigOverrides& ov) {
  dsner::RunConfig cfg = config_path.empty() ? dsner::RunConfig()
                                             : dsner::RunConfig::load(config_path);
  ov.apply(cfg);
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Distantly-supervised NER toolkit"};
  app.require_subcommand(1);

  // --- make-synthetic ------------------------------------------------------
  auto* mk = app.add_subcommand(
      "make-synthetic", "Generate a gold-labeled synthetic corpus + gazetteer");
  int mk_train = 2000, mk_dev = 400, mk_test = 500;
  std::uint64_t mk_seed = 42;
  std::string mk_out;
  mk->add_option("--train-sentences", mk_train, "training sentences");
  mk->add_option("--dev-sentences", mk_dev, "dev sentences");
  mk->add_option("--test-sentences", mk_test, "test sentences");
  mk->add_option("--seed", mk_seed, "generator seed");
  mk->add_option("--out-dir", mk_out, "output directory")->required();

  // --- label ---------------------------------------------------------------
  auto* lb = app.add_subcommand(
      "label", "Distantly annotate a corpus by gazetteer matching");
  std::string lb_input, lb_gaz, lb_output;
  lb->add_option("--input", lb_input, "CoNLL corpus")->required();
  lb->add_option("--gazetteer", lb_gaz, "TSV surface<TAB>type")->required();
  lb->add_option("--output", lb_output, "distant CoNLL output")->required();

  // --- analyze-noise -------------------------------------------------------
  auto* an = app.add_subcommand(
      "analyze-noise", "Token-level noise rates of distant vs gold labels");
  std::string an_gold, an_distant, an_output;
  an->add_option("--gold", an_gold, "gold CoNLL corpus")->required();
  an->add_option("--distant", an_distant, "distant CoNLL corpus")->required();
  an->add_option("--output", an_output, "report JSON path");

  // --- inject-noise --------------------------------------------------------
  auto* in_ = app.add_subcommand(
      "inject-noise", "Corrupt gold annotation with flips and drops");
  std::string in_input, in_output;
  double in_flip = 0.0, in_drop = 0.0;
  std::uint64_t in_seed = 42;
  std::vector<std::string> in_multipliers;
  in_->add_option("--input", in_input, "gold CoNLL corpus")->required();
  in_->add_option("--output", in_output, "distant CoNLL output")->required();
  in_->add_option("--flip-rate", in_flip, "per-span type-flip probability");
  in_->add_option("--drop-rate", in_drop, "per-span drop probability");
  in_->add_option("--drop-multiplier", in_multipliers,
                  "TYPE=FACTOR drop-rate scaling, repeatable");
  in_->add_option("--seed", in_seed, "noise seed");

  // --- train ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train a model on distant labels");
  std::string tr_train, tr_dev, tr_ckpt, tr_metrics, tr_config;
  ConfigOverrides tr_ov;
  tr->add_option("--train", tr_train, "distant-labeled CoNLL corpus")->required();
  tr->add_option("--dev", tr_dev, "gold-labeled CoNLL dev corpus")->required();
  tr->add_option("--checkpoint", tr_ckpt, "checkpoint output path")->required();
  tr->add_option("--metrics", tr_metrics, "per-epoch JSONL output path");
  add_config_flags(tr, tr_config, tr_ov);

  // --- build-datastore -----------------------------------------------------
  auto* bd = app.add_subcommand(
      "build-datastore", "Cache training entity representations for retrieval");
  std::string bd_ckpt, bd_train, bd_output;
  bd->add_option("--checkpoint", bd_ckpt, "trained checkpoint")->required();
  bd->add_option("--train", bd_train, "distant-labeled CoNLL corpus")->required();
  bd->add_option("--output", bd_output, "datastore output path")->required();

  // --- eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Entity-level P/R/F1 on gold labels");
  std::string ev_ckpt, ev_input, ev_store, ev_output, ev_config;
  ConfigOverrides ev_ov;
  ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
  ev->add_option("--input", ev_input, "gold-labeled CoNLL corpus")->required();
  ev->add_option("--datastore", ev_store, "neighbour datastore (optional)");
  ev->add_option("--output", ev_output, "result JSON path (also printed)");
  add_config_flags(ev, ev_config, ev_ov);

  // --- predict -------------------------------------------------------------
  auto* pr = app.add_subcommand("predict", "Decode entities in raw text");
  std::string pr_ckpt, pr_input, pr_store, pr_output, pr_config;
  ConfigOverrides pr_ov;
  pr->add_option("--checkpoint", pr_ckpt, "trained checkpoint")->required();
  pr->add_option("--input", pr_input,
                 "raw text, one whitespace-tokenized sentence per line")
      ->required();
  pr->add_option("--datastore", pr_store, "neighbour datastore (optional)");
  pr->add_option("--output", pr_output, "CoNLL output path")->required();
  add_config_flags(pr, pr_config, pr_ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  }
  // Other CLI::ParseError subclasses propagate to main -> usage error, exit 2.

  if (mk->parsed()) {
    using namespace dsner;
    std::error_code ec;
    std::filesystem::create_directories(mk_out, ec);
    if (ec) throw IoError("cannot create output directory '" + mk_out + "'");
    auto write_split = [&](const char* name, int n, std::uint64_t tag) {
      const auto corpus =
          synthetic::generate(n, Rng::mix(mk_seed, tag));
      save_conll(mk_out + "/" + name, corpus, AnnotationLayer::kGold);
    };
    write_split("train.conll", mk_train, 1);
    write_split("dev.conll", mk_dev, 2);
    write_split("test.conll", mk_test, 3);
    std::ofstream gaz(mk_out + "/gazetteer.tsv");
    if (!gaz) throw IoError("cannot write gazetteer in '" + mk_out + "'");
    for (const std::string& type : synthetic::entity_types()) {
      for (const std::string& s : synthetic::detail::pool(type))
        gaz << s << '\t' << type << '\n';
      for (const std::string& s : synthetic::detail::ambiguous(type))
        gaz << s << '\t' << type << '\n';
    }
    json meta{{"seed", mk_seed},
              {"train_sentences", mk_train},
              {"dev_sentences", mk_dev},
              {"test_sentences", mk_test}};
    write_json_file(mk_out + "/corpus.meta.json", meta);
    std::cout << "wrote train/dev/test + gazetteer under " << mk_out << '\n';
    return 0;
  }

  if (lb->parsed()) {
    using namespace dsner;
    std::vector<ParseWarning> warnings;
    auto corpus = load_conll(lb_input, AnnotationLayer::kGold, &warnings);
    print_warnings(warnings);
    const Gazetteer gaz = Gazetteer::load(lb_gaz);
    for (Sentence& s : corpus) s.distant_spans = match_gazetteer(s, gaz);
    save_conll(lb_output, corpus, AnnotationLayer::kDistant);
    write_meta(lb_output, "label",
               json{{"input", lb_input}, {"gazetteer", lb_gaz}});
    std::cout << "labeled " << corpus.size() << " sentences\n";
    return 0;
  }

  if (an->parsed()) {
    using namespace dsner;
    std::vector<ParseWarning> warnings;
    const auto gold = load_conll(an_gold, AnnotationLayer::kGold, &warnings);
    const auto distant = load_conll(an_distant, AnnotationLayer::kDistant, &warnings);
    print_warnings(warnings);
    const NoiseReport report = compute_noise_rates(gold, distant);
    json out = report.to_json();
    out["gold"] = an_gold;
    out["distant"] = an_distant;
    std::cout << out.dump(2) << '\n';
    if (!an_output.empty()) write_json_file(an_output, out);
    return 0;
  }

  if (in_->parsed()) {
    using namespace dsner;
    std::vector<ParseWarning> warnings;
    const auto gold = load_conll(in_input, AnnotationLayer::kGold, &warnings);
    print_warnings(warnings);
    std::map<std::string, double> multipliers;
    for (const std::string& spec : in_multipliers) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--drop-multiplier expects TYPE=FACTOR: " + spec);
      multipliers[spec.substr(0, eq)] = std::stod(spec.substr(eq + 1));
    }
    NoiseInjectionStats stats;
    const auto noisy =
        inject_noise(gold, in_flip, in_drop, multipliers, in_seed, &stats);
    save_conll(in_output, noisy, AnnotationLayer::kDistant);
    json meta{{"command", "inject-noise"},
              {"flip_rate", in_flip},
              {"drop_rate", in_drop},
              {"seed", in_seed},
              {"kept", stats.kept},
              {"flipped", stats.flipped},
              {"dropped", stats.dropped}};
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << '\n';
    write_json_file(in_output + ".meta.json", meta);
    std::cout << "kept " << stats.kept << ", flipped " << stats.flipped
              << ", dropped " << stats.dropped << '\n';
    return 0;
  }

  if (tr->parsed()) {
    using namespace dsner;
    RunConfig cfg = effective_config(tr_config, tr_ov);
    cfg.train_path = tr_train;
    cfg.dev_path = tr_dev;
    std::vector<ParseWarning> warnings;
    const auto train_corpus =
        load_conll(tr_train, AnnotationLayer::kDistant, &warnings);
    const auto dev_corpus = load_conll(tr_dev, AnnotationLayer::kGold, &warnings);
    print_warnings(warnings);
    const TrainResult result = train(cfg, train_corpus, dev_corpus);
    result.checkpoint.save(tr_ckpt);
    if (!tr_metrics.empty()) {
      std::ofstream out(tr_metrics);
      if (!out) throw IoError("cannot write '" + tr_metrics + "'");
      out << json{{"config", cfg.to_json()}}.dump() << '\n';
      for (const EpochMetrics& em : result.metrics)
        out << em.to_json().dump() << '\n';
    }
    write_meta(tr_ckpt, "train", cfg.to_json());
    std::cout << json{{"best_epoch", result.best_epoch},
                      {"best_dev_f1", result.best_dev_f1}}
                     .dump()
              << '\n';
    return 0;
  }

  if (bd->parsed()) {
    using namespace dsner;
    const Checkpoint ckpt = Checkpoint::load(bd_ckpt);
    std::vector<ParseWarning> warnings;
    const auto corpus = load_conll(bd_train, AnnotationLayer::kDistant, &warnings);
    print_warnings(warnings);
    ckpt.verify_labels(LabelSet::from_corpus(corpus, AnnotationLayer::kDistant));
    const Model model = ckpt.to_model();
    const DataStore ds = build_datastore(model, ckpt.content_hash, corpus);
    ds.save(bd_output);
    write_meta(bd_output, "build-datastore",
               json{{"checkpoint", bd_ckpt},
                    {"checkpoint_hash", ckpt.content_hash},
                    {"train", bd_train}});
    std::cout << "datastore with " << ds.size() << " entries\n";
    return 0;
  }

  if (ev->parsed()) {
    using namespace dsner;
    const RunConfig cfg = effective_config(ev_config, ev_ov);
    const Checkpoint ckpt = Checkpoint::load(ev_ckpt);
    const Model model = ckpt.to_model();
    std::vector<ParseWarning> warnings;
    const auto corpus = load_conll(ev_input, AnnotationLayer::kGold, &warnings);
    print_warnings(warnings);
    ckpt.verify_labels(LabelSet::from_corpus(corpus, AnnotationLayer::kGold));
    std::optional<DataStore> store;
    if (!ev_store.empty()) {
      store = DataStore::load(ev_store);
      store->verify_checkpoint(ckpt.content_hash);
    }
    const EvalResult res =
        evaluate(model, corpus, cfg.max_span_len, store ? &*store : nullptr,
                 cfg.mu, cfg.k, cfg.knn_weighted);
    json out = res.to_json();
    out["config"] = cfg.to_json();
    std::cout << out.dump(2) << '\n';
    if (!ev_output.empty()) write_json_file(ev_output, out);
    return 0;
  }

  if (pr->parsed()) {
    using namespace dsner;
    const RunConfig cfg = effective_config(pr_config, pr_ov);
    const Checkpoint ckpt = Checkpoint::load(pr_ckpt);
    const Model model = ckpt.to_model();
    std::optional<DataStore> store;
    if (!pr_store.empty()) {
      store = DataStore::load(pr_store);
      store->verify_checkpoint(ckpt.content_hash);
    }
    std::ifstream in(pr_input);
    if (!in) throw IoError("cannot open '" + pr_input + "'");
    std::vector<Sentence> decoded;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      Sentence s;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) s.tokens.push_back(tok);
      if (s.tokens.empty()) continue;
      s.distant_spans =
          decode(model, s.tokens, cfg.max_span_len, store ? &*store : nullptr,
                 cfg.mu, cfg.k, cfg.knn_weighted);
      decoded.push_back(std::move(s));
    }
    save_conll(pr_output, decoded, AnnotationLayer::kDistant);
    write_meta(pr_output, "predict", cfg.to_json());
    std::cout << "decoded " << decoded.size() << " sentences\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto fail = [](const char* type, const std::string& message, int code) {
    std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump()
              << std::endl;
    return code;
  };
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("validation", e.what(), 2);
  } catch (const dsner::IoError& e) {
    return fail("io", e.what(), 3);
  } catch (const dsner::ParseError& e) {
    return fail("parse", e.what(), 4);
  } catch (const dsner::Error& e) {
    return fail("data", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
