// acmg: command-line entry point for the gated multimodal classifier.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acmg/analysis.hpp"
#include "acmg/checkpoint.hpp"
#include "acmg/config.hpp"
#include "acmg/corpus_io.hpp"
#include "acmg/error.hpp"
#include "acmg/model_gradcheck.hpp"
#include "acmg/synth.hpp"
#include "acmg/train.hpp"

namespace fs = std::filesystem;
using namespace acmg;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  int verbosity = 1;  // 0 quiet, 1 normal, 2 verbose
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "JSON config file (sections: synth, model, train, eval)")
      ->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out_dir, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", c.seed, "Override every seed in the config");
  cmd->add_option("--threads", c.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag_callback("-q,--quiet", [&c] { c.verbosity = 0; }, "Only print errors");
  cmd->add_flag_callback("-v,--verbose", [&c] { c.verbosity = 2; }, "Print per-epoch progress");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) {
    cfg.synth.seed = *c.seed;
    cfg.model.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (c.threads) cfg.eval.threads = *c.threads;
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

void echo_config(const fs::path& out, const RunConfig& cfg) {
  write_text_file(out / "effective_config.json", dump_json(to_json(cfg)));
}

// Input widths and class count always come from the corpus.
void fit_to_corpus(ModelConfig& m, const Corpus& c) {
  m.input_dim_a = c.d_a;
  m.input_dim_t = c.d_t;
  m.n_classes = c.n_classes();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_summary(const Corpus& c, const CorpusFiles& files) {
  const auto counts = c.class_counts();
  std::cout << "samples: " << c.size() << "  d_a: " << c.d_a << "  d_t: " << c.d_t << "\n";
  std::cout << "classes:";
  for (std::size_t k = 0; k < counts.size(); ++k) std::cout << " " << c.class_names[k] << "=" << counts[k];
  std::cout << "\n";
  auto stats = [&](bool acoustic) {
    std::size_t lo = SIZE_MAX, hi = 0, sum = 0;
    for (const auto& s : c.samples) {
      const std::size_t t = acoustic ? s.acoustic.valid_count() : s.textual.valid_count();
      lo = std::min(lo, t);
      hi = std::max(hi, t);
      sum += t;
    }
    return "min " + std::to_string(lo) + " mean " + fmt(static_cast<double>(sum) / static_cast<double>(c.size()), 2) +
           " max " + std::to_string(hi);
  };
  std::cout << "acoustic length: " << stats(true) << "\n";
  std::cout << "textual length:  " << stats(false) << "\n";
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", files.blob_crc32);
  std::cout << "blob: " << files.blob_bytes << " bytes, crc32 " << crc << "\n";
}

void print_metrics(const EvalReport& r) {
  const bool kf = !r.folds.empty();
  std::cout << (kf ? "k-fold (" + std::to_string(r.folds.size()) + " folds, mean +- std)" : std::string("held-out"))
            << (r.subject_level ? ", subject level" : "") << "\n";
  auto line = [&](const char* name, const MeanStd& m) {
    std::cout << "  " << name << ": " << fmt(m.mean) << (kf ? " +- " + fmt(m.std) : "") << "\n";
  };
  line("accuracy       ", r.accuracy);
  line("macro_f1       ", r.macro_f1);
  line("macro_precision", r.macro_precision);
  line("macro_recall   ", r.macro_recall);
  if (r.gate_energy) {
    std::cout << "  gate-energy r (overall): " << (r.gate_energy->overall ? fmt(*r.gate_energy->overall) : "NA") << "\n";
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

// ------------------------------------------------------------------ generate

int cmd_generate(const Common& c) {
  RunConfig cfg = base_config(c);
  cfg.synth.validate();
  const fs::path out = prepare_out(c.out_dir);
  const Corpus corpus = generate(cfg.synth);
  const CorpusFiles files = write_corpus(corpus, out);
  echo_config(out, cfg);
  if (c.verbosity > 0) print_summary(corpus, files);
  return 0;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus;
  std::string gating_mode;
  std::optional<std::size_t> epochs;
  std::string resume;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  RunConfig cfg = base_config(c);
  if (!a.gating_mode.empty()) cfg.model.gating_mode = parse_gating_mode(a.gating_mode);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  const Corpus corpus = read_corpus(a.corpus);
  fit_to_corpus(cfg.model, corpus);
  cfg.model.validate();
  cfg.train.validate();
  const fs::path out = prepare_out(c.out_dir);
  echo_config(out, cfg);

  const auto [tr_idx, val_idx] = split_indices(corpus.size(), cfg.train.val_fraction, cfg.train.seed);
  if (tr_idx.empty()) throw ConfigError("train: val_fraction leaves no training samples");
  const Corpus train_set = subset(corpus, tr_idx);
  const Corpus val_set = subset(corpus, val_idx);

  FusionModel model(cfg.model);
  OptimizerState state;
  if (!a.resume.empty()) {
    Checkpoint ck = read_checkpoint(a.resume);
    if (!ck.optimizer) throw ConfigError("--resume: checkpoint '" + a.resume + "' has no optimizer state");
    if (!(ck.config == cfg.model)) {
      throw ConfigError("--resume: checkpoint model config differs from the effective config:\n  checkpoint: " +
                        to_json(ck.config).dump() + "\n  effective:  " + to_json(cfg.model).dump());
    }
    model = restore_model(ck);
    state = std::move(*ck.optimizer);
    if (c.verbosity > 0) std::cout << "resuming after epoch " << state.epochs_done << "\n";
  }

  TrainHistory history;
  try {
    history = train(model, train_set, val_set.size() ? &val_set : nullptr, cfg.train, &state);
  } catch (const TrainingAborted&) {
    save_checkpoint(model, nullptr, out / "last_good.ckpt");
    std::cerr << "last good parameters written to " << (out / "last_good.ckpt").string() << "\n";
    throw;
  }
  save_checkpoint(model, &state, out / "model.ckpt");
  write_text_file(out / "history.csv", history_csv(history));

  if (c.verbosity > 1) {
    for (const auto& e : history.epochs) {
      std::cout << "epoch " << e.epoch << " loss " << fmt(e.train_loss) << " acc " << fmt(e.train_accuracy)
                << (e.val_accuracy ? " val_acc " + fmt(*e.val_accuracy) : "") << "\n";
    }
  }
  if (c.verbosity > 0) {
    std::cout << "gating_mode: " << to_string(cfg.model.gating_mode) << "  parameters: " << model.parameter_count()
              << "  epochs: " << state.epochs_done << "\n";
    std::cout << "train loss: " << fmt(history.initial_train_loss) << " -> " << fmt(history.final_train_loss) << "\n";
    if (!history.epochs.empty() && history.epochs.back().val_accuracy) {
      std::cout << "val accuracy: " << fmt(*history.epochs.back().val_accuracy) << "\n";
    }
    std::cout << "checkpoint: " << (out / "model.ckpt").string() << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------ evaluate

struct EvalArgs {
  std::string corpus;
  std::string checkpoint;
  bool kfold = false;
  std::optional<std::size_t> folds;
  std::string gating_mode;
  std::optional<std::size_t> epochs;
};

int cmd_evaluate(const Common& c, const EvalArgs& a) {
  RunConfig cfg = base_config(c);
  if (a.folds) cfg.eval.folds = *a.folds;
  if (!a.gating_mode.empty()) cfg.model.gating_mode = parse_gating_mode(a.gating_mode);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.checkpoint.empty() == !a.kfold) throw ConfigError("evaluate: give exactly one of --checkpoint or --kfold");
  const Corpus corpus = read_corpus(a.corpus);
  const fs::path out = prepare_out(c.out_dir);

  EvalReport report;
  if (!a.checkpoint.empty()) {
    const FusionModel model = restore_model(read_checkpoint(a.checkpoint));
    cfg.model = model.config();
    echo_config(out, cfg);
    report = evaluate(model, corpus);
  } else {
    fit_to_corpus(cfg.model, corpus);
    cfg.model.validate();
    cfg.train.validate();
    cfg.eval.validate();
    echo_config(out, cfg);
    KFoldOptions opts;
    opts.k = cfg.eval.folds;
    opts.threads = cfg.eval.threads;
    opts.seed = cfg.train.seed;
    report = kfold(corpus, cfg.model, cfg.train, opts);
  }
  write_report(report, out);
  if (c.verbosity > 0) print_metrics(report);
  return 0;
}

// ------------------------------------------------------------ analyze-gating

struct AnalyzeArgs {
  std::string corpus;
  std::string checkpoint;
  std::vector<std::string> samples;
};

int cmd_analyze(const Common& c, const AnalyzeArgs& a) {
  RunConfig cfg = base_config(c);
  if (!a.samples.empty()) cfg.eval.plot_samples = a.samples;
  const Corpus corpus = read_corpus(a.corpus);
  const FusionModel model = restore_model(read_checkpoint(a.checkpoint));
  cfg.model = model.config();
  const fs::path out = prepare_out(c.out_dir);
  echo_config(out, cfg);

  const auto traces = collect_traces(model, corpus);
  const auto corr = gate_energy_correlation(traces, corpus.n_classes());
  write_text_file(out / "gate_energy_correlation.csv", correlation_csv(corr, corpus.class_names));

  nlohmann::json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t k = 0; k < corr.per_class.size(); ++k) per[corpus.class_names[k]] = opt(corr.per_class[k]);
  j["gate_energy_correlation"] = {{"overall", opt(corr.overall)}, {"per_class", per}, {"n_frames", corr.n_frames},
                                  {"skipped_traces", corr.skipped_traces}};
  const bool flagged = std::any_of(traces.begin(), traces.end(),
                                   [](const GateTrace& t) { return t.diagnostic_a || t.diagnostic_t; });
  j["gate_diagnostic_alignment"] = nullptr;
  if (flagged) {
    const auto al = gate_diagnostic_alignment(traces);
    auto one = [&](const std::optional<ModalityAlignment>& m) -> nlohmann::json {
      if (!m) return nullptr;
      return {{"mean_gate_diagnostic", m->mean_gate_diagnostic}, {"mean_gate_other", m->mean_gate_other},
              {"gap", m->gap}, {"auroc", opt(m->auroc)}, {"n_diagnostic", m->n_diagnostic},
              {"n_other", m->n_other}};
    };
    j["gate_diagnostic_alignment"] = {{"acoustic", one(al.acoustic)}, {"textual", one(al.textual)}};
  }
  write_text_file(out / "gating_analysis.json", j.dump(2) + "\n");

  if (!cfg.eval.plot_samples.empty()) {
    const fs::path plots = out / "traces";
    fs::create_directories(plots);
    for (const auto& id : cfg.eval.plot_samples) {
      const auto it = std::find_if(traces.begin(), traces.end(), [&](const GateTrace& t) { return t.sample_id == id; });
      if (it == traces.end()) throw ConfigError("analyze-gating: no sample with id '" + id + "' in the corpus");
      export_trace_plot(*it, plots / (id + ".svg"));
    }
  }

  if (c.verbosity > 0) {
    std::cout << "gate-energy Pearson r (frames pooled)\n";
    for (std::size_t k = 0; k < corr.per_class.size(); ++k) {
      std::cout << "  " << corpus.class_names[k] << ": "
                << (corr.per_class[k] ? fmt(*corr.per_class[k], 3) : "NA") << "\n";
    }
    std::cout << "  overall: " << (corr.overall ? fmt(*corr.overall, 3) : "NA") << "\n";
    if (corr.skipped_traces) std::cerr << "warning: " << corr.skipped_traces << " samples without energy skipped\n";
    if (flagged && !j["gate_diagnostic_alignment"]["acoustic"].is_null()) {
      const auto& al = j["gate_diagnostic_alignment"]["acoustic"];
      std::cout << "acoustic gate vs diagnostic frames: gap " << fmt(al["gap"].get<double>()) << ", AUROC "
                << (al["auroc"].is_null() ? std::string("NA") : fmt(al["auroc"].get<double>())) << "\n";
    }
    if (!cfg.eval.plot_samples.empty()) std::cout << "plots: " << cfg.eval.plot_samples.size() << " written\n";
  }
  return 0;
}

// ----------------------------------------------------------------- gradcheck

struct GradArgs {
  std::string gating_mode;  // empty: all three
  std::string corrupt;
  double step = 1e-5;
  double tol = 1e-4;
};

int cmd_gradcheck(const Common& c, const GradArgs& a) {
  std::vector<GatingMode> modes;
  if (a.gating_mode.empty()) {
    modes = {GatingMode::none, GatingMode::unimodal, GatingMode::cross_modal};
  } else {
    modes = {parse_gating_mode(a.gating_mode)};
  }
  // Only the file's model section applies, layered over the small check model.
  nlohmann::json model_overrides;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig validated = parse_run_config(ss.str());  // rejects unknown keys
    (void)validated;
    const auto j = nlohmann::json::parse(ss.str());
    if (j.contains("model")) model_overrides = j["model"];
  }
  ModelGradcheckOptions opts;
  opts.step = a.step;
  opts.tol = a.tol;
  if (!a.corrupt.empty()) opts.corrupt_parameter = a.corrupt;

  nlohmann::json all = nlohmann::json::array();
  std::string csv = "gating_mode,parameter,count,max_rel_error,passed\n";
  bool ok = true;
  for (GatingMode mode : modes) {
    ModelConfig mc = gradcheck_model_config(mode);
    if (!model_overrides.is_null()) apply_json(model_overrides, mc);
    mc.gating_mode = mode;
    if (c.seed) mc.seed = *c.seed;
    mc.validate();
    const auto rep = gradcheck_model(mc, opts);
    ok = ok && rep.passed;
    if (c.verbosity > 0) {
      std::cout << "gating_mode " << to_string(mode) << ": " << (rep.passed ? "PASS" : "FAIL")
                << "  worst relative error " << rep.max_rel_error << " (tol " << rep.tol << ")\n";
    }
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.entries) {
      if (c.verbosity > 1 || (!e.passed && c.verbosity > 0)) {
        std::cout << "  " << (e.passed ? "ok  " : "FAIL") << " " << e.name << " [" << e.count
                  << "] max rel err " << e.max_rel_error << "\n";
      }
      char num[32];
      std::snprintf(num, sizeof num, "%.6g", e.max_rel_error);
      csv += std::string(to_string(mode)) + "," + e.name + "," + std::to_string(e.count) + "," + num + "," +
             (e.passed ? "true" : "false") + "\n";
      entries.push_back({{"name", e.name}, {"count", e.count}, {"max_rel_error", e.max_rel_error},
                         {"worst_index", e.worst_index}, {"analytic", e.worst_analytic},
                         {"numeric", e.worst_numeric}, {"passed", e.passed}});
    }
    all.push_back({{"gating_mode", std::string(to_string(mode))}, {"passed", rep.passed},
                   {"max_rel_error", rep.max_rel_error}, {"tol", rep.tol}, {"parameters", entries}});
  }
  if (!c.out_dir.empty()) {
    const fs::path out = prepare_out(c.out_dir);
    write_text_file(out / "gradcheck.json", all.dump(2) + "\n");
    write_text_file(out / "gradcheck.csv", csv);
  }
  if (!ok) {
    std::cerr << "error: gradient check failed; see the FAIL lines above\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive cross-modal gating classifier: data generation, training, evaluation, analysis"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus from the config's synth section");
  add_common(gen, common, true);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model; writes model.ckpt and history.csv");
  add_common(tr, common, true);
  tr->add_option("--corpus", ta.corpus, "Corpus directory or manifest")->required();
  tr->add_option("--gating-mode", ta.gating_mode, "none | unimodal | cross_modal");
  tr->add_option("--epochs", ta.epochs, "Total epochs (overrides train.epochs)");
  tr->add_option("--resume", ta.resume, "Continue from a checkpoint written by train")->check(CLI::ExistingFile);

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint, or run k-fold cross-validation");
  add_common(ev, common, true);
  ev->add_option("--corpus", ea.corpus, "Corpus directory or manifest")->required();
  ev->add_option("--checkpoint", ea.checkpoint, "Trained model")->check(CLI::ExistingFile);
  ev->add_flag("--kfold", ea.kfold, "Train and evaluate k models (eval.folds)");
  ev->add_option("--folds", ea.folds, "Override eval.folds");
  ev->add_option("--gating-mode", ea.gating_mode, "k-fold only: none | unimodal | cross_modal");
  ev->add_option("--epochs", ea.epochs, "k-fold only: override train.epochs");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze-gating", "Gate-energy correlation, diagnostic alignment and trace plots");
  add_common(an, common, true);
  an->add_option("--corpus", aa.corpus, "Corpus directory or manifest")->required();
  an->add_option("--checkpoint", aa.checkpoint, "Trained model with gating")->required()->check(CLI::ExistingFile);
  an->add_option("--samples", aa.samples, "Sample ids to plot (overrides eval.plot_samples)")->delimiter(',');

  GradArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  add_common(gc, common, false);
  gc->add_option("--gating-mode", ga.gating_mode, "Check one mode (default: all three)");
  gc->add_option("--corrupt-gradient", ga.corrupt, "Test hook: perturb the named parameter's analytic gradient");
  gc->add_option("--step", ga.step, "Central-difference step");
  gc->add_option("--tol", ga.tol, "Relative-error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*tr) return cmd_train(common, ta);
    if (*ev) return cmd_evaluate(common, ea);
    if (*an) return cmd_analyze(common, aa);
    if (*gc) return cmd_gradcheck(common, ga);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
