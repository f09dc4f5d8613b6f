#include "acmg/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "acmg/error.hpp"
#include "acmg/rng.hpp"

namespace acmg {

GateTrace trace_sample(const FusionModel& model, const Sample& s) {
  if (model.config().gating_mode == GatingMode::none) {
    throw ConfigError("gate analysis needs a model with gating_mode unimodal or cross_modal");
  }
  const Prediction p = predict(model, model_input(s));
  GateTrace t;
  t.sample_id = s.id;
  t.label = s.label;
  t.gates_a = p.gates_a;
  t.gates_t = p.gates_t;
  t.energy = s.energy;
  t.negative_token_flags = s.negative_token_flags;
  t.diagnostic_a = s.diagnostic_a;
  t.diagnostic_t = s.diagnostic_t;
  return t;
}

std::vector<GateTrace> collect_traces(const FusionModel& model, const Corpus& corpus) {
  std::vector<GateTrace> out;
  out.reserve(corpus.size());
  for (const Sample& s : corpus.samples) out.push_back(trace_sample(model, s));
  return out;
}

CorrelationReport gate_energy_correlation(std::span<const GateTrace> traces, std::size_t n_classes) {
  CorrelationReport r;
  std::vector<double> all_g, all_e;
  std::vector<std::vector<double>> cls_g(n_classes), cls_e(n_classes);
  for (const GateTrace& t : traces) {
    if (!t.energy || t.gates_a.empty()) {
      ++r.skipped_traces;
      continue;
    }
    if (t.label >= n_classes) throw LabelError("gate_energy_correlation: label out of range in '" + t.sample_id + "'");
    const std::vector<double> e = t.energy->size() == t.gates_a.size()
                                      ? *t.energy
                                      : resample_linear(*t.energy, t.gates_a.size());
    all_g.insert(all_g.end(), t.gates_a.begin(), t.gates_a.end());
    all_e.insert(all_e.end(), e.begin(), e.end());
    cls_g[t.label].insert(cls_g[t.label].end(), t.gates_a.begin(), t.gates_a.end());
    cls_e[t.label].insert(cls_e[t.label].end(), e.begin(), e.end());
  }
  r.n_frames = all_g.size();
  r.overall = pearson(all_g, all_e);
  for (std::size_t c = 0; c < n_classes; ++c) {
    r.per_class.push_back(pearson(cls_g[c], cls_e[c]));
    r.frames_per_class.push_back(cls_g[c].size());
  }
  return r;
}

namespace {

std::optional<ModalityAlignment> align_modality(std::span<const GateTrace> traces, bool acoustic) {
  std::vector<double> scores;
  std::vector<std::uint8_t> flags;
  for (const GateTrace& t : traces) {
    const auto& f = acoustic ? t.diagnostic_a : t.diagnostic_t;
    const auto& g = acoustic ? t.gates_a : t.gates_t;
    if (!f || g.empty()) continue;
    if (f->size() != g.size()) {
      throw ShapeError("gate_diagnostic_alignment: '" + t.sample_id + "' has " + std::to_string(g.size()) +
                       " gates but " + std::to_string(f->size()) + " flags");
    }
    scores.insert(scores.end(), g.begin(), g.end());
    flags.insert(flags.end(), f->begin(), f->end());
  }
  if (scores.empty()) return std::nullopt;
  ModalityAlignment a;
  double sd = 0.0, so = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (flags[i]) {
      sd += scores[i];
      ++a.n_diagnostic;
    } else {
      so += scores[i];
      ++a.n_other;
    }
  }
  if (a.n_diagnostic == 0) return std::nullopt;
  a.mean_gate_diagnostic = sd / static_cast<double>(a.n_diagnostic);
  a.mean_gate_other = a.n_other ? so / static_cast<double>(a.n_other) : 0.0;
  a.gap = a.mean_gate_diagnostic - a.mean_gate_other;
  a.auroc = auroc(scores, flags);
  return a;
}

}  // namespace

AlignmentReport gate_diagnostic_alignment(std::span<const GateTrace> traces) {
  AlignmentReport r;
  r.acoustic = align_modality(traces, true);
  r.textual = align_modality(traces, false);
  if (!r.acoustic && !r.textual) {
    throw AnalysisError("gate_diagnostic_alignment: no trace carries diagnostic flags with gate values");
  }
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  const double n = static_cast<double>(values.size());
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / (n - 1.0));
  }
  return m;
}

namespace {

bool has_subjects(const Corpus& c) {
  return std::any_of(c.samples.begin(), c.samples.end(), [](const Sample& s) { return s.subject.has_value(); });
}

// Subject key; samples without one form their own unit.
std::string unit_key(const Sample& s) { return s.subject ? "subj:" + *s.subject : "sample:" + s.id; }

std::size_t majority(const std::vector<std::size_t>& counts) {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> subject_vote(
    const Corpus& corpus, std::span<const std::size_t> indices, std::span<const std::size_t> predictions,
    std::vector<std::string>* warnings) {
  if (indices.size() != predictions.size()) throw ShapeError("subject_vote: indices and predictions differ in length");
  const std::size_t C = corpus.n_classes();
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> votes;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = corpus.samples.at(indices[i]);
    const std::string key = unit_key(s);
    auto [it, fresh] = votes.try_emplace(key, std::vector<std::size_t>(C, 0), std::vector<std::size_t>(C, 0));
    if (fresh) order.push_back(key);
    if (predictions[i] >= C) throw LabelError("subject_vote: prediction out of range");
    ++it->second.first[predictions[i]];
    ++it->second.second[s.label];
  }
  std::vector<std::size_t> preds, labels;
  for (const auto& key : order) {
    const auto& [pv, lv] = votes.at(key);
    preds.push_back(majority(pv));
    labels.push_back(majority(lv));
    if (warnings && std::count_if(lv.begin(), lv.end(), [](std::size_t n) { return n > 0; }) > 1) {
      warnings->push_back("subject '" + key.substr(5) + "' has samples with different labels; using the majority label");
    }
  }
  return {preds, labels};
}

std::vector<std::size_t> assign_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  // Units are subjects when present, else samples.
  std::vector<std::string> keys;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string key = unit_key(corpus.samples[i]);
    auto [it, fresh] = members.try_emplace(key);
    if (fresh) keys.push_back(key);
    it->second.push_back(i);
  }
  if (keys.size() < 2 * k) {
    throw ConfigError("kfold: " + std::to_string(keys.size()) + (has_subjects(corpus) ? " subjects" : " samples") +
                      " cannot support k=" + std::to_string(k) + " (need at least 2k)");
  }
  // Shuffle units, group by label (stable), then deal round-robin so each
  // fold gets a near-equal share of every class.
  std::mt19937_64 rng(derive_seed(seed, {0xf01du}));
  std::shuffle(keys.begin(), keys.end(), rng);
  auto unit_label = [&](const std::string& key) {
    std::vector<std::size_t> counts(corpus.n_classes(), 0);
    for (std::size_t i : members.at(key)) ++counts.at(corpus.samples[i].label);
    return majority(counts);
  };
  std::stable_sort(keys.begin(), keys.end(),
                   [&](const std::string& a, const std::string& b) { return unit_label(a) < unit_label(b); });
  std::vector<std::size_t> fold_of(corpus.size());
  for (std::size_t u = 0; u < keys.size(); ++u)
    for (std::size_t i : members.at(keys[u])) fold_of[i] = u % k;
  return fold_of;
}

namespace {

void fill_summary(EvalReport& r) {
  std::vector<double> acc, f1, p, rc;
  for (const auto& f : r.folds) {
    acc.push_back(f.metrics.accuracy);
    f1.push_back(f.metrics.macro_f1);
    p.push_back(f.metrics.macro_precision);
    rc.push_back(f.metrics.macro_recall);
  }
  r.accuracy = mean_std(acc);
  r.macro_f1 = mean_std(f1);
  r.macro_precision = mean_std(p);
  r.macro_recall = mean_std(rc);
}

void attach_gate_analyses(EvalReport& r, const std::vector<GateTrace>& traces) {
  if (traces.empty()) return;
  const bool any_energy = std::any_of(traces.begin(), traces.end(), [](const GateTrace& t) { return t.energy.has_value(); });
  if (any_energy) r.gate_energy = gate_energy_correlation(traces, r.class_names.size());
  const bool any_flags = std::any_of(traces.begin(), traces.end(), [](const GateTrace& t) {
    return t.diagnostic_a.has_value() || t.diagnostic_t.has_value();
  });
  if (any_flags) r.gate_alignment = gate_diagnostic_alignment(traces);
  if (r.gate_energy && !r.gate_energy->overall) {
    r.warnings.push_back("gate-energy correlation undefined (zero variance in gates or energy)");
  }
}

}  // namespace

EvalReport evaluate(const FusionModel& model, const Corpus& corpus) {
  if (corpus.size() == 0) throw std::invalid_argument("evaluate: empty corpus");
  corpus.validate();
  if (corpus.n_classes() != model.config().n_classes) {
    throw ConfigError("evaluate: corpus has " + std::to_string(corpus.n_classes()) + " classes, model expects " +
                      std::to_string(model.config().n_classes));
  }
  EvalReport r;
  r.class_names = corpus.class_names;
  r.n_samples = corpus.size();
  r.subject_level = has_subjects(corpus);
  FoldResult f;
  f.test_indices.resize(corpus.size());
  std::iota(f.test_indices.begin(), f.test_indices.end(), 0);
  std::vector<GateTrace> traces;
  for (const Sample& s : corpus.samples) {
    const Prediction p = predict(model, model_input(s));
    f.predictions.push_back(p.label);
    if (model.config().gating_mode != GatingMode::none) {
      traces.push_back({s.id, s.label, p.gates_a, p.gates_t, s.energy, s.negative_token_flags,
                        s.diagnostic_a, s.diagnostic_t});
    }
  }
  auto [preds, labels] = subject_vote(corpus, f.test_indices, f.predictions, &r.warnings);
  f.metrics = compute_metrics(preds, labels, corpus.n_classes());
  r.metrics = f.metrics;
  for (const auto& w : f.metrics.warnings) r.warnings.push_back(w);
  r.folds.push_back(std::move(f));
  fill_summary(r);
  r.folds.clear();
  attach_gate_analyses(r, traces);
  return r;
}

EvalReport kfold(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const KFoldOptions& opts) {
  if (opts.k < 2) throw ConfigError("kfold: k must be at least 2");
  if (opts.threads == 0) throw ConfigError("kfold: threads must be at least 1");
  corpus.validate();
  model_cfg.validate();
  train_cfg.validate();
  std::vector<std::size_t> fold_of;
  if (opts.fold_of) {
    fold_of = *opts.fold_of;
    if (fold_of.size() != corpus.size()) throw ConfigError("kfold: fold_of must have one entry per sample");
    if (corpus.size() < 2 * opts.k) {
      throw ConfigError("kfold: " + std::to_string(corpus.size()) + " samples cannot support k=" +
                        std::to_string(opts.k) + " (need at least 2k)");
    }
    for (std::size_t f : fold_of)
      if (f >= opts.k) throw ConfigError("kfold: fold_of entry out of range");
  } else {
    fold_of = assign_folds(corpus, opts.k, opts.seed);
  }

  EvalReport r;
  r.class_names = corpus.class_names;
  r.n_samples = corpus.size();
  r.subject_level = has_subjects(corpus);
  r.folds.resize(opts.k);
  std::vector<std::vector<std::string>> fold_warnings(opts.k);

  auto run_fold = [&](std::size_t k) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < corpus.size(); ++i) (fold_of[i] == k ? te : tr).push_back(i);
    FoldResult& f = r.folds[k];
    f.fold = k;
    f.test_indices = te;
    if (te.empty() || tr.empty()) {
      throw ConfigError("kfold: fold " + std::to_string(k) + " has an empty train or test split");
    }
    const Corpus train_set = subset(corpus, tr);
    const Corpus test_set = subset(corpus, te);
    const auto train_counts = train_set.class_counts();
    for (std::size_t c = 0; c < train_counts.size(); ++c) {
      if (train_counts[c] == 0) {
        fold_warnings[k].push_back("fold " + std::to_string(k) + ": class '" + corpus.class_names[c] +
                                   "' absent from the training split");
      }
    }
    FusionModel model(model_cfg);
    f.history = train(model, train_set, nullptr, train_cfg);
    for (const Sample& s : test_set.samples) {
      const Prediction p = predict(model, model_input(s));
      f.predictions.push_back(p.label);
      if (model_cfg.gating_mode != GatingMode::none) {
        f.traces.push_back({s.id, s.label, p.gates_a, p.gates_t, s.energy, s.negative_token_flags,
                            s.diagnostic_a, s.diagnostic_t});
      }
    }
    auto [preds, labels] = subject_vote(corpus, te, f.predictions, &fold_warnings[k]);
    f.metrics = compute_metrics(preds, labels, corpus.n_classes());
    for (const auto& w : f.metrics.warnings) fold_warnings[k].push_back("fold " + std::to_string(k) + ": " + w);
  };

  const std::size_t workers = std::min(opts.threads, opts.k);
  if (workers <= 1) {
    for (std::size_t k = 0; k < opts.k; ++k) run_fold(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < opts.k; k = next++) {
          try {
            run_fold(k);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<std::size_t> all_idx, all_pred;
  std::vector<GateTrace> traces;
  for (std::size_t k = 0; k < opts.k; ++k) {
    const auto& f = r.folds[k];
    all_idx.insert(all_idx.end(), f.test_indices.begin(), f.test_indices.end());
    all_pred.insert(all_pred.end(), f.predictions.begin(), f.predictions.end());
    traces.insert(traces.end(), f.traces.begin(), f.traces.end());
    for (auto& w : fold_warnings[k]) r.warnings.push_back(std::move(w));
  }
  auto [preds, labels] = subject_vote(corpus, all_idx, all_pred);
  r.metrics = compute_metrics(preds, labels, corpus.n_classes());
  fill_summary(r);
  attach_gate_analyses(r, traces);
  return r;
}

// ---------------------------------------------------------------- reports

namespace {

using nlohmann::json;

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const ClassificationMetrics& m, const std::vector<std::string>& names) {
  json per = json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    per.push_back({{"class", names.at(c)},
                   {"precision", pc.precision},
                   {"recall", pc.recall},
                   {"f1", pc.f1},
                   {"support", pc.support},
                   {"predicted", pc.predicted}});
  }
  return {{"accuracy", m.accuracy},
          {"macro_f1", m.macro_f1},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"per_class", per},
          {"confusion", m.confusion}};
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

std::string report_json(const EvalReport& r) {
  json j;
  j["class_names"] = r.class_names;
  j["n_samples"] = r.n_samples;
  j["subject_level"] = r.subject_level;
  j["mode"] = r.folds.empty() ? "single" : "kfold";
  j["summary"] = {{"accuracy", mean_std_json(r.accuracy)},
                  {"macro_f1", mean_std_json(r.macro_f1)},
                  {"macro_precision", mean_std_json(r.macro_precision)},
                  {"macro_recall", mean_std_json(r.macro_recall)}};
  j["metrics"] = metrics_json(r.metrics, r.class_names);
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"n_test", f.test_indices.size()},
                     {"initial_train_loss", f.history.initial_train_loss},
                     {"final_train_loss", f.history.final_train_loss},
                     {"metrics", metrics_json(f.metrics, r.class_names)}});
  }
  j["folds"] = folds;
  if (r.gate_energy) {
    const auto& g = *r.gate_energy;
    json per = json::object();
    for (std::size_t c = 0; c < g.per_class.size(); ++c) per[r.class_names.at(c)] = opt_json(g.per_class[c]);
    j["gate_energy_correlation"] = {{"overall", opt_json(g.overall)},
                                    {"per_class", per},
                                    {"n_frames", g.n_frames},
                                    {"skipped_traces", g.skipped_traces}};
  } else {
    j["gate_energy_correlation"] = nullptr;
  }
  if (r.gate_alignment) {
    auto one = [](const std::optional<ModalityAlignment>& a) -> json {
      if (!a) return nullptr;
      return {{"mean_gate_diagnostic", a->mean_gate_diagnostic},
              {"mean_gate_other", a->mean_gate_other},
              {"gap", a->gap},
              {"auroc", opt_json(a->auroc)},
              {"n_diagnostic", a->n_diagnostic},
              {"n_other", a->n_other}};
    };
    j["gate_diagnostic_alignment"] = {{"acoustic", one(r.gate_alignment->acoustic)},
                                      {"textual", one(r.gate_alignment->textual)}};
  } else {
    j["gate_diagnostic_alignment"] = nullptr;
  }
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string per_class_csv(const EvalReport& r) {
  std::string out = "class,precision,recall,f1,support,predicted\n";
  for (std::size_t c = 0; c < r.metrics.per_class.size(); ++c) {
    const auto& pc = r.metrics.per_class[c];
    out += r.class_names.at(c) + "," + fmt(pc.precision) + "," + fmt(pc.recall) + "," + fmt(pc.f1) + "," +
           std::to_string(pc.support) + "," + std::to_string(pc.predicted) + "\n";
  }
  return out;
}

std::string confusion_csv(const EvalReport& r) {
  std::string out = "true\\predicted";
  for (const auto& n : r.class_names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < r.metrics.confusion.size(); ++i) {
    out += r.class_names.at(i);
    for (std::size_t v : r.metrics.confusion[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

std::string folds_csv(const EvalReport& r) {
  std::string out = "fold,n_test,accuracy,macro_f1,macro_precision,macro_recall,final_train_loss\n";
  for (const auto& f : r.folds) {
    out += std::to_string(f.fold) + "," + std::to_string(f.test_indices.size()) + "," + fmt(f.metrics.accuracy) +
           "," + fmt(f.metrics.macro_f1) + "," + fmt(f.metrics.macro_precision) + "," +
           fmt(f.metrics.macro_recall) + "," + fmt(f.history.final_train_loss) + "\n";
  }
  return out;
}

std::string correlation_csv(const CorrelationReport& corr, const std::vector<std::string>& class_names) {
  std::string out = "class,r,n_frames\n";
  for (std::size_t c = 0; c < corr.per_class.size(); ++c) {
    out += class_names.at(c) + "," + fmt(corr.per_class[c]) + "," + std::to_string(corr.frames_per_class[c]) + "\n";
  }
  out += "overall," + fmt(corr.overall) + "," + std::to_string(corr.n_frames) + "\n";
  return out;
}

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy,val_macro_f1\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.train_accuracy) + "," +
           fmt(e.val_loss) + "," + fmt(e.val_accuracy) + "," + fmt(e.val_macro_f1) + "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + dir.string() + "': " + ec.message());
  write_text_file(dir / "report.json", report_json(r));
  write_text_file(dir / "per_class.csv", per_class_csv(r));
  write_text_file(dir / "confusion.csv", confusion_csv(r));
  if (!r.folds.empty()) write_text_file(dir / "folds.csv", folds_csv(r));
  if (r.gate_energy) write_text_file(dir / "gate_energy_correlation.csv", correlation_csv(*r.gate_energy, r.class_names));
}

}  // namespace acmg
