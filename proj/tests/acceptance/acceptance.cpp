// Acceptance run: one PASS/FAIL line per criterion. Exits 0 only when every
// criterion passes.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "acmg/analysis.hpp"
#include "acmg/corpus_io.hpp"
#include "acmg/error.hpp"
#include "acmg/gating.hpp"
#include "acmg/metrics.hpp"
#include "acmg/model_gradcheck.hpp"
#include "acmg/synth.hpp"
#include "acmg/train.hpp"
#include "corpus_cases.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace acmg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

MaskedSequence random_sequence(std::size_t valid, std::size_t padded, std::size_t d, std::mt19937_64& rng) {
  Matrix x = random_matrix(valid, d, rng);
  return MaskedSequence(std::move(x), valid).padded_to(padded);
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- criteria

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  bool ok = true;
  std::string per_mode;
  for (GatingMode mode : {GatingMode::none, GatingMode::unimodal, GatingMode::cross_modal}) {
    const auto r = gradcheck_model(gradcheck_model_config(mode));
    ok = ok && r.passed;
    worst = std::max(worst, r.max_rel_error);
    per_mode += fmt(" %s=%.2e", std::string(to_string(mode)).c_str(), r.max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {ok && worst <= 1e-4 && secs < 120.0,
          fmt("max rel error%s (tol 1e-4), runtime %.1fs (limit 120s)", per_mode.c_str(), secs)};
}

Outcome gating_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 1 + rng() % 8;
    const std::size_t na = 1 + rng() % 12, nt = 1 + rng() % 12;
    const auto ha = random_sequence(na, na + rng() % 4, d, rng);
    const auto ht = random_sequence(nt, nt + rng() % 4, d, rng);
    GatingParams p = GatingParams::zeros(d);
    p.w_a.value = random_matrix(2 * d, 1, rng);
    p.w_t.value = random_matrix(2 * d, 1, rng);
    p.b_a.value(0, 0) = random_matrix(1, 1, rng)[0];
    p.b_t.value(0, 0) = random_matrix(1, 1, rng)[0];
    const auto [ga, gt] = gate_cross_modal(ha, ht, p);
    const auto ua = gate_unimodal(ha, p.w_a.value, p.b_a.value[0]);
    const auto ut = gate_unimodal(ht, p.w_t.value, p.b_t.value[0]);
    const auto ma = oracle::mean(ha), mt = oracle::mean(ht);
    for (std::size_t i = 0; i < na; ++i) {
      worst = std::max(worst, std::abs(ga.gates(i, 0) - oracle::gate(ha.features(), i, mt, p.w_a.value, p.b_a.value[0])));
      worst = std::max(worst, std::abs(ua.gates(i, 0) - oracle::gate(ha.features(), i, ma, p.w_a.value, p.b_a.value[0])));
    }
    for (std::size_t i = 0; i < nt; ++i) {
      worst = std::max(worst, std::abs(gt.gates(i, 0) - oracle::gate(ht.features(), i, ma, p.w_t.value, p.b_t.value[0])));
      worst = std::max(worst, std::abs(ut.gates(i, 0) - oracle::gate(ht.features(), i, mt, p.w_t.value, p.b_t.value[0])));
    }
  }
  return {worst <= 1e-12, fmt("100 instances, cross-modal and unimodal, max abs diff %.2e (tol 1e-12)", worst)};
}

Outcome padding_invariance() {
  std::mt19937_64 rng(31);
  double worst_gate = 0, worst_logit = 0;
  for (GatingMode mode : {GatingMode::none, GatingMode::unimodal, GatingMode::cross_modal}) {
    ModelConfig cfg;
    cfg.input_dim_a = 16;
    cfg.input_dim_t = 12;
    cfg.gating_mode = mode;
    const FusionModel m(cfg);
    for (int s = 0; s < 50; ++s) {
      const std::size_t na = 1 + rng() % 40, nt = 1 + rng() % 24;
      const ModelInput base{random_sequence(na, na, 16, rng), random_sequence(nt, nt, 12, rng)};
      const auto p0 = predict(m, base);
      const std::size_t pad_a = rng() % 33, pad_t = rng() % 33;
      const ModelInput padded{base.acoustic.padded_to(na + pad_a), base.textual.padded_to(nt + pad_t)};
      const auto p1 = predict(m, padded);
      ad::Tape t0(false), t1(false);
      const auto l0 = m.forward(t0, base).logits.value().values();
      const auto l1 = m.forward(t1, padded).logits.value().values();
      worst_logit = std::max(worst_logit, max_abs(l0, l1));
      worst_gate = std::max({worst_gate, max_abs(p0.gates_a, p1.gates_a), max_abs(p0.gates_t, p1.gates_t)});
    }
  }
  return {worst_gate < 1e-10 && worst_logit < 1e-10,
          fmt("50 samples x 3 modes, up to 32 pad frames per modality: max gate diff %.2e, max logit diff %.2e "
              "(tol 1e-10)",
              worst_gate, worst_logit)};
}

// The ablation corpus: fixed task parameters, library defaults otherwise.
SynthSpec ablation_spec() {
  SynthSpec s;
  s.n_samples = 400;
  s.n_classes = 3;
  s.sparsity = 0.15;
  s.signal_gain = 2.0;
  s.noise_sigma = 1.0;
  s.energy_coupling = 1.0;
  return s;
}

EvalReport run_kfold(const Corpus& corpus, GatingMode mode) {
  ModelConfig mc;
  mc.input_dim_a = corpus.d_a;
  mc.input_dim_t = corpus.d_t;
  mc.n_classes = corpus.n_classes();
  mc.gating_mode = mode;
  KFoldOptions o;
  o.k = 5;
  o.threads = std::max(1u, std::thread::hardware_concurrency());
  return kfold(corpus, mc, TrainConfig{}, o);
}

struct Ablation {
  std::map<GatingMode, EvalReport> reports;
  double oracle = 0;
  double seconds = 0;
};

const Ablation& ablation() {
  static const Ablation a = [] {
    Ablation r;
    const auto t0 = Clock::now();
    const auto spec = ablation_spec();
    const Corpus corpus = generate(spec);
    r.oracle = bayes_oracle_accuracy(spec, corpus).marginalized;
    for (GatingMode m : {GatingMode::none, GatingMode::unimodal, GatingMode::cross_modal}) {
      r.reports[m] = run_kfold(corpus, m);
      std::printf("  ablation %-11s fold-mean accuracy %.4f +- %.4f, pooled %.4f\n",
                  std::string(to_string(m)).c_str(), r.reports[m].accuracy.mean, r.reports[m].accuracy.std,
                  r.reports[m].metrics.accuracy);
      std::fflush(stdout);
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return a;
}

Outcome ablation_ordering() {
  const auto& a = ablation();
  const double none = a.reports.at(GatingMode::none).accuracy.mean;
  const double uni = a.reports.at(GatingMode::unimodal).accuracy.mean;
  const double cross = a.reports.at(GatingMode::cross_modal).accuracy.mean;
  // Equal fold means can differ in the last bit through summation order.
  constexpr double eps = 1e-12;
  const bool order = cross + eps >= uni && uni + eps >= none;
  const bool gap = (cross - none) * 100.0 >= 3.0;
  const bool ceiling = none < a.oracle && uni < a.oracle && cross < a.oracle;
  const bool fast = a.seconds < 1800.0;
  return {order && gap && ceiling && fast,
          fmt("5-fold mean accuracy none %.4f, unimodal %.4f, cross_modal %.4f; order %s, gap %.2f points "
              "(need >= 3), oracle %.4f (%s), runtime %.0fs (limit 1800s)",
              none, uni, cross, order ? "ok" : "violated", (cross - none) * 100.0, a.oracle,
              ceiling ? "all below" : "not all below", a.seconds)};
}

Outcome gate_energy_sign() {
  const auto& rep = ablation().reports.at(GatingMode::cross_modal);
  if (!rep.gate_energy || !rep.gate_energy->overall) return {false, "correlation undefined"};
  const double r = *rep.gate_energy->overall;
  return {r < -0.1, fmt("held-out cross_modal acoustic gate vs energy, r = %.4f over %zu frames (need < -0.1)", r,
                        rep.gate_energy->n_frames)};
}

Outcome gate_alignment() {
  const auto& rep = ablation().reports.at(GatingMode::cross_modal);
  if (!rep.gate_alignment || !rep.gate_alignment->acoustic || !rep.gate_alignment->textual) {
    return {false, "alignment undefined"};
  }
  const double ta = rep.gate_alignment->acoustic->auroc.value_or(NAN);
  const double tt = rep.gate_alignment->textual->auroc.value_or(NAN);

  const auto spec = ablation_spec();
  const Corpus corpus = generate(spec);
  ModelConfig mc;
  mc.input_dim_a = corpus.d_a;
  mc.input_dim_t = corpus.d_t;
  mc.gating_mode = GatingMode::cross_modal;
  FusionModel untrained(mc);
  *untrained.gating() = GatingParams::zeros(mc.d_model);
  const auto traces = collect_traces(untrained, corpus);
  const auto base = gate_diagnostic_alignment(traces);
  const double ua = base.acoustic->auroc.value_or(NAN), ut = base.textual->auroc.value_or(NAN);

  const bool trained_ok = ta > 0.65 && tt > 0.65;
  const bool untrained_ok = std::abs(ua - 0.5) <= 0.05 && std::abs(ut - 0.5) <= 0.05;
  return {trained_ok && untrained_ok,
          fmt("held-out trained AUROC acoustic %.4f, textual %.4f (need > 0.65); untrained (zero gating "
              "weights) %.4f, %.4f (need 0.5 +- 0.05)",
              ta, tt, ua, ut)};
}

Outcome null_signal() {
  auto spec = ablation_spec();
  spec.signal_gain = 0.0;
  const Corpus corpus = generate(spec);
  const double chance = 1.0 / static_cast<double>(spec.n_classes);
  double worst = 0;
  std::string accs;
  for (GatingMode m : {GatingMode::none, GatingMode::cross_modal}) {
    const double acc = run_kfold(corpus, m).accuracy.mean;
    worst = std::max(worst, std::abs(acc - chance));
    accs += fmt(" %s %.4f", std::string(to_string(m)).c_str(), acc);
  }
  return {worst <= 0.07, fmt("signal_gain 0, 5-fold accuracy%s; chance %.4f, max deviation %.4f (limit 0.07)",
                             accs.c_str(), chance, worst)};
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t C = 2 + rng() % 5, n = 1 + rng() % 60;
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng() % C, y[i] = rng() % C;
    const auto m = compute_metrics(p, y, C);
    const auto o = oracle::confusion(p, y, C);
    mismatches += m.accuracy != o.accuracy || m.macro_precision != o.precision || m.macro_recall != o.recall ||
                  m.macro_f1 != o.f1;
  }
  double worst = 0;
  std::normal_distribution<double> nd(0, 1);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rng() % 500;
    std::vector<double> x(len), y(len);
    for (std::size_t i = 0; i < len; ++i) {
      x[i] = 5.0 + 3.0 * nd(rng);
      y[i] = 0.3 * x[i] + nd(rng);
    }
    worst = std::max(worst, std::abs(*pearson(x, y) - oracle::pearson(x, y)));
  }
  return {mismatches == 0 && worst <= 1e-12,
          fmt("1000 cases, %zu exact-match failures; Pearson max abs diff %.2e over 1000 series (tol 1e-12)",
              mismatches, worst)};
}

// ------------------------------------------------------------------ CLI

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ACMG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "cli.log") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Outcome cli_reproducibility() {
  const fs::path root = fs::temp_directory_path() / "acmg_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "cfg.json") << R"({
  "synth": {"n_samples": 60, "d_a": 6, "d_t": 6, "len_range_a": [10, 16], "len_range_t": [7, 12]},
  "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "ff_mult": 2, "gating_mode": "cross_modal"},
  "train": {"epochs": 3, "batch_size": 8},
  "eval": {"folds": 3, "plot_samples": ["s00000", "s00003"]}
})";
  const std::string cfg = " -q --config " + (root / "cfg.json").string() + " --seed 9";
  std::size_t runs = 0;
  for (const char* rep : {"a", "b"}) {
    const fs::path out = root / rep;
    const auto o = [&](const char* sub) { return " --out " + (out / sub).string(); };
    const std::string corpus = " --corpus " + (out / "data").string();
    const std::string ckpt = " --checkpoint " + (out / "train" / "model.ckpt").string();
    const std::vector<std::string> cmds = {
        "generate" + cfg + o("data"),
        "train" + cfg + corpus + o("train"),
        "evaluate" + cfg + corpus + ckpt + o("eval"),
        "evaluate" + cfg + corpus + " --kfold" + o("kfold"),
        "analyze-gating" + cfg + corpus + ckpt + o("gating"),
        "gradcheck" + cfg + " --gating-mode cross_modal" + o("gradcheck"),
    };
    fs::create_directories(out);
    for (const auto& c : cmds) {
      if (run_cli(c, out / "cli.log") != 0) return {false, "command failed: acmg " + c};
    }
    runs = cmds.size();
  }
  const auto a = tree_contents(root / "a"), b = tree_contents(root / "b");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    differing += it == b.end() || it->second != bytes;
  }
  differing += a.size() != b.size();
  fs::remove_all(root);
  return {differing == 0 && a.size() >= 15,
          fmt("%zu commands run twice, %zu output files compared, %zu differ", runs, a.size(), differing)};
}

Outcome corpus_io() {
  const fs::path dir = fs::temp_directory_path() / "acmg_acceptance_io";
  std::mt19937_64 rng(100);
  std::size_t mismatched = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Corpus c = testing::random_corpus(rng);
    write_corpus(c, dir);
    mismatched += !(read_corpus(dir) == c);
  }
  const Corpus base = testing::fuzz_base_corpus();
  const CorpusFiles files = write_corpus(base, dir);
  std::ifstream mf(files.manifest), bf(files.blob, std::ios::binary);
  const std::string manifest{std::istreambuf_iterator<char>(mf), {}};
  const std::string blob{std::istreambuf_iterator<char>(bf), {}};
  fs::remove_all(dir);

  std::mt19937_64 frng(4321);
  const std::size_t n = 2000;
  std::size_t typed = 0, accepted = 0, untyped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      parse_corpus(testing::mutate(manifest, frng), blob).validate();
      ++accepted;
    } catch (const FormatError&) {
      ++typed;
    } catch (const std::exception&) {
      ++untyped;
    }
  }
  return {mismatched == 0 && untyped == 0,
          fmt("round trip: %zu of 100 corpora differ; fuzz: %zu mutations, %zu typed errors, %zu accepted, %zu "
              "untyped",
              mismatched, n, typed, accepted, untyped)};
}

}  // namespace

int main() {
  std::printf("acceptance run\n");
  std::fflush(stdout);
  report(1, "gradient oracle", gradient_oracle);
  report(2, "gating oracle equivalence", gating_oracle);
  report(3, "padding invariance", padding_invariance);
  report(4, "ablation ordering", ablation_ordering);
  report(5, "gate-energy correlation sign", gate_energy_sign);
  report(6, "gate-diagnostic alignment", gate_alignment);
  report(7, "null-signal control", null_signal);
  report(8, "metrics oracle", metrics_oracle);
  report(9, "CLI reproducibility", cli_reproducibility);
  report(10, "corpus I/O", corpus_io);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
