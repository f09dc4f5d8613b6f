#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>

#include <nlohmann/json.hpp>

#include "acmg/analysis.hpp"
#include "acmg/error.hpp"
#include "acmg/metrics.hpp"
#include "acmg/synth.hpp"
#include "oracles.hpp"

using namespace acmg;

namespace {

double pairwise_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& f) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (f[i] && !f[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

GateTrace make_trace(std::vector<double> gates, std::vector<double> energy, std::size_t label = 0) {
  GateTrace t;
  t.sample_id = "t";
  t.label = label;
  t.gates_a = std::move(gates);
  t.energy = std::move(energy);
  return t;
}

ModelConfig tiny_model(const Corpus& c, GatingMode mode) {
  ModelConfig m;
  m.input_dim_a = c.d_a;
  m.input_dim_t = c.d_t;
  m.n_classes = c.n_classes();
  m.d_model = 8;
  m.n_heads = 2;
  m.n_layers = 1;
  m.ff_mult = 2;
  m.gating_mode = mode;
  return m;
}

Corpus small_corpus(std::size_t n) {
  SynthSpec s;
  s.n_samples = n;
  s.d_a = 4;
  s.d_t = 4;
  s.len_range_a = {8, 12};
  s.len_range_t = {7, 9};
  return generate(s);
}

}  // namespace

TEST_CASE("metrics examples") {
  const std::vector<std::size_t> y3 = {0, 1, 2, 2, 1, 0};
  const auto perfect = compute_metrics(y3, y3, 3);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.macro_precision == 1.0);
  CHECK(perfect.macro_recall == 1.0);

  const auto half = compute_metrics(std::vector<std::size_t>{0, 1, 0, 1}, std::vector<std::size_t>{0, 0, 1, 1}, 2);
  CHECK(half.accuracy == 0.5);
  CHECK(half.per_class[0].precision == 0.5);
  CHECK(half.per_class[1].precision == 0.5);
  CHECK(half.macro_f1 == 0.5);

  const auto one = compute_metrics(std::vector<std::size_t>{0, 0, 0, 0}, std::vector<std::size_t>{0, 0, 1, 1}, 2);
  CHECK(one.accuracy == 0.5);
  CHECK(one.macro_recall == 0.5);
  CHECK(one.per_class[1].precision == 0.0);
  CHECK(one.macro_precision == 0.25);
  CHECK_FALSE(one.warnings.empty());

  CHECK_THROWS(compute_metrics(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2));
  CHECK_THROWS(compute_metrics(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}, 2));
}

TEST_CASE("metrics equal a confusion-matrix oracle on 1000 random cases") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t C = 2 + rng() % 4, n = 1 + rng() % 40;
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng() % C, y[i] = rng() % C;
    const auto m = compute_metrics(p, y, C);
    const auto o = oracle::confusion(p, y, C);
    CHECK(m.accuracy == o.accuracy);
    CHECK(m.macro_precision == o.precision);
    CHECK(m.macro_recall == o.recall);
    CHECK(m.macro_f1 == o.f1);
    for (std::size_t c = 0; c < C; ++c) {
      CHECK(std::accumulate(m.confusion[c].begin(), m.confusion[c].end(), std::size_t{0}) ==
            static_cast<std::size_t>(std::count(y.begin(), y.end(), c)));
    }
  }
}

TEST_CASE("Pearson against the two-pass formula") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  double worst = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rng() % 200;
    std::vector<double> x(len), y(len);
    const double rho = (rng() % 200) / 100.0 - 1.0;
    for (std::size_t i = 0; i < len; ++i) {
      x[i] = 3.0 + 10.0 * n(rng);
      y[i] = rho * x[i] + n(rng) - 7.0;
    }
    const auto r = pearson(x, y);
    REQUIRE(r);
    worst = std::max(worst, std::abs(*r - oracle::pearson(x, y)));
  }
  CHECK(worst <= 1e-12);
  const std::vector<double> a = {1, 2, 3}, c = {4, 4, 4};
  CHECK_FALSE(pearson(a, c).has_value());
  CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{2}).has_value());
}

TEST_CASE("AUROC against brute-force pairs") {
  std::mt19937_64 rng(6);
  double worst = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t len = 2 + rng() % 1000;
    std::vector<double> s(len);
    std::vector<std::uint8_t> f(len);
    for (std::size_t i = 0; i < len; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 4.0;  // plenty of ties
      f[i] = rng() % 3 == 0;
    }
    f[0] = 1;
    f[1] = 0;
    worst = std::max(worst, std::abs(*auroc(s, f) - pairwise_auroc(s, f)));
  }
  CHECK(worst <= 1e-9);
  const std::vector<std::uint8_t> all = {1, 1};
  CHECK_FALSE(auroc(std::vector<double>{0.1, 0.2}, all).has_value());
}

TEST_CASE("gate-energy correlation") {
  const std::vector<double> e = {0.5, 1.2, 0.1, 0.9, 1.7};
  std::vector<double> neg(e.size());
  std::transform(e.begin(), e.end(), neg.begin(), [](double v) { return -v; });
  const std::vector<GateTrace> exact = {make_trace(neg, e)};
  CHECK(*gate_energy_correlation(exact, 1).overall == doctest::Approx(-1.0).epsilon(1e-12));

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<GateTrace> random;
  for (int s = 0; s < 250; ++s) {
    std::vector<double> g(48), en(48);
    for (std::size_t i = 0; i < 48; ++i) g[i] = u(rng), en[i] = u(rng);
    random.push_back(make_trace(g, en, s % 3));
  }
  const auto r = gate_energy_correlation(random, 3);
  CHECK(r.n_frames >= 10000);
  CHECK(std::abs(*r.overall) < 0.1);
  REQUIRE(r.per_class.size() == 3);

  const std::vector<GateTrace> flat = {make_trace({0.5, 0.5, 0.5}, {1, 2, 3})};
  CHECK_FALSE(gate_energy_correlation(flat, 1).overall.has_value());

  // Energy at a different rate is resampled to the gate length.
  const std::vector<GateTrace> coarse = {make_trace({0.0, 0.5, 1.0, 1.5, 2.0}, {3.0, 1.0, -1.0})};
  CHECK(*gate_energy_correlation(coarse, 1).overall == doctest::Approx(-1.0).epsilon(1e-12));

  GateTrace missing = make_trace({0.1, 0.2}, {});
  missing.energy.reset();
  const std::vector<GateTrace> skip = {missing, make_trace(neg, e)};
  const auto rs = gate_energy_correlation(skip, 1);
  CHECK(rs.skipped_traces == 1);
  CHECK(rs.n_frames == e.size());
}

TEST_CASE("gate-diagnostic alignment") {
  GateTrace t;
  t.sample_id = "a";
  t.diagnostic_a = std::vector<std::uint8_t>{0, 1, 0, 0, 1};
  t.gates_a = {0, 1, 0, 0, 1};
  std::vector<GateTrace> traces = {t};
  const auto al = gate_diagnostic_alignment(traces);
  CHECK(*al.acoustic->auroc == 1.0);
  CHECK(al.acoustic->gap == 1.0);
  CHECK_FALSE(al.textual.has_value());

  traces[0].gates_a = {0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(*gate_diagnostic_alignment(traces).acoustic->auroc == 0.5);

  // An untrained model with zeroed gating weights produces constant gates.
  const Corpus c = small_corpus(12);
  FusionModel m(tiny_model(c, GatingMode::cross_modal));
  *m.gating() = GatingParams::zeros(8);
  const auto tr = collect_traces(m, c);
  CHECK(std::abs(*gate_diagnostic_alignment(tr).acoustic->auroc - 0.5) <= 0.05);
  CHECK(std::abs(*gate_diagnostic_alignment(tr).textual->auroc - 0.5) <= 0.05);

  GateTrace bare;
  bare.gates_a = {0.2};
  const std::vector<GateTrace> none = {bare};
  CHECK_THROWS_AS(gate_diagnostic_alignment(none), AnalysisError);
  CHECK_THROWS_AS(trace_sample(FusionModel(tiny_model(c, GatingMode::none)), c.samples[0]), ConfigError);
}

TEST_CASE("fold assignment") {
  const Corpus c = small_corpus(30);
  const auto f = assign_folds(c, 5, 1);
  REQUIRE(f.size() == 30);
  std::vector<std::size_t> per(5, 0);
  for (auto v : f) ++per.at(v);
  for (auto n : per) CHECK(n == 6);
  CHECK(assign_folds(c, 5, 1) == f);
  CHECK_THROWS_AS(assign_folds(small_corpus(9), 5, 1), ConfigError);

  Corpus subj = small_corpus(24);
  for (std::size_t i = 0; i < subj.size(); ++i) subj.samples[i].subject = "p" + std::to_string(i / 3);
  const auto fs = assign_folds(subj, 2, 4);
  for (std::size_t i = 0; i < subj.size(); ++i) CHECK(fs[i] == fs[i - i % 3]);
  CHECK_THROWS_AS(assign_folds(subj, 5, 4), ConfigError);
}

TEST_CASE("subject vote") {
  Corpus c = small_corpus(6);
  for (std::size_t i = 0; i < 6; ++i) c.samples[i].subject = i < 4 ? "a" : "b";
  for (std::size_t i = 0; i < 6; ++i) c.samples[i].label = i < 4 ? 1 : 2;
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  const std::vector<std::size_t> pred = {2, 1, 2, 1, 0, 0};
  const auto [p, y] = subject_vote(c, idx, pred);
  CHECK(p == std::vector<std::size_t>{1, 0});
  CHECK(y == std::vector<std::size_t>{1, 2});
}

TEST_CASE("mean and sample std") {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto ms = mean_std(v);
  CHECK(ms.mean == 2.5);
  CHECK(ms.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(mean_std(std::vector<double>{7}).std == 0.0);
}

TEST_CASE("k-fold evaluation") {
  const Corpus c = small_corpus(20);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.val_fraction = 0;
  const auto mc = tiny_model(c, GatingMode::cross_modal);
  KFoldOptions o;
  o.k = 2;
  o.seed = 3;
  const auto r = kfold(c, mc, tc, o);
  CHECK(r.folds.size() == 2);
  CHECK(r.n_samples == 20);
  std::vector<std::size_t> seen;
  for (const auto& f : r.folds) seen.insert(seen.end(), f.test_indices.begin(), f.test_indices.end());
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(20);
  std::iota(all.begin(), all.end(), 0);
  CHECK(seen == all);
  REQUIRE(r.gate_energy.has_value());
  CHECK(r.gate_alignment.has_value());
  for (const auto& row : r.metrics.confusion) CHECK(row.size() == 3);

  SUBCASE("reproducible and thread-count invariant") {
    o.threads = 2;
    CHECK(report_json(kfold(c, mc, tc, o)) == report_json(r));
  }

  SUBCASE("two copies of the same data score the same") {
    Corpus twice = c;
    twice.samples.insert(twice.samples.end(), c.samples.begin(), c.samples.end());
    for (std::size_t i = 20; i < 40; ++i) twice.samples[i].id += "b";
    KFoldOptions d;
    d.k = 2;
    d.fold_of = std::vector<std::size_t>(40, 0);
    std::fill(d.fold_of->begin() + 20, d.fold_of->end(), 1);
    const auto dr = kfold(twice, mc, tc, d);
    CHECK(dr.folds[0].metrics.accuracy == dr.folds[1].metrics.accuracy);
    CHECK(dr.folds[0].predictions == dr.folds[1].predictions);
    CHECK(dr.accuracy.std == 0.0);
  }

  SUBCASE("a class missing from a test fold is reported") {
    Corpus skew = c;
    KFoldOptions d;
    d.k = 2;
    d.fold_of = std::vector<std::size_t>(20);
    for (std::size_t i = 0; i < 20; ++i) (*d.fold_of)[i] = skew.samples[i].label == 0 ? 0 : i % 2;
    const auto dr = kfold(skew, mc, tc, d);
    CHECK_FALSE(dr.warnings.empty());
  }

  SUBCASE("report files") {
    const auto j = nlohmann::json::parse(report_json(r));
    CHECK(j.at("mode") == "kfold");
    CHECK(j.at("folds").size() == 2);
    const auto acc = j.at("summary").at("accuracy").at("mean").get<double>();
    CHECK((acc >= 0.0 && acc <= 1.0));
    const auto csv = correlation_csv(*r.gate_energy, r.class_names);
    CHECK(csv.rfind("class,r,n_frames\n", 0) == 0);
    CHECK(csv.find("overall,") != std::string::npos);
  }
}

TEST_CASE("trace plots") {
  const Corpus c = small_corpus(4);
  FusionModel m(tiny_model(c, GatingMode::cross_modal));
  const auto t = trace_sample(m, c.samples[1]);
  const auto svg = render_trace_svg(t);
  CHECK(svg == render_trace_svg(t));
  CHECK(svg.rfind("<svg", 0) == 0);
  const auto count = [&](const std::string& s, const std::string& pat) {
    const std::regex re(pat);
    return static_cast<std::size_t>(std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
  };
  CHECK(count(svg, "class=\"token\"") == t.gates_t.size());
  CHECK(count(svg, "class=\"energy\"") == 1);
  CHECK(count(svg, "class=\"low-energy\"") >= 1);
  const std::size_t negatives = std::count(t.negative_token_flags->begin(), t.negative_token_flags->end(), 1);
  CHECK(count(svg, "#c0161b") == negatives);

  GateTrace bare = t;
  bare.energy.reset();
  bare.negative_token_flags.reset();
  const auto plain = render_trace_svg(bare);
  CHECK(count(plain, "class=\"energy\"") == 0);
  CHECK(count(plain, "class=\"low-energy\"") == 0);
  CHECK(count(plain, "#c0161b") == 0);

  GateTrace empty;
  CHECK_THROWS_AS(render_trace_svg(empty), AnalysisError);
  GateTrace bad = t;
  bad.negative_token_flags->push_back(0);
  CHECK_THROWS_AS(render_trace_svg(bad), ShapeError);
}
