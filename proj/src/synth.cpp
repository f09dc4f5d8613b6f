#include "acmg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "acmg/error.hpp"
#include "acmg/rng.hpp"

namespace acmg {

void SynthSpec::validate() const {
  if (n_samples == 0) throw SpecError("n_samples must be positive");
  if (n_classes < 2) throw SpecError("n_classes must be at least 2");
  if (d_a < n_classes) throw SpecError("d_a must be at least n_classes");
  if (d_t < n_classes) throw SpecError("d_t must be at least n_classes");
  if (len_range_a.first == 0 || len_range_a.first > len_range_a.second) {
    throw SpecError("len_range_a must satisfy 1 <= min <= max");
  }
  if (len_range_t.first == 0 || len_range_t.first > len_range_t.second) {
    throw SpecError("len_range_t must satisfy 1 <= min <= max");
  }
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw SpecError("sparsity must lie in (0, 1]");
  const auto shortest = std::min(len_range_a.first, len_range_t.first);
  if (sparsity * static_cast<double>(shortest) < 1.0) {
    throw SpecError("sparsity * min length must be at least 1 (every sample needs a diagnostic frame)");
  }
  if (!(signal_gain >= 0.0) || !std::isfinite(signal_gain)) throw SpecError("signal_gain must be >= 0");
  if (!(energy_coupling >= 0.0 && energy_coupling <= 1.0)) {
    throw SpecError("energy_coupling must lie in [0, 1]");
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw SpecError("noise_sigma must be > 0");
  if (!(energy_jitter >= 0.0)) throw SpecError("energy_jitter must be >= 0");
  if (!(energy_drop >= 0.0)) throw SpecError("energy_drop must be >= 0");
}

std::size_t diagnostic_count(double sparsity, std::size_t T) {
  // Slack keeps products like 0.15 * 20 from rounding up to 4.
  const auto k = static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(T) - 1e-9));
  return std::clamp<std::size_t>(k, 1, T);
}

std::vector<double> class_direction(std::size_t c, std::size_t d) {
  std::vector<double> v(d, 0.0);
  v.at(c) = 1.0;
  return v;
}

std::vector<std::string> default_class_names(std::size_t n_classes) {
  if (n_classes == 3) return {"healthy", "mild", "moderate"};
  if (n_classes == 2) return {"healthy", "depressed"};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

namespace {

enum Stream : std::uint64_t { kLabels = 101, kSamples = 102, kOracle = 103 };

float f32(double v) { return static_cast<float>(v); }

std::vector<std::uint8_t> place_diagnostics(std::size_t T, std::size_t k, bool contiguous,
                                            std::mt19937_64& rng) {
  std::vector<std::uint8_t> flags(T, 0);
  if (contiguous) {
    std::uniform_int_distribution<std::size_t> start(0, T - k);
    const std::size_t s = start(rng);
    std::fill_n(flags.begin() + static_cast<std::ptrdiff_t>(s), k, std::uint8_t{1});
    return flags;
  }
  std::vector<std::size_t> idx(T);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, T - 1);
    std::swap(idx[i], idx[pick(rng)]);
    flags[idx[i]] = 1;
  }
  return flags;
}

Matrix draw_features(std::size_t T, std::size_t d, std::size_t label,
                     const std::vector<std::uint8_t>& flags, const SynthSpec& spec,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  const auto dir = class_direction(label, d);
  Matrix x(T, d);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = noise(rng);
      if (flags[i]) v += spec.signal_gain * dir[j];
      x(i, j) = f32(v);
    }
  }
  return x;
}

std::vector<std::size_t> label_plan(const SynthSpec& spec, std::uint64_t stream) {
  // Balanced then shuffled: each label is marginally uniform and class counts
  // differ by at most one.
  std::vector<std::size_t> labels(spec.n_samples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % spec.n_classes;
  std::mt19937_64 rng(derive_seed(spec.seed, {stream, kLabels}));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Sample generate_sample(const SynthSpec& spec, std::size_t index, std::size_t label,
                       std::uint64_t stream) {
  std::mt19937_64 rng(derive_seed(spec.seed, {stream, kSamples, index}));
  std::uniform_int_distribution<std::size_t> len_a(spec.len_range_a.first, spec.len_range_a.second);
  std::uniform_int_distribution<std::size_t> len_t(spec.len_range_t.first, spec.len_range_t.second);
  const std::size_t T_a = len_a(rng);
  const std::size_t T_t = len_t(rng);

  Sample s;
  char id[32];
  std::snprintf(id, sizeof id, "s%05zu", index);
  s.id = id;
  s.label = label;
  auto diag_a = place_diagnostics(T_a, diagnostic_count(spec.sparsity, T_a), spec.contiguous, rng);
  auto diag_t = place_diagnostics(T_t, diagnostic_count(spec.sparsity, T_t), spec.contiguous, rng);
  s.acoustic = MaskedSequence(draw_features(T_a, spec.d_a, label, diag_a, spec, rng));
  s.textual = MaskedSequence(draw_features(T_t, spec.d_t, label, diag_t, spec, rng));

  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<double> energy(T_a);
  for (std::size_t i = 0; i < T_a; ++i) {
    const double drop = spec.energy_coupling * spec.energy_drop * static_cast<double>(diag_a[i]);
    energy[i] = f32(spec.energy_base - drop + spec.energy_jitter * jitter(rng));
  }
  std::vector<std::uint8_t> negative(T_t, 0);
  if (label > 0) negative = diag_t;

  s.energy = std::move(energy);
  s.negative_token_flags = std::move(negative);
  s.diagnostic_a = std::move(diag_a);
  s.diagnostic_t = std::move(diag_t);
  return s;
}

Corpus generate_stream(const SynthSpec& spec, std::size_t n, std::uint64_t stream) {
  SynthSpec sized = spec;
  sized.n_samples = n;
  sized.validate();
  Corpus c;
  c.d_a = spec.d_a;
  c.d_t = spec.d_t;
  c.class_names = default_class_names(spec.n_classes);
  const auto labels = label_plan(sized, stream);
  c.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) c.samples.push_back(generate_sample(sized, i, labels[i], stream));
  return c;
}

double log_sum_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log r_i: per-frame log likelihood ratio of "diagnostic for class c" vs "noise".
std::vector<double> frame_log_ratios(const MaskedSequence& seq, std::size_t c, const SynthSpec& spec) {
  const std::size_t d = seq.dim();
  const auto dir = class_direction(c, d);
  const double s2 = spec.noise_sigma * spec.noise_sigma;
  double mu_sq = 0.0;
  for (double v : dir) mu_sq += spec.signal_gain * spec.signal_gain * v * v;
  std::vector<double> out(seq.valid_count());
  for (std::size_t i = 0; i < seq.valid_count(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += seq.features()(i, j) * spec.signal_gain * dir[j];
    out[i] = (dot - 0.5 * mu_sq) / s2;
  }
  return out;
}

// Log-likelihood ratio of the whole sequence against all-noise, with the
// diagnostic positions either known or summed over the placement prior.
double sequence_log_likelihood(const MaskedSequence& seq, const std::vector<std::uint8_t>* flags,
                               std::size_t c, const SynthSpec& spec) {
  const auto lr = frame_log_ratios(seq, c, spec);
  const std::size_t T = lr.size();
  if (flags) {
    double s = 0.0;
    for (std::size_t i = 0; i < T; ++i)
      if ((*flags)[i]) s += lr[i];
    return s;
  }
  const std::size_t k = diagnostic_count(spec.sparsity, T);
  if (spec.contiguous) {
    double acc = -INFINITY;
    for (std::size_t start = 0; start + k <= T; ++start) {
      double s = 0.0;
      for (std::size_t i = start; i < start + k; ++i) s += lr[i];
      acc = log_sum_exp(acc, s);
    }
    return acc - std::log(static_cast<double>(T - k + 1));
  }
  // Elementary symmetric polynomial e_k(r_1..r_T) in log space; the uniform
  // subset prior contributes the constant -log C(T, k), shared by all classes.
  std::vector<double> e(k + 1, -INFINITY);
  e[0] = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = std::min(k, i + 1); j >= 1; --j) e[j] = log_sum_exp(e[j], e[j - 1] + lr[i]);
  }
  return e[k];
}

}  // namespace

Corpus generate(const SynthSpec& spec) {
  spec.validate();
  return generate_stream(spec, spec.n_samples, 0);
}

std::vector<double> oracle_log_likelihoods(const SynthSpec& spec, const Sample& s, bool revealed) {
  if (revealed && (!s.diagnostic_a || !s.diagnostic_t)) {
    throw std::invalid_argument("oracle: revealed variant needs diagnostic flags on sample " + s.id);
  }
  std::vector<double> ll(spec.n_classes);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    ll[c] = sequence_log_likelihood(s.acoustic, revealed ? &*s.diagnostic_a : nullptr, c, spec) +
            sequence_log_likelihood(s.textual, revealed ? &*s.diagnostic_t : nullptr, c, spec);
  }
  return ll;
}

std::size_t oracle_predict(const SynthSpec& spec, const Sample& s, bool revealed) {
  const auto ll = oracle_log_likelihoods(spec, s, revealed);
  return static_cast<std::size_t>(std::max_element(ll.begin(), ll.end()) - ll.begin());
}

OracleAccuracy bayes_oracle_accuracy(const SynthSpec& spec, const Corpus& corpus) {
  OracleAccuracy acc;
  acc.n_eval = corpus.size();
  if (corpus.size() == 0) return acc;
  std::size_t hit_m = 0;
  std::size_t hit_r = 0;
  for (const auto& s : corpus.samples) {
    hit_m += oracle_predict(spec, s, false) == s.label;
    hit_r += oracle_predict(spec, s, true) == s.label;
  }
  acc.marginalized = static_cast<double>(hit_m) / static_cast<double>(corpus.size());
  acc.revealed = static_cast<double>(hit_r) / static_cast<double>(corpus.size());
  return acc;
}

OracleAccuracy bayes_oracle_accuracy(const SynthSpec& spec, std::size_t n_eval) {
  if (n_eval == 0) return {};
  return bayes_oracle_accuracy(spec, generate_stream(spec, n_eval, kOracle));
}

}  // namespace acmg
