#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "acmg/corpus.hpp"

namespace acmg {

/// Parameters of the planted sparse-signal corpus.
struct SynthSpec {
  std::size_t n_samples = 400;
  std::size_t n_classes = 3;
  std::size_t d_a = 32;
  std::size_t d_t = 32;
  std::pair<std::size_t, std::size_t> len_range_a{24, 48};
  std::pair<std::size_t, std::size_t> len_range_t{12, 24};
  double sparsity = 0.15;      // fraction of frames carrying class signal
  double signal_gain = 2.0;
  double energy_coupling = 1.0;  // 0..1, how strongly diagnostic frames lose energy
  double noise_sigma = 1.0;
  double energy_base = 1.0;
  double energy_drop = 1.0;
  double energy_jitter = 0.25;
  bool contiguous = false;  // diagnostic frames form one run instead of scattered positions
  std::uint64_t seed = 7;

  /// Throws SpecError naming the offending field.
  void validate() const;
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

/// Number of diagnostic positions planted in a sequence of length T.
std::size_t diagnostic_count(double sparsity, std::size_t T);

/// Class mean direction (unscaled unit vector) for class c in a width-d space.
std::vector<double> class_direction(std::size_t c, std::size_t d);

std::vector<std::string> default_class_names(std::size_t n_classes);

/// Generates the whole corpus. Sample i depends only on (spec, i) and the
/// balanced label plan, so generation is reproducible bit-for-bit.
Corpus generate(const SynthSpec& spec);

struct OracleAccuracy {
  double marginalized = 0.0;  // diagnostic positions unknown, summed out exactly
  double revealed = 0.0;      // diagnostic positions given
  std::size_t n_eval = 0;
};

/// Log-likelihood of each class for one sample under the generative model.
std::vector<double> oracle_log_likelihoods(const SynthSpec& spec, const Sample& s, bool revealed);
/// Bayes-optimal decision (uniform prior) for one sample.
std::size_t oracle_predict(const SynthSpec& spec, const Sample& s, bool revealed);

/// Accuracy of the exact likelihood classifier on n_eval fresh samples drawn
/// from an independent seed stream of the same spec.
OracleAccuracy bayes_oracle_accuracy(const SynthSpec& spec, std::size_t n_eval);
/// Same classifier evaluated on an existing corpus generated from `spec`.
OracleAccuracy bayes_oracle_accuracy(const SynthSpec& spec, const Corpus& corpus);

}  // namespace acmg
