#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace acmg {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // true instances
  std::size_t predicted = 0;  // predicted instances
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::string> warnings;
};

/// Accuracy and unweighted class-mean precision/recall/F1 over classes
/// [0, n_classes). A class never predicted has precision 0; a class absent
/// from the labels has recall 0; both cases add a warning. Per-class F1 is
/// 2PR/(P+R), or 0 when P+R = 0; macro F1 averages the per-class values.
ClassificationMetrics compute_metrics(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels, std::size_t n_classes);

/// Pearson correlation; nullopt when fewer than two points or either side
/// has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Area under the ROC curve of `scores` against binary `positives`
/// (Mann-Whitney with ties counted as one half). nullopt if either class is empty.
std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> positives);

/// Linear-interpolation resampling of v to n points (endpoints preserved).
std::vector<double> resample_linear(std::span<const double> v, std::size_t n);

}  // namespace acmg
