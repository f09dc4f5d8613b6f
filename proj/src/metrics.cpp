#include "acmg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include "acmg/error.hpp"

namespace acmg {

ClassificationMetrics compute_metrics(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels, std::size_t n_classes) {
  if (predictions.empty()) throw std::invalid_argument("metrics: empty input");
  if (predictions.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  ClassificationMetrics m;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes || predictions[i] >= n_classes) {
      throw LabelError("metrics: class id out of range at index " + std::to_string(i));
    }
    ++m.confusion[labels[i]][predictions[i]];
    correct += labels[i] == predictions[i];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.per_class.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    ClassMetrics& cm = m.per_class[c];
    const std::size_t tp = m.confusion[c][c];
    for (std::size_t k = 0; k < n_classes; ++k) {
      cm.support += m.confusion[c][k];
      cm.predicted += m.confusion[k][c];
    }
    if (cm.predicted == 0) {
      m.warnings.push_back("class " + std::to_string(c) + " never predicted; precision set to 0");
    } else {
      cm.precision = static_cast<double>(tp) / static_cast<double>(cm.predicted);
    }
    if (cm.support == 0) {
      m.warnings.push_back("class " + std::to_string(c) + " absent from labels; recall set to 0");
    } else {
      cm.recall = static_cast<double>(tp) / static_cast<double>(cm.support);
    }
    const double pr = cm.precision + cm.recall;
    cm.f1 = pr > 0.0 ? 2.0 * cm.precision * cm.recall / pr : 0.0;
    m.macro_precision += cm.precision;
    m.macro_recall += cm.recall;
    m.macro_f1 += cm.f1;
  }
  const auto n = static_cast<double>(n_classes);
  m.macro_precision /= n;
  m.macro_recall /= n;
  m.macro_f1 /= n;
  return m;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("pearson: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (x.size() < 2) return std::nullopt;
  // Welford-style co-moment update.
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> positives) {
  if (scores.size() != positives.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups, then the Mann-Whitney U of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positives[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

std::vector<double> resample_linear(std::span<const double> v, std::size_t n) {
  if (v.empty() || n == 0) return {};
  if (v.size() == n) return {v.begin(), v.end()};
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = v[0];
    return out;
  }
  const double scale = static_cast<double>(v.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out[i] = v[lo] * (1.0 - frac) + v[hi] * frac;
  }
  return out;
}

}  // namespace acmg
