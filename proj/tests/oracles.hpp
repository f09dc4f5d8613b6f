#pragma once

// Plain-loop reference implementations used as independent oracles.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "acmg/sequence.hpp"
#include "acmg/tensor.hpp"

namespace oracle {

/// Gate for frame i: sigmoid(sum_k w[k] * [h_i || ctx][k] + b).
inline double gate(const acmg::Matrix& h, std::size_t i, const std::vector<double>& ctx, const acmg::Matrix& w,
                   double b) {
  const std::size_t d = h.cols();
  double z = b;
  for (std::size_t k = 0; k < d; ++k) z += w(k, 0) * h(i, k);
  for (std::size_t k = 0; k < d; ++k) z += w(d + k, 0) * ctx[k];
  return 1.0 / (1.0 + std::exp(-z));
}

inline std::vector<double> mean(const acmg::MaskedSequence& s) {
  std::vector<double> m(s.dim(), 0.0);
  for (std::size_t i = 0; i < s.valid_count(); ++i)
    for (std::size_t k = 0; k < s.dim(); ++k) m[k] += s.features()(i, k);
  for (double& v : m) v /= static_cast<double>(s.valid_count());
  return m;
}

struct Metrics {
  double accuracy, precision, recall, f1;
};

/// Metrics from an explicit confusion matrix; zero-division terms count as 0.
inline Metrics confusion(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& label,
                         std::size_t C) {
  std::vector<std::vector<double>> cm(C, std::vector<double>(C, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) cm[label[i]][pred[i]] += 1;
  double diag = 0, P = 0, R = 0, F = 0;
  for (std::size_t c = 0; c < C; ++c) {
    diag += cm[c][c];
    double col = 0, row = 0;
    for (std::size_t k = 0; k < C; ++k) col += cm[k][c], row += cm[c][k];
    const double p = col > 0 ? cm[c][c] / col : 0.0;
    const double r = row > 0 ? cm[c][c] / row : 0.0;
    P += p;
    R += r;
    F += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  const double n = static_cast<double>(pred.size());
  const double c = static_cast<double>(C);
  return {diag / n, P / c, R / c, F / c};
}

/// Two-pass Pearson correlation.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracle
