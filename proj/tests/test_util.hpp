#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "acmg/autodiff.hpp"
#include "acmg/sequence.hpp"

namespace testutil {

inline acmg::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  acmg::Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline acmg::MaskedSequence random_sequence(std::size_t valid, std::size_t padded, std::size_t d,
                                            std::mt19937_64& rng) {
  acmg::Matrix x(padded, d);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < valid; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = n(rng);
  return acmg::MaskedSequence(std::move(x), valid);
}

/// Central-difference gradient of f at x, independent of the tape.
inline acmg::Matrix numeric_grad(const std::function<double(const acmg::Matrix&)>& f, acmg::Matrix x,
                                 double h = 1e-6) {
  acmg::Matrix g(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_rel_err(const acmg::Matrix& a, const acmg::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    m = std::max(m, std::abs(a[i] - b[i]) / denom);
  }
  return m;
}

}  // namespace testutil
