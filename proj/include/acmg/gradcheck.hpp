#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "acmg/autodiff.hpp"

namespace acmg::ad {

/// Builds a scalar (1x1) loss on the given tape. Must be deterministic.
using LossFn = std::function<Var(Tape&)>;

/// Mutates the analytic gradients before comparison; test hook only.
using GradientHook = std::function<void(std::vector<Matrix>& analytic)>;

struct GradcheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, 1e-6). The floor sits above central-difference
/// rounding noise (~1e-11 at step 1e-5), so gradients that are exactly zero
/// by construction (e.g. attention key biases) are not judged on noise.
double relative_error(double analytic, double numeric);

/// Central-difference check of every entry of every parameter. Throws
/// NonFiniteError naming the first non-finite intermediate if the loss
/// is not finite.
GradcheckReport gradcheck(const LossFn& loss, const std::vector<Parameter*>& params,
                          double step = 1e-5, double tol = 1e-4, const GradientHook& hook = {});

}  // namespace acmg::ad
