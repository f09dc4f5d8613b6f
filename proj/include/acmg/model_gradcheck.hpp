#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "acmg/gradcheck.hpp"
#include "acmg/model.hpp"

namespace acmg {

/// Small model used for end-to-end gradient checks: every component is
/// present but the parameter count stays in the low thousands.
ModelConfig gradcheck_model_config(GatingMode mode = GatingMode::cross_modal);

struct ModelGradcheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  std::uint64_t data_seed = 11;
  /// Perturbs the analytic gradient of this parameter before comparison.
  std::optional<std::string> corrupt_parameter;
};

/// Finite-difference check of the mean cross-entropy over a fixed 2-sample
/// batch (unequal lengths, with padding) against the tape's gradients.
/// Dropout is disabled regardless of cfg.dropout_rate.
ad::GradcheckReport gradcheck_model(const ModelConfig& cfg, const ModelGradcheckOptions& opts = {});

}  // namespace acmg
