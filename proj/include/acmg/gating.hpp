#pragma once

#include <cstddef>
#include <random>
#include <string_view>
#include <utility>

#include "acmg/autodiff.hpp"
#include "acmg/sequence.hpp"

namespace acmg {

enum class GatingMode { none, unimodal, cross_modal };

std::string_view to_string(GatingMode mode);
/// Accepts "none", "unimodal", "cross_modal"; throws ConfigError otherwise.
GatingMode parse_gating_mode(std::string_view text);

/// Projections scoring [frame || context] (2d x 1) plus scalar biases.
struct GatingParams {
  ad::Parameter w_a;
  ad::Parameter w_t;
  ad::Parameter b_a;
  ad::Parameter b_t;

  std::size_t dim() const { return w_a.value.rows() / 2; }

  static GatingParams zeros(std::size_t d);
  /// W ~ U(-1/sqrt(2d), 1/sqrt(2d)); biases zero.
  static GatingParams init(std::size_t d, std::mt19937_64& rng);
};

/// Per-position gates (T x 1, zero at padding) and the rescaled features.
struct GateOutput {
  Matrix gates;
  MaskedSequence refined;
};

/// Cross-modal gating: each modality is scored against the other's context.
/// Returns {acoustic, textual}.
std::pair<GateOutput, GateOutput> gate_cross_modal(const MaskedSequence& h_a,
                                                   const MaskedSequence& h_t,
                                                   const GatingParams& p);
/// Gating against the sequence's own context.
GateOutput gate_unimodal(const MaskedSequence& h, const Matrix& w, double b);
/// Row i of h scaled by gates[i]; mask unchanged.
MaskedSequence refine(const MaskedSequence& h, const Matrix& gates);

namespace ad {

/// sigmoid([h || expand(ctx)] w + b) over the valid prefix, zero past it.
Var gate_weights(Var h, std::size_t valid_count, Var ctx, Var w, Var b);
Var refine(Var h, Var gates);

struct GatedPair {
  Var refined_a;
  Var gates_a;  // invalid handle when mode is none
  Var refined_t;
  Var gates_t;
};

/// Applies the configured gating to both modalities. Mode none passes the
/// features through untouched.
GatedPair apply_gating(GatingMode mode, Var h_a, std::size_t n_a, Var h_t, std::size_t n_t,
                       Var w_a, Var b_a, Var w_t, Var b_t);

}  // namespace ad

}  // namespace acmg
