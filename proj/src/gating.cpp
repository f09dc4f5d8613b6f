#include "acmg/gating.hpp"

#include <cmath>
#include <string>

#include "acmg/error.hpp"

namespace acmg {

std::string_view to_string(GatingMode mode) {
  switch (mode) {
    case GatingMode::none:
      return "none";
    case GatingMode::unimodal:
      return "unimodal";
    case GatingMode::cross_modal:
      return "cross_modal";
  }
  return "none";
}

GatingMode parse_gating_mode(std::string_view text) {
  if (text == "none") return GatingMode::none;
  if (text == "unimodal") return GatingMode::unimodal;
  if (text == "cross_modal") return GatingMode::cross_modal;
  throw ConfigError("gating_mode: expected none|unimodal|cross_modal, got '" + std::string(text) +
                    "'");
}

GatingParams GatingParams::zeros(std::size_t d) {
  GatingParams p;
  p.w_a = {"gate.w_a", Matrix(2 * d, 1), {}};
  p.w_t = {"gate.w_t", Matrix(2 * d, 1), {}};
  p.b_a = {"gate.b_a", Matrix(1, 1), {}};
  p.b_t = {"gate.b_t", Matrix(1, 1), {}};
  return p;
}

GatingParams GatingParams::init(std::size_t d, std::mt19937_64& rng) {
  GatingParams p = zeros(d);
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : p.w_a.value.values()) v = u(rng);
  for (double& v : p.w_t.value.values()) v = u(rng);
  return p;
}

namespace {

void check_width(const char* what, const MaskedSequence& h, const Matrix& w) {
  if (w.rows() != 2 * h.dim() || w.cols() != 1) {
    throw ShapeError(std::string(what) + ": projection " + w.shape_str() +
                     " does not fit features of width " + std::to_string(h.dim()));
  }
}

}  // namespace

std::pair<GateOutput, GateOutput> gate_cross_modal(const MaskedSequence& h_a,
                                                   const MaskedSequence& h_t,
                                                   const GatingParams& p) {
  check_width("gate_cross_modal (acoustic)", h_a, p.w_a.value);
  check_width("gate_cross_modal (textual)", h_t, p.w_t.value);
  ad::Tape tape(false);
  const ad::Var a = tape.constant(h_a.features());
  const ad::Var t = tape.constant(h_t.features());
  const auto out = ad::apply_gating(GatingMode::cross_modal, a, h_a.valid_count(), t,
                                    h_t.valid_count(), tape.constant(p.w_a.value),
                                    tape.constant(p.b_a.value), tape.constant(p.w_t.value),
                                    tape.constant(p.b_t.value));
  return {GateOutput{out.gates_a.value(), MaskedSequence(out.refined_a.value(), h_a.valid_count())},
          GateOutput{out.gates_t.value(), MaskedSequence(out.refined_t.value(), h_t.valid_count())}};
}

GateOutput gate_unimodal(const MaskedSequence& h, const Matrix& w, double b) {
  check_width("gate_unimodal", h, w);
  ad::Tape tape(false);
  const ad::Var x = tape.constant(h.features());
  const ad::Var ctx = ad::masked_mean_pool(x, h.valid_count());
  const ad::Var g =
      ad::gate_weights(x, h.valid_count(), ctx, tape.constant(w), tape.constant(Matrix(1, 1, b)));
  const ad::Var r = ad::refine(x, g);
  return {g.value(), MaskedSequence(r.value(), h.valid_count())};
}

MaskedSequence refine(const MaskedSequence& h, const Matrix& gates) {
  if (gates.rows() != h.length() || gates.cols() != 1) {
    throw ShapeError("refine: gates " + gates.shape_str() + " do not match sequence length " +
                     std::to_string(h.length()));
  }
  ad::Tape tape(false);
  const ad::Var r = ad::refine(tape.constant(h.features()), tape.constant(gates));
  // Gates may be nonzero at padding when supplied by a caller; padding stays zero
  // because padded feature rows are zero.
  return MaskedSequence(r.value(), h.valid_count());
}

namespace ad {

Var gate_weights(Var h, std::size_t valid_count, Var ctx, Var w, Var b) {
  const Var joint = concat_cols(h, expand_context(ctx, h.rows()));
  if (w.rows() != joint.cols() || w.cols() != 1) {
    throw ShapeError("gate_weights: projection " + w.value().shape_str() +
                     " does not fit concatenated features " + joint.value().shape_str());
  }
  const Var logits = add_row(matmul(joint, w), b);
  return mask_rows(sigmoid(logits), valid_count);
}

Var refine(Var h, Var gates) { return scale_rows(h, gates); }

GatedPair apply_gating(GatingMode mode, Var h_a, std::size_t n_a, Var h_t, std::size_t n_t,
                       Var w_a, Var b_a, Var w_t, Var b_t) {
  if (mode == GatingMode::none) return {h_a, {}, h_t, {}};
  const Var ctx_a = masked_mean_pool(h_a, n_a);
  const Var ctx_t = masked_mean_pool(h_t, n_t);
  const bool cross = mode == GatingMode::cross_modal;
  const Var g_a = gate_weights(h_a, n_a, cross ? ctx_t : ctx_a, w_a, b_a);
  const Var g_t = gate_weights(h_t, n_t, cross ? ctx_a : ctx_t, w_t, b_t);
  return {refine(h_a, g_a), g_a, refine(h_t, g_t), g_t};
}

}  // namespace ad

}  // namespace acmg
