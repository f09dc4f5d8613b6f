#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "acmg/autodiff.hpp"
#include "acmg/gating.hpp"
#include "acmg/sequence.hpp"

namespace acmg {

struct ModelConfig {
  std::size_t input_dim_a = 16;
  std::size_t input_dim_t = 16;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t ff_mult = 4;
  std::size_t n_classes = 3;
  GatingMode gating_mode = GatingMode::cross_modal;
  double dropout_rate = 0.1;
  bool positional_encoding = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The two sequences a model sees for one sample. Side channels never appear here.
struct ModelInput {
  const MaskedSequence& acoustic;
  const MaskedSequence& textual;
};

struct Linear {
  ad::Parameter weight;  // in x out
  std::optional<ad::Parameter> bias;  // 1 x out
};

struct EncoderLayer {
  Linear wq, wk, wv, wo;
  ad::Parameter ln1_gamma, ln1_beta;
  Linear ff1, ff2;
  ad::Parameter ln2_gamma, ln2_beta;
};

struct ForwardResult {
  ad::Var logits;   // 1 x n_classes
  ad::Var gates_a;  // T_a x 1, invalid when gating is off
  ad::Var gates_t;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
  std::vector<double> gates_a;  // valid positions only; empty when gating is off
  std::vector<double> gates_t;
};

/// Dual-branch classifier: per-modality input projection, adaptive gating,
/// transformer encoder, masked mean pooling, then an MLP over the
/// concatenated branch summaries.
class FusionModel {
 public:
  explicit FusionModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Records the forward pass on `tape`. Parameters are tracked for
  /// gradients on a recording tape. Dropout applies only when
  /// `dropout_rng` is non-null and dropout_rate > 0.
  ForwardResult forward(ad::Tape& tape, const ModelInput& in, std::mt19937_64* dropout_rng = nullptr);
  /// Inference-only forward; no gradients.
  ForwardResult forward(ad::Tape& tape, const ModelInput& in) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  GatingParams* gating() { return gating_ ? &*gating_ : nullptr; }
  const GatingParams* gating() const { return gating_ ? &*gating_ : nullptr; }

 private:
  template <class Self>
  static ForwardResult forward_impl(Self& self, ad::Tape& tape, const ModelInput& in,
                                    std::mt19937_64* dropout_rng);

  ModelConfig cfg_;
  Linear proj_a_, proj_t_;
  std::optional<GatingParams> gating_;
  std::vector<EncoderLayer> enc_a_, enc_t_;
  Linear head1_, head2_;
};

/// Sinusoidal positional table, T x d.
Matrix positional_encoding(std::size_t T, std::size_t d);

double cross_entropy_loss(const std::vector<double>& logits, std::size_t label);
std::vector<double> softmax(const std::vector<double>& logits);

Prediction predict(const FusionModel& model, const ModelInput& in);

/// Rounds a value to the nearest 32-bit float (parameter storage precision).
double to_storage(double v);
void round_to_storage(Matrix& m);

}  // namespace acmg
