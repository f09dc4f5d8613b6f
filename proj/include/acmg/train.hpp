#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "acmg/corpus.hpp"
#include "acmg/error.hpp"
#include "acmg/model.hpp"

namespace acmg {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool class_weighting = false;  // inverse-frequency loss weights
  double val_fraction = 0.2;     // used when a caller derives the validation split
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;      // mean minibatch loss over the epoch (training mode)
  double train_accuracy = 0.0;  // same pass
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  std::optional<double> val_macro_f1;
};

struct TrainHistory {
  double initial_train_loss = 0.0;  // evaluation mode, before the first step
  double final_train_loss = 0.0;    // evaluation mode, after the last step
  std::vector<EpochRecord> epochs;
};

/// Optimizer moments and progress; enough to resume a run exactly.
struct OptimizerState {
  std::size_t epochs_done = 0;
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// Thrown when a loss goes non-finite. The model has been restored to the
/// parameters at the end of the last completed epoch.
class TrainingAborted : public NonFiniteError {
 public:
  using NonFiniteError::NonFiniteError;
};

/// Per-class loss weights: all ones, or n / (C * count_c).
std::vector<double> class_weights(const Corpus& corpus, bool inverse_frequency);

/// Mean cross-entropy over a batch of samples, recorded on one tape.
ad::Var batch_loss(FusionModel& model, ad::Tape& tape, std::span<const ModelInput> inputs,
                   std::span<const std::size_t> labels);

/// Evaluation-mode mean loss and accuracy over a corpus.
struct CorpusScore {
  double loss = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};
CorpusScore score(const FusionModel& model, const Corpus& corpus);

/// Trains `model` in place for cfg.epochs epochs total. With a non-null
/// `state`, training resumes from state->epochs_done and leaves the state
/// updated for a later resume. Parameters and optimizer moments are kept at
/// float32 storage precision so checkpoints round-trip exactly.
TrainHistory train(FusionModel& model, const Corpus& train_set, const Corpus* val_set,
                   const TrainConfig& cfg, OptimizerState* state = nullptr);

/// Deterministic train/validation split of sample indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, std::uint64_t seed);

}  // namespace acmg
