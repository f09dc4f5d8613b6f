#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acmg/model.hpp"
#include "acmg/sequence.hpp"

namespace acmg {

/// One labeled utterance: model inputs plus analysis-only side channels.
struct Sample {
  std::string id;
  std::size_t label = 0;
  std::optional<std::string> subject;
  MaskedSequence acoustic;
  MaskedSequence textual;
  // Side channels, aligned with the valid positions of each modality.
  std::optional<std::vector<double>> energy;
  std::optional<std::vector<std::uint8_t>> negative_token_flags;
  std::optional<std::vector<std::uint8_t>> diagnostic_a;
  std::optional<std::vector<std::uint8_t>> diagnostic_t;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Corpus {
  std::size_t d_a = 0;
  std::size_t d_t = 0;
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  std::size_t n_classes() const { return class_names.size(); }
  std::size_t size() const { return samples.size(); }
  std::vector<std::size_t> class_counts() const;
  /// Checks widths, labels and side-channel lengths; throws ShapeError/LabelError.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// The only route from a sample to model inputs. Side channels are never
/// part of what the model sees.
ModelInput model_input(const Sample& s);

Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices);

}  // namespace acmg
