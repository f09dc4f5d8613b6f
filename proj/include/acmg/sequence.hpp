#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "acmg/autodiff.hpp"
#include "acmg/tensor.hpp"

namespace acmg {

/// Variable-length frame/token features with a tail-padding mask.
///
/// Rows [0, valid_count) are real frames; rows [valid_count, length) are
/// padding and hold zeros. At least one row is valid.
class MaskedSequence {
 public:
  MaskedSequence() = default;
  /// All rows valid.
  explicit MaskedSequence(Matrix features);
  MaskedSequence(Matrix features, std::size_t valid_count);
  /// Builds from an explicit 0/1 mask, which must be a prefix mask.
  static MaskedSequence from_mask(Matrix features, const std::vector<std::uint8_t>& mask);

  std::size_t length() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }
  std::size_t valid_count() const { return valid_count_; }
  const Matrix& features() const { return features_; }

  std::vector<std::uint8_t> mask() const;
  /// Copy of the valid rows only.
  Matrix valid_features() const;
  /// Same sequence with zero rows appended up to `length` (>= current length).
  MaskedSequence padded_to(std::size_t length) const;
  MaskedSequence unpadded() const;

  friend bool operator==(const MaskedSequence&, const MaskedSequence&) = default;

 private:
  Matrix features_;
  std::size_t valid_count_ = 0;
};

/// Utterance-level summary vector (1 x d).
struct GlobalContext {
  Matrix vector;
};

/// Mean over valid rows only.
GlobalContext masked_mean_pool(const MaskedSequence& seq);
/// Replicates the context into T identical rows.
Matrix expand_context(const GlobalContext& ctx, std::size_t T);

struct PaddedBatch {
  std::size_t t_max = 0;
  std::size_t dim = 0;
  std::vector<Matrix> features;  // each t_max x dim, zero rows past the valid prefix
  Matrix mask;                   // batch x t_max, 0/1

  std::size_t size() const { return features.size(); }
  MaskedSequence sample(std::size_t i) const;
};

PaddedBatch pad_batch(std::span<const MaskedSequence> seqs);
/// Recovers each sequence at its original (unpadded) length.
std::vector<MaskedSequence> unpad_batch(const PaddedBatch& batch);

namespace ad {

/// Mean of rows [0, valid_count) as a 1 x d row; padded rows get zero gradient.
Var masked_mean_pool(Var x, std::size_t valid_count);
/// 1 x d context broadcast to T x d; backward sums row gradients.
Var expand_context(Var ctx, std::size_t T);
/// Zeroes rows at and past valid_count.
Var mask_rows(Var x, std::size_t valid_count);

}  // namespace ad

}  // namespace acmg
