#include "acmg/sequence.hpp"

#include <algorithm>

#include "acmg/error.hpp"

namespace acmg {

MaskedSequence::MaskedSequence(Matrix features)
    : features_(std::move(features)), valid_count_(features_.rows()) {
  if (valid_count_ == 0) throw EmptySequenceError("masked sequence has no valid positions");
}

MaskedSequence::MaskedSequence(Matrix features, std::size_t valid_count)
    : features_(std::move(features)), valid_count_(valid_count) {
  if (valid_count_ > features_.rows()) {
    throw InvalidLengthError("valid count " + std::to_string(valid_count_) +
                             " exceeds sequence length " + std::to_string(features_.rows()));
  }
  if (valid_count_ == 0) {
    throw EmptySequenceError("masked sequence has no valid positions");
  }
  for (std::size_t i = valid_count_; i < features_.rows(); ++i) {
    for (double v : features_.row(i)) {
      if (v != 0.0) {
        throw InvalidLengthError("padding row " + std::to_string(i) + " is not zero");
      }
    }
  }
}

MaskedSequence MaskedSequence::from_mask(Matrix features, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != features.rows()) {
    throw ShapeError("mask length " + std::to_string(mask.size()) + " does not match " +
                     features.shape_str());
  }
  std::size_t n = 0;
  while (n < mask.size() && mask[n] == 1) ++n;
  for (std::size_t i = n; i < mask.size(); ++i) {
    if (mask[i] != 0) throw InvalidLengthError("mask is not a valid-prefix mask");
  }
  if (n == 0) throw EmptySequenceError("masked sequence has no valid positions");
  return MaskedSequence(std::move(features), n);
}

std::vector<std::uint8_t> MaskedSequence::mask() const {
  std::vector<std::uint8_t> m(length(), 0);
  std::fill_n(m.begin(), valid_count_, std::uint8_t{1});
  return m;
}

Matrix MaskedSequence::valid_features() const {
  std::vector<double> data(features_.values().begin(),
                           features_.values().begin() +
                               static_cast<std::ptrdiff_t>(valid_count_ * dim()));
  return Matrix(valid_count_, dim(), std::move(data));
}

MaskedSequence MaskedSequence::padded_to(std::size_t len) const {
  if (len < length()) {
    throw InvalidLengthError("cannot pad length " + std::to_string(length()) + " down to " +
                             std::to_string(len));
  }
  Matrix f(len, dim());
  std::copy(features_.values().begin(), features_.values().end(), f.values().begin());
  return MaskedSequence(std::move(f), valid_count_);
}

MaskedSequence MaskedSequence::unpadded() const {
  return MaskedSequence(valid_features(), valid_count_);
}

GlobalContext masked_mean_pool(const MaskedSequence& seq) {
  ad::Tape tape(false);
  return {ad::masked_mean_pool(tape.constant(seq.features()), seq.valid_count()).value()};
}

Matrix expand_context(const GlobalContext& ctx, std::size_t T) {
  ad::Tape tape(false);
  return ad::expand_context(tape.constant(ctx.vector), T).value();
}

MaskedSequence PaddedBatch::sample(std::size_t i) const {
  std::size_t n = 0;
  while (n < t_max && mask(i, n) == 1.0) ++n;
  return MaskedSequence(features.at(i), n);
}

PaddedBatch pad_batch(std::span<const MaskedSequence> seqs) {
  PaddedBatch b;
  if (seqs.empty()) return b;
  b.dim = seqs.front().dim();
  for (const auto& s : seqs) {
    if (s.dim() != b.dim) {
      throw ShapeError("pad_batch: mixed feature widths " + std::to_string(b.dim) + " and " +
                       std::to_string(s.dim()));
    }
    b.t_max = std::max(b.t_max, s.valid_count());
  }
  b.mask = Matrix(seqs.size(), b.t_max);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    b.features.push_back(s.unpadded().padded_to(b.t_max).features());
    for (std::size_t t = 0; t < s.valid_count(); ++t) b.mask(i, t) = 1.0;
  }
  return b;
}

std::vector<MaskedSequence> unpad_batch(const PaddedBatch& batch) {
  std::vector<MaskedSequence> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(batch.sample(i).unpadded());
  return out;
}

namespace ad {

Var masked_mean_pool(Var x, std::size_t valid_count) {
  const Matrix& xv = x.value();
  if (valid_count == 0) throw EmptySequenceError("masked_mean_pool: no valid positions");
  if (valid_count > xv.rows()) {
    throw InvalidLengthError("masked_mean_pool: valid count " + std::to_string(valid_count) +
                             " exceeds " + xv.shape_str());
  }
  Matrix out(1, xv.cols());
  for (std::size_t i = 0; i < valid_count; ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out[j] += xv(i, j);
  const double inv = 1.0 / static_cast<double>(valid_count);
  for (double& v : out.values()) v *= inv;
  return x.tape()->push("masked_mean_pool", std::move(out), {x},
                        [x, valid_count, inv](Tape& t, Var, const Matrix& g) {
                          Matrix& gx = t.grad_buffer(x);
                          for (std::size_t i = 0; i < valid_count; ++i)
                            for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) += g[j] * inv;
                        });
}

Var expand_context(Var ctx, std::size_t T) {
  const Matrix& cv = ctx.value();
  if (T == 0) throw InvalidLengthError("expand_context: T must be at least 1");
  if (cv.rows() != 1) throw ShapeError("expand_context: context must be a row, got " + cv.shape_str());
  Matrix out(T, cv.cols());
  for (std::size_t i = 0; i < T; ++i) std::copy(cv.values().begin(), cv.values().end(), out.row(i).begin());
  return ctx.tape()->push("expand_context", std::move(out), {ctx}, [ctx](Tape& t, Var, const Matrix& g) {
    Matrix& gc = t.grad_buffer(ctx);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gc[j] += g(i, j);
  });
}

Var mask_rows(Var x, std::size_t valid_count) {
  Matrix out = x.value();
  if (valid_count > out.rows()) {
    throw InvalidLengthError("mask_rows: valid count exceeds " + out.shape_str());
  }
  std::fill(out.values().begin() + static_cast<std::ptrdiff_t>(valid_count * out.cols()),
            out.values().end(), 0.0);
  return x.tape()->push("mask_rows", std::move(out), {x}, [x, valid_count](Tape& t, Var, const Matrix& g) {
    Matrix& gx = t.grad_buffer(x);
    for (std::size_t k = 0; k < valid_count * g.cols(); ++k) gx[k] += g[k];
  });
}

}  // namespace ad

}  // namespace acmg
