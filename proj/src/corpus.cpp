#include "acmg/corpus.hpp"

#include "acmg/error.hpp"

namespace acmg {

std::vector<std::size_t> Corpus::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (const auto& s : samples) {
    if (s.label < counts.size()) ++counts[s.label];
  }
  return counts;
}

void Corpus::validate() const {
  for (const auto& s : samples) {
    if (s.label >= n_classes()) {
      throw LabelError("sample '" + s.id + "': label " + std::to_string(s.label) +
                       " out of range for " + std::to_string(n_classes()) + " classes");
    }
    if (s.acoustic.dim() != d_a || s.textual.dim() != d_t) {
      throw ShapeError("sample '" + s.id + "': feature widths " + std::to_string(s.acoustic.dim()) +
                       "/" + std::to_string(s.textual.dim()) + " do not match corpus " +
                       std::to_string(d_a) + "/" + std::to_string(d_t));
    }
    auto check = [&](const char* what, std::size_t have, std::size_t want) {
      if (have != want) {
        throw ShapeError("sample '" + s.id + "': " + what + " has length " + std::to_string(have) +
                         ", expected " + std::to_string(want));
      }
    };
    if (s.energy) check("energy", s.energy->size(), s.acoustic.valid_count());
    if (s.diagnostic_a) check("diagnostic_a", s.diagnostic_a->size(), s.acoustic.valid_count());
    if (s.negative_token_flags) {
      check("negative_token_flags", s.negative_token_flags->size(), s.textual.valid_count());
    }
    if (s.diagnostic_t) check("diagnostic_t", s.diagnostic_t->size(), s.textual.valid_count());
  }
}

ModelInput model_input(const Sample& s) { return {s.acoustic, s.textual}; }

Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices) {
  Corpus out;
  out.d_a = corpus.d_a;
  out.d_t = corpus.d_t;
  out.class_names = corpus.class_names;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(corpus.samples.at(i));
  return out;
}

}  // namespace acmg
