#pragma once

// Connectionist temporal classification over a unit vocabulary of size K with
// the blank stored as index K (the last logit column).

#include <cstddef>
#include <vector>

#include "omni/feature_matrix.hpp"
#include "omni/tensor.hpp"
#include "omni/units.hpp"

namespace omni {

struct Alignment {
  std::vector<std::size_t> tokens;  // each < vocab, or == vocab for blank
  std::size_t vocab = 0;

  std::size_t blank() const noexcept { return vocab; }
  std::size_t size() const noexcept { return tokens.size(); }
  bool is_blank(std::size_t i) const { return tokens[i] == vocab; }
  bool operator==(const Alignment&) const = default;
};

// beta: merge consecutive repeats, then drop blanks.
UnitSequence collapse(const Alignment& alignment);

// Minimum number of frames an alignment needs to spell `target`: one per unit
// plus a separating blank between each pair of equal neighbours.
std::size_t required_frames(const UnitSequence& target);

// -log P(target | logits) by the log-space forward recursion. When `grad` is
// non-null it receives d(loss)/d(logits) from the forward-backward pass.
// Throws InfeasibleTargetError when the target cannot fit in logits.rows().
double ctc_neg_log_likelihood(const FeatureMatrix& logits, const UnitSequence& target,
                              FeatureMatrix* grad = nullptr);

// Autodiff wrapper: scalar loss whose backward applies the analytic gradient.
Tensor ctc_loss(const Tensor& logits, const UnitSequence& target);

// Per-frame argmax. The factorised model makes this the exact argmax over
// alignments. Ties go to the lowest index, so blank loses every tie.
Alignment best_path(const FeatureMatrix& logits);

}  // namespace omni
