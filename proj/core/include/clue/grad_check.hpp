#pragma once

#include <functional>
#include <span>

#include "clue/tape.hpp"
#include "clue/tensor.hpp"

namespace clue::ad {

/// Builds a scalar loss on the given tape from tensors captured by the
/// callable. Must be deterministic: dropout off, noise frozen.
using LossFn = std::function<Tensor(Tape&)>;

/// Compares backward() gradients of every element of `params` against
/// central differences (f(x + eps) - f(x - eps)) / (2 eps). Returns
/// max_i |a - n| / max(1e-6, |a| + |n|). Parameter values are restored and
/// their gradients zeroed on return.
///
/// Relu kinks are not handled here; callers shift inputs away from zero.
double grad_check(const LossFn& f, std::span<Tensor> params, double eps = 1e-5);

/// Single-input form: `f` receives `x` (made to require grad).
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                  double eps = 1e-5);

}  // namespace clue::ad
