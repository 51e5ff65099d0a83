#pragma once

// Differentiable primitives. Every function computes its forward value
// immediately and, when the tape is recording and some input requires a
// gradient, registers the matching adjoint on the tape.

#include <cstddef>
#include <random>
#include <span>

#include "clue/tape.hpp"
#include "clue/tensor.hpp"

namespace clue::ad {

// --- linear algebra -------------------------------------------------------

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(Tape& tape, const Tensor& a);

// --- elementwise ------------------------------------------------------------
// Binary ops accept either equal shapes or a `b` whose shape is a suffix of
// `a`'s shape; `b` is then broadcast over the leading axes of `a`.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double c);

Tensor relu(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
/// ln(max(a, floor)); the gradient is zero where the floor is active.
Tensor log(Tape& tape, const Tensor& a, double floor = 0.0);

// --- shape ----------------------------------------------------------------

Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Rows of a [V, D] table -> [ids.size(), D].
Tensor embedding_gather(Tape& tape, const Tensor& table,
                        std::span<const int> ids);

// --- reductions and normalization -----------------------------------------

/// Sum of all elements -> [1].
Tensor sum(Tape& tape, const Tensor& a);
/// sqrt(sum a^2) -> [1].
Tensor l2_norm(Tape& tape, const Tensor& a);
Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis);
/// Normalizes over the last axis, then applies gain and bias (both shaped
/// like the last axis).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);

/// Max over `axis` (which must not be the last axis) considering only
/// positions whose mask entry is nonzero. The mask has one entry per index
/// of all axes except the last. Throws ShapeError when an output slot has no
/// valid position.
Tensor max_over_axis(Tape& tape, const Tensor& x, std::size_t axis,
                     std::span<const char> mask);

/// Inverted dropout. Returns `x` itself when not training or rate is 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng,
               bool training);

// --- losses and structured ops --------------------------------------------

/// sum((pred - target)^2) / pred.dim(0): squared error summed per sample,
/// averaged over the leading axis. A rank-1 input is a single sample.
Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target);

/// Mean over rows of -sum_c target * log softmax(logits). `target` is a
/// constant.
Tensor cross_entropy_with_softmax(Tape& tape, const Tensor& logits,
                                  const Tensor& target);

/// Kronecker product of two vectors; for two matrices with the same row
/// count, the row-wise Kronecker product [r,m] (x) [r,n] -> [r, m*n].
Tensor kron_vec(Tape& tape, const Tensor& a, const Tensor& b);

/// Squared Euclidean distances between rows: [n,d], [k,d] -> [n,k].
Tensor pairwise_sq_dist(Tape& tape, const Tensor& a, const Tensor& b);

}  // namespace clue::ad
