#pragma once

// Centroid initialization and the distributional-clustering objective.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>

#include "clue/tape.hpp"
#include "clue/tensor.hpp"

namespace clue::clustering {

enum class InitMethod { kKMeans, kGmm };

std::string_view to_string(InitMethod method);
/// "kmeans" or "gmm"; throws ConfigError otherwise.
InitMethod parse_init_method(std::string_view name);

/// K x D cluster centers.
struct Centroids {
  ad::Tensor centers;
  InitMethod init_method = InitMethod::kKMeans;

  std::size_t k() const { return centers.dim(0); }
  std::size_t dim() const { return centers.dim(1); }
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below `tol`. An emptied cluster is reseeded to the point
/// farthest from its assigned centroid. `points` is [M, D] with M >= k.
Centroids kmeans_init(const ad::Tensor& points, std::size_t k, std::uint64_t seed,
                      std::size_t max_iters = 100, double tol = 1e-6);

/// Diagonal-covariance Gaussian mixture fitted by EM, started from
/// kmeans_init. Returns the component means. Variances are floored at 1e-6.
Centroids gmm_init(const ad::Tensor& points, std::size_t k, std::uint64_t seed,
                   std::size_t max_iters = 100);

Centroids init_centroids(InitMethod method, const ad::Tensor& points,
                         std::size_t k, std::uint64_t seed);

/// Student's-t soft assignment, [N, D] x [K, D] -> [N, K]:
///   q_ik ∝ (1 + |z_i - c_k|^2 / alpha)^(-(alpha + 1) / 2)
/// Differentiable with respect to both `z` and `centers`.
ad::Tensor soft_assign(ad::Tape& tape, const ad::Tensor& z,
                       const ad::Tensor& centers, double alpha = 1.0);

/// Sharpened target p_ik from q_ik: r_ik = q_ik^2 / sum_i q_ik, normalized
/// over k. The result is a constant (never requires grad). Rows of Q must
/// sum to 1 (within 1e-9); a single-row Q is returned unchanged.
ad::Tensor target_distribution(const ad::Tensor& q);

enum class Reduction { kSum, kMean };

/// KL(P || Q) = sum_ik p_ik ln(p_ik / q_ik) with 0 ln 0 = 0 and q floored at
/// 1e-12. `p` is treated as a constant; gradients reach Q's ancestors only.
/// kMean divides by the number of rows.
ad::Tensor cluster_kl_loss(ad::Tape& tape, const ad::Tensor& p,
                           const ad::Tensor& q, Reduction reduction = Reduction::kSum);

/// Centroid TSV: a line holding K, then K rows of D tab-separated values.
void write_centroids_tsv(std::ostream& out, const ad::Tensor& centers);
ad::Tensor read_centroids_tsv(std::istream& in);

}  // namespace clue::clustering
