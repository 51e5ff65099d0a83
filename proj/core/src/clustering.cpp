#include "clue/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "clue/errors.hpp"
#include "clue/ops.hpp"
#include "clue/text_io.hpp"

namespace clue::clustering {

namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr double kQFloor = 1e-12;

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

void check_points(const ad::Tensor& points, std::size_t k) {
  if (points.rank() != 2) throw ShapeError("clustering: points must be [M, D]");
  if (k == 0) throw ConfigError("clustering: K must be at least 1");
  if (points.dim(0) < k) {
    throw DataError("clustering: " + std::to_string(points.dim(0)) +
                    " points cannot form " + std::to_string(k) + " clusters");
  }
  for (double v : points.values()) {
    if (!std::isfinite(v)) throw DataError("clustering: non-finite point");
  }
}

std::vector<double> kmeanspp_seed(std::span<const double> x, std::size_t m,
                                  std::size_t d, std::size_t k,
                                  std::mt19937_64& rng) {
  std::vector<double> centers(k * d);
  std::vector<char> chosen(m, 0);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::size_t first = pick(rng);
  chosen[first] = 1;
  std::copy_n(x.data() + first * d, d, centers.data());
  std::vector<double> d2(m);
  for (std::size_t i = 0; i < m; ++i) d2[i] = sq_dist(x.data() + i * d, centers.data(), d);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t next = m;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        next = i;
        if (acc >= r) break;
      }
    }
    if (next == m) {
      // All remaining mass is zero (duplicate points): take any unchosen one.
      for (std::size_t i = 0; i < m; ++i) {
        if (!chosen[i]) {
          next = i;
          break;
        }
      }
    }
    chosen[next] = 1;
    double* dst = centers.data() + c * d;
    std::copy_n(x.data() + next * d, d, dst);
    for (std::size_t i = 0; i < m; ++i) d2[i] = std::min(d2[i], sq_dist(x.data() + i * d, dst, d));
  }
  return centers;
}

std::size_t nearest(const double* p, const std::vector<double>& centers,
                    std::size_t k, std::size_t d, double* best_dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double v = sq_dist(p, centers.data() + c * d, d);
    if (v < bd) {
      bd = v;
      best = c;
    }
  }
  if (best_dist) *best_dist = bd;
  return best;
}

}  // namespace

std::string_view to_string(InitMethod method) {
  return method == InitMethod::kKMeans ? "kmeans" : "gmm";
}

InitMethod parse_init_method(std::string_view name) {
  if (name == "kmeans") return InitMethod::kKMeans;
  if (name == "gmm") return InitMethod::kGmm;
  throw ConfigError("unknown centroid init method '" + std::string(name) +
                    "' (expected kmeans or gmm)");
}

Centroids kmeans_init(const ad::Tensor& points, std::size_t k, std::uint64_t seed,
                      std::size_t max_iters, double tol) {
  check_points(points, k);
  const std::size_t m = points.dim(0), d = points.dim(1);
  auto x = points.values();
  std::mt19937_64 rng(seed);
  std::vector<double> centers = kmeanspp_seed(x, m, d, k, rng);

  std::vector<std::size_t> assign(m);
  std::vector<double> dist(m);
  std::vector<double> next(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < m; ++i) assign[i] = nearest(x.data() + i * d, centers, k, d, &dist[i]);
    std::fill(next.begin(), next.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) next[assign[i] * d + j] += x[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) next[c * d + j] /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-fit point of a cluster that
      // can spare one.
      std::size_t far = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (counts[assign[i]] < 2) continue;
        if (far == m || dist[i] > dist[far]) far = i;
      }
      if (far == m) far = 0;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
      std::copy_n(x.data() + far * d, d, next.data() + c * d);
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      shift = std::max(shift, std::sqrt(sq_dist(next.data() + c * d, centers.data() + c * d, d)));
    centers.swap(next);
    if (shift < tol) break;
  }
  return {ad::Tensor({k, d}, std::move(centers)), InitMethod::kKMeans};
}

Centroids gmm_init(const ad::Tensor& points, std::size_t k, std::uint64_t seed,
                   std::size_t max_iters) {
  Centroids km = kmeans_init(points, k, seed);
  const std::size_t m = points.dim(0), d = points.dim(1);
  auto x = points.values();
  std::vector<double> mean(km.centers.values().begin(), km.centers.values().end());
  std::vector<double> var(k * d, 0.0);
  std::vector<double> weight(k, 0.0);

  // Initial variances and weights from the hard k-means partition.
  std::vector<double> global_var(d, 0.0);
  {
    std::vector<double> gm(d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) gm[j] += x[i * d + j] / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        global_var[j] += (x[i * d + j] - gm[j]) * (x[i * d + j] - gm[j]) / static_cast<double>(m);
    for (auto& v : global_var) v = std::max(v, kVarianceFloor);
  }
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t c = nearest(x.data() + i * d, mean, k, d);
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[i * d + j] - mean[c * d + j];
      var[c * d + j] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    weight[c] = std::max<double>(static_cast<double>(counts[c]), 1.0) / static_cast<double>(m);
    for (std::size_t j = 0; j < d; ++j) {
      var[c * d + j] = counts[c] > 1 ? var[c * d + j] / static_cast<double>(counts[c])
                                     : global_var[j];
      var[c * d + j] = std::max(var[c * d + j], kVarianceFloor);
    }
  }

  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> resp(m * k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // E step
    double ll = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double lp = std::log(weight[c]);
        for (std::size_t j = 0; j < d; ++j) {
          const double v = var[c * d + j];
          const double diff = x[i * d + j] - mean[c * d + j];
          lp -= 0.5 * (log_2pi + std::log(v) + diff * diff / v);
        }
        resp[i * k + c] = lp;
        mx = std::max(mx, lp);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(resp[i * k + c] - mx);
      const double lse = mx + std::log(z);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(resp[i * k + c] - lse);
    }
    // M step
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < m; ++i) nk += resp[i * k + c];
      if (nk < 1e-10) continue;
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += resp[i * k + c] * x[i * d + j];
        mean[c * d + j] = s / nk;
      }
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double diff = x[i * d + j] - mean[c * d + j];
          s += resp[i * k + c] * diff * diff;
        }
        var[c * d + j] = std::max(s / nk, kVarianceFloor);
      }
      weight[c] = nk / static_cast<double>(m);
    }
    if (std::abs(ll - prev_ll) <= 1e-10 * std::max(1.0, std::abs(ll))) break;
    prev_ll = ll;
  }
  return {ad::Tensor({k, d}, std::move(mean)), InitMethod::kGmm};
}

Centroids init_centroids(InitMethod method, const ad::Tensor& points,
                         std::size_t k, std::uint64_t seed) {
  return method == InitMethod::kKMeans ? kmeans_init(points, k, seed)
                                       : gmm_init(points, k, seed);
}

// ---------------------------------------------------------------------------

ad::Tensor soft_assign(ad::Tape& tape, const ad::Tensor& z,
                       const ad::Tensor& centers, double alpha) {
  if (centers.rank() != 2 || centers.dim(0) == 0) {
    throw ShapeError("soft_assign: need at least one centroid");
  }
  if (!(alpha > 0.0)) throw ConfigError("soft_assign: alpha must be positive");
  ad::Tensor d2 = ad::pairwise_sq_dist(tape, z, centers);
  // softmax of the log-kernel normalizes the kernel over clusters.
  ad::Tensor log_kernel = ad::scale(
      tape, ad::log(tape, ad::add_scalar(tape, ad::scale(tape, d2, 1.0 / alpha), 1.0)),
      -(alpha + 1.0) / 2.0);
  return ad::softmax(tape, log_kernel, 1);
}

ad::Tensor target_distribution(const ad::Tensor& q) {
  if (q.rank() != 2) throw ShapeError("target_distribution: Q must be [N, K]");
  const std::size_t n = q.dim(0), k = q.dim(1);
  auto qv = q.values();
  std::vector<double> freq(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) freq[c] += qv[i * k + c];
  for (std::size_t c = 0; c < k; ++c) {
    if (!(freq[c] > 0.0)) {
      throw NumericError("target_distribution: cluster " + std::to_string(c) +
                         " has zero total assignment");
    }
  }
  // p_ik = q_ik g_ik / sum_k' q_ik' g_ik' with g_ik = q_ik / f_k, scaled by
  // the row mass s_i (= 1 for a valid Q). With one row, g = 1 and the
  // scale is s / s = 1, so P reproduces Q bit for bit.
  std::vector<double> p(n * k);
  std::vector<double> g(k);
  for (std::size_t i = 0; i < n; ++i) {
    double mass = 0.0, weighted = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double qi = qv[i * k + c];
      g[c] = qi / freq[c];
      mass += qi;
      weighted += qi * g[c];
    }
    if (std::abs(mass - 1.0) > 1e-9) {
      throw NumericError("target_distribution: row " + std::to_string(i) +
                         " of Q does not sum to 1");
    }
    const double scale = mass / weighted;
    for (std::size_t c = 0; c < k; ++c) p[i * k + c] = qv[i * k + c] * (g[c] * scale);
  }
  return ad::Tensor({n, k}, std::move(p));
}

ad::Tensor cluster_kl_loss(ad::Tape& tape, const ad::Tensor& p, const ad::Tensor& q,
                           Reduction reduction) {
  if (p.shape() != q.shape()) {
    throw ShapeError("cluster_kl_loss: P " + ad::shape_string(p.shape()) +
                     " vs Q " + ad::shape_string(q.shape()));
  }
  ad::Tensor target(p.shape(), std::vector<double>(p.values().begin(), p.values().end()));
  double neg_entropy = 0.0;
  for (double v : target.values()) {
    if (v > 0.0) neg_entropy += v * std::log(v);
  }
  ad::Tensor cross = ad::sum(tape, ad::mul(tape, ad::log(tape, q, kQFloor), target));
  ad::Tensor kl = ad::add_scalar(tape, ad::scale(tape, cross, -1.0), neg_entropy);
  if (reduction == Reduction::kMean) {
    kl = ad::scale(tape, kl, 1.0 / static_cast<double>(p.dim(0)));
  }
  return kl;
}

// ---------------------------------------------------------------------------

void write_centroids_tsv(std::ostream& out, const ad::Tensor& centers) {
  const std::size_t k = centers.dim(0), d = centers.dim(1);
  out << k << '\n';
  auto v = centers.values();
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) out << '\t';
      out << text::format_double(v[c * d + j]);
    }
    out << '\n';
  }
}

ad::Tensor read_centroids_tsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("centroid TSV: missing K header");
  const auto k = text::parse_int<std::size_t>(text::trim(line));
  if (k == 0) throw DataError("centroid TSV: K must be positive");
  std::vector<double> values;
  std::size_t d = 0, rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = text::split(line, '\t');
    if (rows == 0) d = fields.size();
    if (fields.size() != d) throw DataError("centroid TSV: ragged rows");
    for (auto f : fields) values.push_back(text::parse_double(f));
    ++rows;
  }
  if (rows != k) {
    throw DataError("centroid TSV: header says " + std::to_string(k) + " rows, found " +
                    std::to_string(rows));
  }
  return ad::Tensor({k, d}, std::move(values));
}

}  // namespace clue::clustering
