#pragma once

// Straightforward reference formulas over plain vectors. Nothing here calls
// into clue::, so agreement with the library is an independent check.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// q_ik = (1 + |z_i - c_k|^2 / a)^(-(a+1)/2) / sum_k' (...)
inline Vec soft_assign(const Vec& z, const Vec& c, std::size_t n, std::size_t k,
                       std::size_t d, double alpha) {
  Vec q(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double dist = 0.0;
      for (std::size_t e = 0; e < d; ++e) {
        const double diff = z[i * d + e] - c[j * d + e];
        dist += diff * diff;
      }
      q[i * k + j] = std::pow(1.0 + dist / alpha, -(alpha + 1.0) / 2.0);
      total += q[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) q[i * k + j] /= total;
  }
  return q;
}

/// p_ik = (q_ik^2 / f_k) / sum_k' (q_ik'^2 / f_k'), f_k = sum_i q_ik
inline Vec target_distribution(const Vec& q, std::size_t n, std::size_t k) {
  Vec f(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) f[j] += q[i * k + j];
  Vec p(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = q[i * k + j] * q[i * k + j] / f[j];
      total += p[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= total;
  }
  return p;
}

/// sum_ik p ln(p / q), 0 ln 0 = 0
inline double kl(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

/// u = (a (x) h) W for a single token; W is (K*D) x D row-major.
inline Vec kron_aggregate(const Vec& a, const Vec& h, const Vec& w) {
  const std::size_t k = a.size(), d = h.size();
  Vec u(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double coeff = a[i] * h[j];
      const std::size_t row = i * d + j;
      for (std::size_t c = 0; c < d; ++c) u[c] += coeff * w[row * d + c];
    }
  return u;
}

/// First Adam update from zero moments.
inline double adam_first_step(double w, double g, double lr, double b1 = 0.9,
                              double b2 = 0.999, double eps = 1e-8) {
  const double m = (1.0 - b1) * g;
  const double v = (1.0 - b2) * g * g;
  const double m_hat = m / (1.0 - b1);
  const double v_hat = v / (1.0 - b2);
  return w - lr * m_hat / (std::sqrt(v_hat) + eps);
}

inline Vec softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = v > mx ? v : mx;
  Vec y(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (double& v : y) v /= total;
  return y;
}

/// KL(N(mu, e^lv) || N(0, 1)) summed over dims, averaged over n rows.
inline double gaussian_kl(const Vec& mu, const Vec& lv, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s += 0.5 * (std::exp(lv[i]) + mu[i] * mu[i] - 1.0 - lv[i]);
  }
  return s / static_cast<double>(n);
}

}  // namespace oracle
