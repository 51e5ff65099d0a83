#pragma once

#include <cmath>
#include <random>

#include "clue/tensor.hpp"

namespace clue {

/// Glorot-uniform [fan_in, fan_out] parameter.
inline ad::Tensor glorot_param(std::size_t fan_in, std::size_t fan_out,
                               std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::parameter({fan_in, fan_out}, std::move(v));
}

inline ad::Tensor constant_param(ad::Shape shape, double value) {
  const std::size_t n = ad::num_elements(shape);
  return ad::Tensor::parameter(std::move(shape), std::vector<double>(n, value));
}

}  // namespace clue
