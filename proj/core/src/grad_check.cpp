#include "clue/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace clue::ad {

double grad_check(const LossFn& f, std::span<Tensor> params, double eps) {
  for (auto& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    p.zero_grad();
  }

  auto eval = [&] {
    Tape tape(Tape::Mode::kInference);
    return f(tape).item();
  };

  // Central differences of an O(1) loss carry ~1e-11 of round-off, so
  // gradients below ~1e-6 are compared on an absolute scale.
  constexpr double kScaleFloor = 1e-6;
  double worst = 0.0;
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto values = params[n].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = eval();
      values[i] = orig - eps;
      const double down = eval();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[n][i];
      const double rel =
          std::abs(a - numeric) / std::max(kScaleFloor, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                  double eps) {
  Tensor params[] = {x};
  return grad_check([&](Tape& tape) { return f(tape, x); }, params, eps);
}

}  // namespace clue::ad
