#include "clue/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "clue/errors.hpp"

namespace clue::ad {

namespace {

bool wants_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, std::vector<double> values, bool grad) {
  Tensor out(std::move(shape), std::move(values));
  if (grad) out.set_requires_grad(true);
  return out;
}

// Number of times `b` tiles `a`, or throws when b's shape is not a suffix.
std::size_t broadcast_repeats(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sb.size() <= sa.size() &&
            std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!ok) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(sb) +
                     " onto " + shape_string(sa));
  }
  return a.size() / b.size();
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> y(a.size());
  auto x = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(x[i]);
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, out, deriv]() mutable {
      auto xv = a.values();
      auto yv = out.values();
      auto gy = out.grad();
      auto gx = a.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output({m, n}, std::move(c), grad);
  if (grad) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto gc = out.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = gc.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bv.data() + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + p] += s;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = gc.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> y(a.size());
  auto x = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output({c, r}, std::move(y), grad);
  if (grad) {
    tape.record(out, [a, out, r, c]() mutable {
      auto gy = out.grad();
      auto gx = a.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "add");
  const std::size_t nb = b.size();
  std::vector<double> y(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) y[r * nb + j] += bv[j];
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, b, out, reps, nb]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < reps; ++r)
          for (std::size_t j = 0; j < nb; ++j) gb[j] += gy[r * nb + j];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "sub");
  const std::size_t nb = b.size();
  std::vector<double> y(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) y[r * nb + j] -= bv[j];
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, b, out, reps, nb]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < reps; ++r)
          for (std::size_t j = 0; j < nb; ++j) gb[j] -= gy[r * nb + j];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "mul");
  const std::size_t nb = b.size();
  std::vector<double> y(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) y[r * nb + j] = av[r * nb + j] * bv[j];
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output(a.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, b, out, reps, nb]() mutable {
      auto gy = out.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t r = 0; r < reps; ++r)
          for (std::size_t j = 0; j < nb; ++j) ga[r * nb + j] += gy[r * nb + j] * bv[j];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < reps; ++r)
          for (std::size_t j = 0; j < nb; ++j) gb[j] += gy[r * nb + j] * av[r * nb + j];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(
      tape, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double c) {
  return unary(
      tape, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& a, double floor) {
  return unary(
      tape, a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

// ---------------------------------------------------------------------------

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (num_elements(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " +
                     shape_string(shape));
  }
  std::vector<double> y(a.values().begin(), a.values().end());
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output(std::move(shape), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, out]() mutable {
      auto gy = out.grad();
      auto gx = a.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != shape[i]) {
        throw ShapeError("concat: " + shape_string(s) + " vs " + shape_string(shape));
      }
    }
    total += s[axis];
  }
  shape[axis] = total;
  AxisSplit out_split = split_axis(shape, axis, "concat");
  std::vector<double> y(num_elements(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  bool grad = false;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.dim(axis);
    auto pv = p.values();
    for (std::size_t o = 0; o < out_split.outer; ++o)
      for (std::size_t e = 0; e < ext; ++e)
        std::copy_n(pv.data() + (o * ext + e) * out_split.inner, out_split.inner,
                    y.data() + (o * total + offset + e) * out_split.inner);
    offset += ext;
    grad = grad || wants_grad(tape, {&p});
  }
  Tensor out = make_output(std::move(shape), std::move(y), grad);
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record(out, [inputs, offsets, out, axis, out_split, total]() mutable {
      auto gy = out.grad();
      for (std::size_t n = 0; n < inputs.size(); ++n) {
        Tensor& p = inputs[n];
        if (!p.requires_grad()) continue;
        const std::size_t ext = p.dim(axis);
        auto gp = p.grad();
        for (std::size_t o = 0; o < out_split.outer; ++o)
          for (std::size_t e = 0; e < ext; ++e)
            for (std::size_t i = 0; i < out_split.inner; ++i)
              gp[(o * ext + e) * out_split.inner + i] +=
                  gy[(o * total + offsets[n] + e) * out_split.inner + i];
      }
    });
  }
  return out;
}

Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  AxisSplit s = split_axis(a.shape(), axis, "slice");
  if (begin >= end || end > s.extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + shape_string(a.shape()));
  }
  Shape shape = a.shape();
  const std::size_t ext = end - begin;
  shape[axis] = ext;
  std::vector<double> y(num_elements(shape));
  auto x = a.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(x.data() + (o * s.extent + begin) * s.inner, ext * s.inner,
                y.data() + o * ext * s.inner);
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output(std::move(shape), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, out, s, begin, ext]() mutable {
      auto gy = out.grad();
      auto gx = a.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < ext * s.inner; ++i)
          gx[(o * s.extent + begin) * s.inner + i] += gy[o * ext * s.inner + i];
    });
  }
  return out;
}

Tensor embedding_gather(Tape& tape, const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding_gather: table must be 2-D");
  if (ids.empty()) throw ShapeError("embedding_gather: no ids");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> y(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw ShapeError("embedding_gather: id " + std::to_string(ids[i]) +
                       " outside table of " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, y.data() + i * d);
  }
  bool grad = wants_grad(tape, {&table});
  Tensor out = make_output({ids.size(), d}, std::move(y), grad);
  if (grad) {
    std::vector<int> idv(ids.begin(), ids.end());
    tape.record(out, [table, out, idv, d]() mutable {
      auto gy = out.grad();
      auto gt = table.grad();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          gt[static_cast<std::size_t>(idv[i]) * d + j] += gy[i * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output({1}, {s}, grad);
  if (grad) {
    tape.record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : a.grad()) gx += g;
    });
  }
  return out;
}

Tensor l2_norm(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  const double norm = std::sqrt(s);
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output({1}, {norm}, grad);
  if (grad) {
    tape.record(out, [a, out, norm]() mutable {
      if (norm == 0.0) return;
      const double g = out.grad()[0] / norm;
      auto x = a.values();
      auto gx = a.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * x[i];
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis) {
  AxisSplit s = split_axis(a.shape(), axis, "softmax");
  std::vector<double> y(a.size());
  auto x = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(x[base + e * s.inner] - mx);
        y[base + e * s.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) y[base + e * s.inner] /= z;
    }
  }
  bool grad = wants_grad(tape, {&a});
  Tensor out = make_output(a.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, out, s]() mutable {
      auto yv = out.values();
      auto gy = out.grad();
      auto gx = a.grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double dot = 0.0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t k = base + e * s.inner;
            dot += gy[k] * yv[k];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t k = base + e * s.inner;
            gx[k] += yv[k] * (gy[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  const std::size_t f = x.shape().back();
  if (gain.size() != f || bias.size() != f) {
    throw ShapeError("layer_norm: gain/bias must match last axis of " +
                     shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / f;
  std::vector<double> y(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * f;
    double mean = 0.0;
    for (std::size_t j = 0; j < f; ++j) mean += row[j];
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(f);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * f + j] = h;
      y[r * f + j] = h * gv[j] + bv[j];
    }
  }
  bool grad = wants_grad(tape, {&x, &gain, &bias});
  Tensor out = make_output(x.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [x, gain, bias, out, xhat = std::move(xhat),
                      inv_std = std::move(inv_std), rows, f]() mutable {
      auto gy = out.grad();
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = gain.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < f; ++j) gg[j] += gy[r * f + j] * xhat[r * f + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < f; ++j) gb[j] += gy[r * f + j];
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
        const double inv_f = 1.0 / static_cast<double>(f);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < f; ++j) {
            const double d = gy[r * f + j] * gv[j];
            mean_d += d;
            mean_dx += d * xhat[r * f + j];
          }
          mean_d *= inv_f;
          mean_dx *= inv_f;
          for (std::size_t j = 0; j < f; ++j) {
            const double d = gy[r * f + j] * gv[j];
            gx[r * f + j] += inv_std[r] * (d - mean_d - xhat[r * f + j] * mean_dx);
          }
        }
      }
    });
  }
  return out;
}

Tensor max_over_axis(Tape& tape, const Tensor& x, std::size_t axis,
                     std::span<const char> mask) {
  const Shape& shape = x.shape();
  if (shape.size() < 2 || axis + 1 >= shape.size()) {
    throw ShapeError("max_over_axis: axis must precede the last axis of " +
                     shape_string(shape));
  }
  const std::size_t f = shape.back();
  if (mask.size() != x.size() / f) {
    throw ShapeError("max_over_axis: mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(x.size() / f));
  }
  std::size_t outer = 1, mid = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i + 1 < shape.size(); ++i) mid *= shape[i];
  const std::size_t ext = shape[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out_shape.push_back(shape[i]);
  std::vector<double> y(outer * mid * f);
  std::vector<std::size_t> argmax(y.size());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t m = 0; m < mid; ++m) {
      bool any = false;
      for (std::size_t e = 0; e < ext; ++e) any = any || mask[(o * ext + e) * mid + m];
      if (!any) throw ShapeError("max_over_axis: every position is masked");
      for (std::size_t j = 0; j < f; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t e = 0; e < ext; ++e) {
          if (!mask[(o * ext + e) * mid + m]) continue;
          const std::size_t idx = ((o * ext + e) * mid + m) * f + j;
          if (!found || xv[idx] > best) {
            best = xv[idx];
            best_idx = idx;
            found = true;
          }
        }
        const std::size_t oi = (o * mid + m) * f + j;
        y[oi] = best;
        argmax[oi] = best_idx;
      }
    }
  }
  bool grad = wants_grad(tape, {&x});
  Tensor out = make_output(std::move(out_shape), std::move(y), grad);
  if (grad) {
    tape.record(out, [x, out, argmax = std::move(argmax)]() mutable {
      auto gy = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng,
               bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ShapeError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> m(x.size());
  for (auto& v : m) v = keep(rng) ? s : 0.0;
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * m[i];
  bool grad = wants_grad(tape, {&x});
  Tensor out = make_output(x.shape(), std::move(y), grad);
  if (grad) {
    tape.record(out, [x, out, m = std::move(m)]() mutable {
      auto gy = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * m[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: " + shape_string(pred.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  const double n = pred.rank() == 1 ? 1.0 : static_cast<double>(pred.dim(0));
  auto p = pred.values();
  auto t = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  bool grad = wants_grad(tape, {&pred, &target});
  Tensor out = make_output({1}, {s / n}, grad);
  if (grad) {
    tape.record(out, [pred, target, out, n]() mutable {
      const double g = 2.0 * out.grad()[0] / n;
      auto p = pred.values();
      auto t = target.values();
      if (pred.requires_grad()) {
        auto gp = pred.grad();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto gt = target.grad();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * (p[i] - t[i]);
      }
    });
  }
  return out;
}

Tensor cross_entropy_with_softmax(Tape& tape, const Tensor& logits,
                                  const Tensor& target) {
  if (logits.rank() != 2 || logits.shape() != target.shape()) {
    throw ShapeError("cross_entropy_with_softmax: logits " +
                     shape_string(logits.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  auto lv = logits.values();
  auto tv = target.values();
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - log_z);
      loss -= tv[i * c + j] * (row[j] - log_z);
    }
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  bool grad = wants_grad(tape, {&logits});
  Tensor out = make_output({1}, {loss * inv_b}, grad);
  if (grad) {
    tape.record(out, [logits, target, out, probs = std::move(probs), b, c,
                      inv_b]() mutable {
      const double g = out.grad()[0] * inv_b;
      auto tv = target.values();
      auto gl = logits.grad();
      for (std::size_t i = 0; i < b; ++i) {
        double tsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) tsum += tv[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          gl[i * c + j] += g * (probs[i * c + j] * tsum - tv[i * c + j]);
      }
    });
  }
  return out;
}

Tensor kron_vec(Tape& tape, const Tensor& a, const Tensor& b) {
  std::size_t rows = 1, m = 0, n = 0;
  Shape shape;
  if (a.rank() == 1 && b.rank() == 1) {
    m = a.dim(0);
    n = b.dim(0);
    shape = {m * n};
  } else if (a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0)) {
    rows = a.dim(0);
    m = a.dim(1);
    n = b.dim(1);
    shape = {rows, m * n};
  } else {
    throw ShapeError("kron_vec: " + shape_string(a.shape()) + " (x) " +
                     shape_string(b.shape()));
  }
  std::vector<double> y(rows * m * n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        y[(r * m + i) * n + j] = av[r * m + i] * bv[r * n + j];
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output(std::move(shape), std::move(y), grad);
  if (grad) {
    tape.record(out, [a, b, out, rows, m, n]() mutable {
      auto gy = out.grad();
      auto av = a.values();
      auto bv = b.values();
      const bool ga_on = a.requires_grad(), gb_on = b.requires_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double g = gy[(r * m + i) * n + j];
            if (ga_on) a.grad()[r * m + i] += g * bv[r * n + j];
            if (gb_on) b.grad()[r * n + j] += g * av[r * m + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor pairwise_sq_dist(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("pairwise_sq_dist: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = b.dim(0), d = a.dim(1);
  std::vector<double> y(n * k);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = av[i * d + j] - bv[c * d + j];
        s += diff * diff;
      }
      y[i * k + c] = s;
    }
  bool grad = wants_grad(tape, {&a, &b});
  Tensor out = make_output({n, k}, std::move(y), grad);
  if (grad) {
    tape.record(out, [a, b, out, n, k, d]() mutable {
      auto gy = out.grad();
      auto av = a.values();
      auto bv = b.values();
      const bool ga_on = a.requires_grad(), gb_on = b.requires_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
          const double g = 2.0 * gy[i * k + c];
          if (g == 0.0) continue;
          for (std::size_t j = 0; j < d; ++j) {
            const double diff = av[i * d + j] - bv[c * d + j];
            if (ga_on) a.grad()[i * d + j] += g * diff;
            if (gb_on) b.grad()[c * d + j] -= g * diff;
          }
        }
    });
  }
  return out;
}

}  // namespace clue::ad
