#include "advinn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "advinn/error.hpp"
#include "advinn/tape.hpp"

namespace advinn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool wants_tape(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor finish(Tensor out, std::vector<Tensor> inputs, BackwardFn fn) {
  out.set_requires_grad(true);
  active_tape()->record(std::move(inputs), out, std::move(fn));
  return out;
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                       " and " + shape_to_string(b.shape()));
}

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast broadcast_rule(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (b.numel() == 1) return Broadcast::RightScalar;
  if (a.numel() == 1) return Broadcast::LeftScalar;
  shape_mismatch(op, a, b);
}

// Shared driver for add / sub / mul. `f` computes the value, `da`, `db` the
// local partial derivatives.
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast rule = broadcast_rule(op, a, b);
  const Tensor& big = rule == Broadcast::LeftScalar ? b : a;
  const std::size_t n = big.numel();
  const std::size_t ia = rule == Broadcast::LeftScalar ? 0 : 1;
  const std::size_t ib = rule == Broadcast::RightScalar ? 0 : 1;
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * ia], bv[i * ib]);
  Tensor result(big.shape(), std::move(out));
  if (!wants_tape({&a, &b})) return result;
  return finish(result, {a, b}, [a, b, ia, ib, n, da, db](std::span<const double> g,
                                                          std::span<const std::span<double>> gin) {
    auto av = a.data();
    auto bv = b.data();
    if (!gin[0].empty()) {
      for (std::size_t i = 0; i < n; ++i) gin[0][i * ia] += g[i] * da(av[i * ia], bv[i * ib]);
    }
    if (!gin[1].empty()) {
      for (std::size_t i = 0; i < n; ++i) gin[1][i * ib] += g[i] * db(av[i * ia], bv[i * ib]);
    }
  });
}

// Shared driver for elementwise unary maps whose derivative is expressed
// through the input `x` and output `y`.
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D d) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Tensor result(x.shape(), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [x, result, d](std::span<const double> g, std::span<const std::span<double>> gin) {
    auto xv = x.data();
    auto yv = result.data();
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * d(xv[i], yv[i]);
  });
}

double stable_sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Rows of the last axis: (outer, inner) such that outer * inner == numel.
std::pair<std::size_t, std::size_t> rows_of_last_axis(const Tensor& x) {
  const std::size_t inner = x.shape().back();
  return {x.numel() / inner, inner};
}

void check_axis(const char* op, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(x.shape()));
  }
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor add(const Tensor& a, double b) {
  return unary(a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary(a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a, b);
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor result(Shape{a.dim(0), b.dim(1)});
  MapMat(result.mutable_data().data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  if (!wants_tape({&a, &b})) return result;
  return finish(result, {a, b}, [a, b, m, k, n](std::span<const double> g, std::span<const std::span<double>> gin) {
    ConstMapMat gm(g.data(), m, n);
    if (!gin[0].empty()) MapMat(gin[0].data(), m, k).noalias() += gm * ConstMapMat(b.data().data(), k, n).transpose();
    if (!gin[1].empty()) MapMat(gin[1].data(), k, n).noalias() += ConstMapMat(a.data().data(), m, k).transpose() * gm;
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) shape_mismatch("linear", x, weight);
  if (bias.numel() != weight.dim(0)) shape_mismatch("linear", weight, bias);
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  Tensor result(Shape{x.dim(0), weight.dim(0)});
  MapMat r(result.mutable_data().data(), batch, out);
  r.noalias() = ConstMapMat(x.data().data(), batch, in) * ConstMapMat(weight.data().data(), out, in).transpose();
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (Eigen::Index j = 0; j < out; ++j) r(i, j) += bias[static_cast<std::size_t>(j)];
  }
  if (!wants_tape({&x, &weight, &bias})) return result;
  return finish(result, {x, weight, bias},
                [x, weight, batch, in, out](std::span<const double> g, std::span<const std::span<double>> gin) {
                  ConstMapMat gm(g.data(), batch, out);
                  if (!gin[0].empty()) {
                    MapMat(gin[0].data(), batch, in).noalias() += gm * ConstMapMat(weight.data().data(), out, in);
                  }
                  if (!gin[1].empty()) {
                    MapMat(gin[1].data(), out, in).noalias() += gm.transpose() * ConstMapMat(x.data().data(), batch, in);
                  }
                  if (!gin[2].empty()) {
                    for (Eigen::Index i = 0; i < batch; ++i) {
                      for (Eigen::Index j = 0; j < out; ++j) gin[2][static_cast<std::size_t>(j)] += gm(i, j);
                    }
                  }
                });
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_c, height, width, out_c, kernel, pad, out_h, out_w;
  std::size_t cols_rows() const { return in_c * kernel * kernel; }
  std::size_t cols_cols() const { return out_h * out_w; }
};

// Unfolds image `n` into a (C*k*k) x (out_h*out_w) row-major matrix.
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  const std::size_t positions = g.cols_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const double* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* img) {
  const std::size_t positions = g.cols_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    double* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1) || weight.dim(2) != weight.dim(3)) {
    shape_mismatch("conv2d", x, weight);
  }
  const bool has_bias = !bias.empty();
  if (has_bias && bias.numel() != weight.dim(0)) shape_mismatch("conv2d", weight, bias);
  ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), pad, 0, 0};
  if (x.dim(2) + 2 * pad < geo.kernel || x.dim(3) + 2 * pad < geo.kernel) shape_mismatch("conv2d", x, weight);
  geo.out_h = geo.height + 2 * pad - geo.kernel + 1;
  geo.out_w = geo.width + 2 * pad - geo.kernel + 1;

  const std::size_t rows = geo.cols_rows();
  const std::size_t positions = geo.cols_cols();
  const std::size_t in_stride = geo.in_c * geo.height * geo.width;
  const std::size_t out_stride = geo.out_c * positions;

  auto cols = std::make_shared<std::vector<double>>(geo.batch * rows * positions);
  Tensor result(Shape{geo.batch, geo.out_c, geo.out_h, geo.out_w});
  double* out = result.mutable_data().data();
  ConstMapMat w(weight.data().data(), static_cast<Eigen::Index>(geo.out_c), static_cast<Eigen::Index>(rows));
  for (std::size_t n = 0; n < geo.batch; ++n) {
    double* c = cols->data() + n * rows * positions;
    im2col(geo, x.data().data() + n * in_stride, c);
    MapMat o(out + n * out_stride, static_cast<Eigen::Index>(geo.out_c), static_cast<Eigen::Index>(positions));
    o.noalias() = w * ConstMapMat(c, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(positions));
    if (has_bias) {
      for (std::size_t oc = 0; oc < geo.out_c; ++oc) o.row(static_cast<Eigen::Index>(oc)).array() += bias[oc];
    }
  }

  if (!wants_tape({&x, &weight, &bias})) return result;
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return finish(result, std::move(inputs),
                [geo, weight, cols, has_bias](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const auto rows = static_cast<Eigen::Index>(geo.cols_rows());
                  const auto positions = static_cast<Eigen::Index>(geo.cols_cols());
                  const auto out_c = static_cast<Eigen::Index>(geo.out_c);
                  const std::size_t in_stride = geo.in_c * geo.height * geo.width;
                  const std::size_t out_stride = geo.out_c * geo.cols_cols();
                  ConstMapMat w(weight.data().data(), out_c, rows);
                  RowMat dcols;
                  for (std::size_t n = 0; n < geo.batch; ++n) {
                    ConstMapMat gn(g.data() + n * out_stride, out_c, positions);
                    ConstMapMat cn(cols->data() + n * geo.cols_rows() * geo.cols_cols(), rows, positions);
                    if (!gin[0].empty()) {
                      dcols.noalias() = w.transpose() * gn;
                      col2im_add(geo, dcols.data(), gin[0].data() + n * in_stride);
                    }
                    if (!gin[1].empty()) MapMat(gin[1].data(), out_c, rows).noalias() += gn * cn.transpose();
                    if (has_bias && !gin[2].empty()) {
                      // Plain loop: Eigen's vectorized sum() peels by address, so its
                      // rounding would depend on where the buffer happens to sit.
                      for (Eigen::Index oc = 0; oc < out_c; ++oc) {
                        double acc = 0.0;
                        for (Eigen::Index p = 0; p < positions; ++p) acc += gn(oc, p);
                        gin[2][static_cast<std::size_t>(oc)] += acc;
                      }
                    }
                  }
                });
}

Tensor exp(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
  if (!all_finite(y.data())) throw DomainError("exp: result overflows for input shape " + shape_to_string(x.shape()));
  return y;
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log: argument " + std::to_string(v) + " is not positive");
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lower bound exceeds upper bound");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& x, const Tensor& lo, const Tensor& hi) {
  if (lo.shape() != x.shape()) shape_mismatch("clamp", x, lo);
  if (hi.shape() != x.shape()) shape_mismatch("clamp", x, hi);
  auto xv = x.data();
  auto lv = lo.data();
  auto hv = hi.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (lv[i] > hv[i]) throw ContractError("clamp: lower bound exceeds upper bound");
    out[i] = std::clamp(xv[i], lv[i], hv[i]);
  }
  Tensor result(x.shape(), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [x, lo, hi](std::span<const double> g, std::span<const std::span<double>> gin) {
    auto xv = x.data();
    auto lv = lo.data();
    auto hv = hi.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] >= lv[i] && xv[i] <= hv[i]) gin[0][i] += g[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor result = Tensor::scalar(s);
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (auto& v : gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return mul(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Tensor result(std::move(shape), x.values());
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis("slice", x, axis);
  if (length == 0 || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis " + std::to_string(axis) + " of " + shape_to_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.length + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  }
  Tensor result(std::move(shape), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [s, start, length](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = g.data() + o * length * s.inner;
      double* dst = gin[0].data() + (o * s.length + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  check_axis("concat", parts[0], axis);
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = shape;
    if (a.size() != b.size()) shape_mismatch("concat", parts[0], p);
    a[axis] = b[axis] = 0;
    if (a != b) shape_mismatch("concat", parts[0], p);
    total += p.dim(axis);
  }
  shape[axis] = total;
  const AxisSplit out_split = split_at(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const AxisSplit s = split_at(p.shape(), axis);
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * s.length * s.inner), s.length * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * out_split.length + offset) * s.inner));
    }
    offset += s.length;
  }
  Tensor result(std::move(shape), std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!active_tape() || !any) return result;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<AxisSplit> splits;
  for (const auto& p : parts) splits.push_back(split_at(p.shape(), axis));
  return finish(result, std::move(inputs),
                [splits, offsets, out_split](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t k = 0; k < splits.size(); ++k) {
                    if (gin[k].empty()) continue;
                    const AxisSplit& s = splits[k];
                    for (std::size_t o = 0; o < s.outer; ++o) {
                      const double* src = g.data() + (o * out_split.length + offsets[k]) * s.inner;
                      double* dst = gin[k].data() + o * s.length * s.inner;
                      for (std::size_t i = 0; i < s.length * s.inner; ++i) dst[i] += src[i];
                    }
                  }
                });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
  check_axis("index_select", x, axis);
  if (indices.empty()) throw DimensionError("index_select: empty index list");
  for (auto i : indices) {
    if (i >= x.dim(axis)) {
      throw DimensionError("index_select: index " + std::to_string(i) + " out of range for axis " +
                           std::to_string(axis) + " of " + shape_to_string(x.shape()));
    }
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = indices.size();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(s.outer * idx.size() * s.inner);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.length + idx[k]) * s.inner), s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * idx.size() + k) * s.inner));
    }
  }
  Tensor result(std::move(shape), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [s, idx](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double* src = g.data() + (o * idx.size() + k) * s.inner;
        double* dst = gin[0].data() + (o * s.length + idx[k]) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  const auto [outer, inner] = rows_of_last_axis(x);
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < outer; ++r) {
    const double* in = xv.data() + r * inner;
    double* o = out.data() + r * inner;
    const double mx = *std::max_element(in, in + inner);
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < inner; ++i) o[i] /= z;
  }
  Tensor result(x.shape(), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x},
                [result, outer, inner](std::span<const double> g, std::span<const std::span<double>> gin) {
                  auto y = result.data();
                  for (std::size_t r = 0; r < outer; ++r) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) dot += g[r * inner + i] * y[r * inner + i];
                    for (std::size_t i = 0; i < inner; ++i) {
                      gin[0][r * inner + i] += y[r * inner + i] * (g[r * inner + i] - dot);
                    }
                  }
                });
}

Tensor log_softmax(const Tensor& x) {
  const auto [outer, inner] = rows_of_last_axis(x);
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < outer; ++r) {
    const double* in = xv.data() + r * inner;
    const double mx = *std::max_element(in, in + inner);
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) z += std::exp(in[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = in[i] - lse;
  }
  Tensor result(x.shape(), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x},
                [result, outer, inner](std::span<const double> g, std::span<const std::span<double>> gin) {
                  auto y = result.data();
                  for (std::size_t r = 0; r < outer; ++r) {
                    double gs = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) gs += g[r * inner + i];
                    for (std::size_t i = 0; i < inner; ++i) {
                      gin[0][r * inner + i] += g[r * inner + i] - std::exp(y[r * inner + i]) * gs;
                    }
                  }
                });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  const auto [outer, inner] = rows_of_last_axis(logits);
  if (labels.size() != outer) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits of shape " +
                         shape_to_string(logits.shape()));
  }
  for (auto l : labels) {
    if (l >= inner) throw DimensionError("cross_entropy: label " + std::to_string(l) + " out of range");
  }
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  auto xv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(xv.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < outer; ++r) {
    const double* in = xv.data() + r * inner;
    double* p = probs->data() + r * inner;
    const double mx = *std::max_element(in, in + inner);
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) z += (p[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < inner; ++i) p[i] /= z;
    loss -= in[lab[r]] - mx - std::log(z);
  }
  Tensor result = Tensor::scalar(loss / static_cast<double>(outer));
  if (!wants_tape({&logits})) return result;
  return finish(result, {logits},
                [probs, lab, outer, inner](std::span<const double> g, std::span<const std::span<double>> gin) {
                  const double scale = g[0] / static_cast<double>(outer);
                  for (std::size_t r = 0; r < outer; ++r) {
                    for (std::size_t i = 0; i < inner; ++i) {
                      const double onehot = i == lab[r] ? 1.0 : 0.0;
                      gin[0][r * inner + i] += scale * ((*probs)[r * inner + i] - onehot);
                    }
                  }
                });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t rows = logits.numel() / logits.shape().back();
  std::vector<std::size_t> labels(rows, label);
  return cross_entropy(logits, labels);
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 4 || window == 0 || x.dim(2) % window || x.dim(3) % window) {
    throw DimensionError("avg_pool2d: shape " + shape_to_string(x.shape()) + " not divisible by window " +
                         std::to_string(window));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3), oh = h / window, ow = w / window;
  const double scale = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(planes * oh * ow, 0.0);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(p * oh + y / window) * ow + xx / window] += xv[(p * h + y) * w + xx] * scale;
      }
    }
  }
  Tensor result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x},
                [planes, h, w, oh, ow, window, scale](std::span<const double> g, std::span<const std::span<double>> gin) {
                  for (std::size_t p = 0; p < planes; ++p) {
                    for (std::size_t y = 0; y < h; ++y) {
                      for (std::size_t xx = 0; xx < w; ++xx) {
                        gin[0][(p * h + y) * w + xx] += g[(p * oh + y / window) * ow + xx / window] * scale;
                      }
                    }
                  }
                });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: expected N x C x H x W, got " + shape_to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  const double scale = 1.0 / static_cast<double>(area);
  std::vector<double> out(planes, 0.0);
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += xv[p * area + i];
    out[p] = s * scale;
  }
  Tensor result(Shape{x.dim(0), x.dim(1)}, std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [planes, area, scale](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < area; ++i) gin[0][p * area + i] += g[p] * scale;
    }
  });
}

Tensor center_planes(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("center_planes: expected N x C x H x W, got " + shape_to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  const double scale = 1.0 / static_cast<double>(area);
  auto xv = x.data();
  std::vector<double> out(xv.begin(), xv.end());
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += xv[p * area + i];
    for (std::size_t i = 0; i < area; ++i) out[p * area + i] -= s * scale;
  }
  Tensor result(x.shape(), std::move(out));
  if (!wants_tape({&x})) return result;
  return finish(result, {x}, [planes, area, scale](std::span<const double> g, std::span<const std::span<double>> gin) {
    for (std::size_t p = 0; p < planes; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < area; ++i) s += g[p * area + i];
      for (std::size_t i = 0; i < area; ++i) gin[0][p * area + i] += g[p * area + i] - s * scale;
    }
  });
}

}  // namespace advinn
