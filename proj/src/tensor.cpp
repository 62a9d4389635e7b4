#include "advinn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "advinn/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace advinn {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor: shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor: zero-length axis in shape " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor() : impl_(std::make_shared<TensorStorage>()) {}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorStorage>()) {
  check_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorStorage>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != numel()) {
    throw DimensionError("accumulate_grad: gradient length " + std::to_string(g.size()) +
                         " does not match tensor length " + std::to_string(numel()));
  }
  auto& buf = impl_->grad;
  if (buf.empty()) {
    buf.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  if (empty()) return Tensor();
  return Tensor(impl_->shape, impl_->data);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void tune_allocator() {
#if defined(__GLIBC__)
  constexpr int kThreshold = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kThreshold);
  mallopt(M_TRIM_THRESHOLD, kThreshold);
#endif
}

}  // namespace advinn
