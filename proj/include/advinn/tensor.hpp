#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace advinn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is written
  bool requires_grad = false;
};

// Dense row-major array of doubles.
//
// A Tensor is a handle: copies alias the same storage, the way autodiff
// frameworks treat parameters. Use clone() for a deep copy. Operations in
// ops.hpp never mutate their inputs.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  bool empty() const { return impl_->data.empty(); }

  std::span<const double> data() const { return impl_->data; }
  // Direct write access; bypasses the tape. Used by optimizers and loaders.
  std::span<double> mutable_data() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(std::span<const double> g);
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  // Deep copy of data; gradient tracking flags are not carried over.
  Tensor clone() const;
  // Same data, detached from any tape (a deep copy with requires_grad off).
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const TensorStorage* storage() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorStorage> impl_;
};

bool all_finite(std::span<const double> values);

// Keeps freed tensor buffers inside the process heap instead of returning
// them to the OS on every free. Autodiff churns through same-sized buffers,
// so this removes most page-fault overhead. Idempotent; a no-op off glibc.
void tune_allocator();

}  // namespace advinn
