#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Backward rule of one recorded operation. `grad_out` is d(loss)/d(output);
// the rule adds its contribution into every non-empty span of `grad_in`
// (one per input, empty when that input needs no gradient). Rules must
// accumulate with += because an input may appear twice.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const std::span<double>> grad_in)>;

// Linear record of differentiable operations, in execution order.
//
// Operations record themselves on the tape installed by the innermost
// TapeScope of the current thread, provided at least one input requires a
// gradient. backward() may be called several times on the same tape; every
// call adds into the .grad buffers of the leaves it reaches, so callers zero
// gradients between optimizer steps.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward);

  // Gradient of a scalar `loss` into every reachable leaf with
  // requires_grad set.
  void backward(const Tensor& loss);
  // Same, restricted to the listed leaves; nodes that cannot reach one of
  // them are skipped entirely.
  void backward(const Tensor& loss, std::span<const Tensor> wrt);

  std::size_t size() const { return nodes_.size(); }
  bool produced(const Tensor& t) const { return producer_.contains(t.storage()); }
  void clear();

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void run_backward(const Tensor& loss, const std::vector<const TensorStorage*>* wrt);

  std::vector<Node> nodes_;
  std::unordered_map<const TensorStorage*, std::size_t> producer_;
};

// Installs a tape (or nullptr, to suspend recording) for the lifetime of the
// scope on the calling thread.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  explicit TapeScope(Tape& tape) : TapeScope(&tape) {}
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

}  // namespace advinn
