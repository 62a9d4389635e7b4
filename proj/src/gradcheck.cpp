#include "advinn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "advinn/error.hpp"
#include "advinn/tape.hpp"

namespace advinn {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  TapeScope no_tape(nullptr);
  const double v = f().item();
  if (!std::isfinite(v)) throw DomainError("finite_difference_check: objective is not finite");
  return v;
}

}  // namespace

double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ContractError("finite_difference_check: h must lie in [1e-6, 1e-3]");

  std::vector<bool> flags;
  for (auto& t : inputs) {
    flags.push_back(t.requires_grad());
    t.clear_grad();
    t.set_requires_grad(true);
  }
  {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f();
    }
    if (!std::isfinite(loss.item())) throw DomainError("finite_difference_check: objective is not finite");
    tape.backward(loss, inputs);
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = evaluate(f);
      values[i] = saved - h;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    t.clear_grad();
    t.set_requires_grad(flags[k]);
  }
  return worst;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor arg = x;
  return finite_difference_check([&] { return f(arg); }, {arg}, h);
}

}  // namespace advinn
