#include "advinn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "advinn/error.hpp"

namespace advinn {

void AdamOptions::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("adam: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("adam: betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ContractError("adam: epsilon must be positive");
  if (step_decay && (decay_every == 0 || !(decay_rate > 0.0) || !(min_learning_rate > 0.0))) {
    throw ContractError("adam: invalid decay schedule");
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options), learning_rate_(options.learning_rate) {
  options_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

StepStatus Adam::step() {
  for (const auto& p : params_) {
    if (p.has_grad() && !all_finite(p.grad())) return StepStatus::Diverged;
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(options_.beta1, t);
  const double correction2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    auto values = p.mutable_data();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
  if (options_.step_decay && step_count_ % options_.decay_every == 0) {
    const double floor = std::min(options_.min_learning_rate, options_.learning_rate);
    learning_rate_ = std::max(learning_rate_ * options_.decay_rate, floor);
  }
  return StepStatus::Ok;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace advinn
