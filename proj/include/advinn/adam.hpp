#pragma once

#include <cstddef>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Step decay: after every `decay_every` completed steps the learning rate
  // is multiplied by `decay_rate`, never dropping below `min_learning_rate`.
  bool step_decay = false;
  std::size_t decay_every = 200;
  double decay_rate = 0.9;
  double min_learning_rate = 1e-5;

  void validate() const;
};

enum class StepStatus { Ok, Diverged };

// Bias-corrected Adam over a fixed parameter list. Reads each parameter's
// .grad (absent gradients count as zero) and descends.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // A non-finite gradient aborts the step without touching any state.
  [[nodiscard]] StepStatus step();
  void zero_grad();

  std::size_t step_count() const { return step_count_; }
  double learning_rate() const { return learning_rate_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_count_ = 0;
  double learning_rate_;
};

}  // namespace advinn
