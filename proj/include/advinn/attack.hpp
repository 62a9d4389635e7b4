#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "advinn/classifier.hpp"
#include "advinn/coupling.hpp"
#include "advinn/metrics.hpp"
#include "advinn/targets.hpp"
#include "advinn/tensor.hpp"

namespace advinn {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // L-infinity budget
  double kappa = 0.90;           // stop once the target probability exceeds this
  double lambda_adv = 3.0;
  double w_ll = 2.0;
  double w_detail = 1.0;  // shared by the LH, HL and HH bands
  double lambda_perp = 0.001;
  double lr1 = 1e-4;  // module parameters; x0.9 every 200 steps, floored at 1e-5
  std::size_t lr1_decay_every = 200;
  double lr1_decay_rate = 0.9;
  double lr1_min = 1e-5;
  double lr2 = 1e-2;  // learnable target image
  std::size_t max_iter = 2000;
  std::size_t num_blocks = 2;
  std::size_t dwt_levels = 1;
  TargetMode target_mode = TargetMode::CGT;
  std::uint64_t seed = 0;
  bool trace = false;

  // Accepts epsilon == 0 as a degenerate budget; every other range follows
  // the field comments. Throws ContractError.
  void validate() const;
  IiemConfig iiem_config(std::size_t channels) const;
};

// Sum over bands of w_band * ||T(x_cln)_band - T(x_adv)_band||^2 plus
// lambda_perp * ||features(x_cln) - features(x_adv)||^2, with T the Haar
// transform at cfg.dwt_levels. x_cln is treated as a constant.
Tensor loss_rec(const Tensor& x_cln, const Tensor& x_adv, const Classifier& model, const AttackConfig& cfg);
// Cross-entropy of the model's prediction on x_adv against target_class.
Tensor loss_adv(const Classifier& model, const Tensor& x_adv, std::size_t target_class);
Tensor loss_total(const Tensor& rec, const Tensor& adv, double lambda_adv);

// Clamp into [x_cln - eps, x_cln + eps] and then [0, 1]; gradient passes where
// the raw value lies inside the closed interval.
Tensor clip_to_budget(const Tensor& x_adv_raw, const Tensor& x_cln, double epsilon);

// round(x * 255) (half away from zero) clamped to [0, 255], divided by 255.
Tensor quantize(const Tensor& x);

struct TracePoint {
  std::size_t iteration = 0;
  double loss = 0.0;
  double target_prob = 0.0;
};

struct AttackResult {
  std::size_t target_class = 0;
  Tensor x_adv;      // quantized
  Tensor x_adv_raw;  // module output before clipping, at the returned iterate
  Tensor x_r;
  Tensor x_tgt;  // target image fed to the module at the returned iterate
  bool success = false;
  std::size_t iterations = 0;  // parameter updates performed
  std::size_t skipped_target_steps = 0;  // target updates dropped for a non-finite gradient
  double final_target_prob = 0.0;  // after quantization
  MetricRecord metrics;
  std::vector<TracePoint> trace;
  std::shared_ptr<const Iiem> theta;  // trained module
};

// Called once per evaluated iterate, before any update.
struct IterateView {
  std::size_t iteration;
  const Iiem& theta;
  const Tensor& x_cln;
  const Tensor& x_tgt;
  const Tensor& x_adv_raw;
  const Tensor& x_r;
  const Tensor& x_adv;  // clipped
  double target_prob;
};
using IterateObserver = std::function<void(const IterateView&)>;

// Optimizes a fresh module per image towards the least-likely class of x_cln.
// `targets` supplies HCT/UAP images and may be null in CGT mode. Running out
// of iterations is reported through `success`; a non-finite loss or gradient
// throws NumericalError.
AttackResult run_attack(const Classifier& model, const Tensor& x_cln, const AttackConfig& cfg,
                        TargetBank* targets = nullptr, const IterateObserver& observer = {});

struct DroppedInfoEstimate {
  Tensor sigma_hat;
  Tensor residual_with_constant_target;
};

// Re-runs a trained module with a constant 0.5 target and reports x_r - 0.5.
DroppedInfoEstimate estimate_dropped_info(const Iiem& theta, const Tensor& x_cln);

}  // namespace advinn
