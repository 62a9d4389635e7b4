#include "advinn/attack.hpp"

#include <cmath>
#include <string>

#include "advinn/adam.hpp"
#include "advinn/error.hpp"
#include "advinn/ops.hpp"
#include "advinn/tape.hpp"
#include "advinn/wavelet.hpp"

namespace advinn {

void AttackConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("attack config: " + what); };
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail("epsilon must lie in [0, 1]");
  if (!(kappa > 0.0 && kappa < 1.0)) fail("kappa must lie in (0, 1)");
  if (!(lambda_adv >= 0.0) || !(w_ll >= 0.0) || !(w_detail >= 0.0) || !(lambda_perp >= 0.0)) {
    fail("loss weights must be non-negative");
  }
  if (!(lr1 > 0.0) || !(lr2 > 0.0) || !(lr1_min > 0.0)) fail("learning rates must be positive");
  if (lr1_decay_every == 0 || !(lr1_decay_rate > 0.0 && lr1_decay_rate <= 1.0)) {
    fail("lr1 decay needs a positive period and a rate in (0, 1]");
  }
  if (max_iter == 0) fail("max_iter must be at least 1");
  if (num_blocks == 0) fail("num_blocks must be at least 1");
  if (dwt_levels == 0) fail("dwt_levels must be at least 1");
}

IiemConfig AttackConfig::iiem_config(std::size_t channels) const {
  IiemConfig c;
  c.channels = channels;
  c.dwt_levels = dwt_levels;
  c.num_blocks = num_blocks;
  return c;
}

Tensor loss_rec(const Tensor& x_cln, const Tensor& x_adv, const Classifier& model, const AttackConfig& cfg) {
  if (x_cln.shape() != x_adv.shape()) {
    throw DimensionError("loss_rec: shape mismatch " + shape_to_string(x_cln.shape()) + " vs " +
                         shape_to_string(x_adv.shape()));
  }
  if (x_cln.rank() < 3) throw DimensionError("loss_rec: expected C x H x W images");
  Tensor clean_coeffs, clean_features;
  {
    TapeScope no_tape(nullptr);
    clean_coeffs = dwt(x_cln, cfg.dwt_levels).data;
    clean_features = cfg.lambda_perp > 0.0 ? model.features(x_cln) : Tensor();
  }
  const Tensor diff = sub(dwt(x_adv, cfg.dwt_levels).data, clean_coeffs);

  // Per-element band weights over the coefficient stack.
  const std::size_t channels = x_cln.dim(x_cln.rank() - 3);
  const Shape& cs = diff.shape();
  const std::size_t stack_channels = cs[cs.size() - 3];
  const std::size_t plane = cs[cs.size() - 2] * cs[cs.size() - 1];
  std::vector<double> channel_weight(stack_channels, cfg.w_detail);
  for (std::size_t c : band_channels(channels, cfg.dwt_levels, Band::LL)) channel_weight[c] = cfg.w_ll;
  Tensor weights(cs);
  auto wd = weights.mutable_data();
  for (std::size_t i = 0; i < wd.size(); ++i) wd[i] = channel_weight[(i / plane) % stack_channels];

  Tensor rec = sum(mul(square(diff), weights));
  if (cfg.lambda_perp > 0.0) {
    rec = add(rec, mul(sum(square(sub(model.features(x_adv), clean_features))), cfg.lambda_perp));
  }
  return rec;
}

Tensor loss_adv(const Classifier& model, const Tensor& x_adv, std::size_t target_class) {
  if (target_class >= model.config().num_classes) throw ContractError("loss_adv: target class out of range");
  return cross_entropy(model.logits(x_adv), target_class);
}

Tensor loss_total(const Tensor& rec, const Tensor& adv, double lambda_adv) {
  if (rec.numel() != 1 || adv.numel() != 1) throw DimensionError("loss_total: losses must be scalars");
  return add(mul(adv, lambda_adv), rec);
}

Tensor clip_to_budget(const Tensor& x_adv_raw, const Tensor& x_cln, double epsilon) {
  if (x_adv_raw.shape() != x_cln.shape()) {
    throw DimensionError("clip_to_budget: shape mismatch " + shape_to_string(x_adv_raw.shape()) + " vs " +
                         shape_to_string(x_cln.shape()));
  }
  Tensor lo(x_cln.shape()), hi(x_cln.shape());
  auto c = x_cln.data();
  auto l = lo.mutable_data(), h = hi.mutable_data();
  for (std::size_t i = 0; i < c.size(); ++i) {
    l[i] = std::clamp(c[i] - epsilon, 0.0, 1.0);
    h[i] = std::clamp(c[i] + epsilon, 0.0, 1.0);
  }
  return clamp(x_adv_raw, lo, hi);
}

Tensor quantize(const Tensor& x) {
  Tensor out = x.detach();
  for (auto& v : out.mutable_data()) v = std::clamp(std::round(v * 255.0), 0.0, 255.0) / 255.0;
  return out;
}

namespace {

Tensor initial_target(const AttackConfig& cfg, const Shape& shape, std::size_t target_class, TargetBank* targets) {
  switch (cfg.target_mode) {
    case TargetMode::CGT:
      return cgt_init(shape);
    case TargetMode::HCT:
    case TargetMode::UAP: {
      if (!targets) throw ContractError("run_attack: HCT and UAP modes need a target bank");
      const Tensor& t = cfg.target_mode == TargetMode::HCT ? targets->hct(target_class) : targets->uap(target_class);
      if (t.shape() != shape) throw DimensionError("run_attack: target image shape " + shape_to_string(t.shape()));
      return t.detach();
    }
  }
  throw ContractError("run_attack: unknown target mode");
}

}  // namespace

AttackResult run_attack(const Classifier& model, const Tensor& x_cln, const AttackConfig& cfg, TargetBank* targets,
                        const IterateObserver& observer) {
  cfg.validate();
  const ClassifierConfig& mc = model.config();
  const Shape shape{mc.channels, mc.height, mc.width};
  if (x_cln.shape() != shape) {
    throw DimensionError("run_attack: image shape " + shape_to_string(x_cln.shape()) + " does not match model input " +
                         shape_to_string(shape));
  }

  AttackResult result;
  result.target_class = least_likely_class(model, x_cln);
  const std::size_t target = result.target_class;

  auto theta = std::make_shared<Iiem>(cfg.iiem_config(mc.channels), cfg.seed);
  theta->set_requires_grad(true);
  Adam theta_opt(theta->parameters(), AdamOptions{.learning_rate = cfg.lr1,
                                                  .step_decay = true,
                                                  .decay_every = cfg.lr1_decay_every,
                                                  .decay_rate = cfg.lr1_decay_rate,
                                                  .min_learning_rate = cfg.lr1_min});
  Tensor x_tgt = initial_target(cfg, shape, target, targets);
  const bool learn_target = cfg.target_mode == TargetMode::CGT;
  std::unique_ptr<Adam> target_opt;
  if (learn_target) target_opt = std::make_unique<Adam>(std::vector<Tensor>{x_tgt}, AdamOptions{.learning_rate = cfg.lr2});

  const std::vector<Tensor> theta_params = theta->parameters();
  const Tensor target_leaf[] = {x_tgt};

  for (;;) {
    Tape tape;
    Tensor raw, x_r, adv, logits;
    {
      TapeScope scope(tape);
      std::tie(raw, x_r) = theta->forward(x_cln, x_tgt);
      adv = clip_to_budget(raw, x_cln, cfg.epsilon);
      logits = model.logits(adv);
    }
    const double p_tgt = make_prediction(logits.data()).probabilities[target];
    if (observer) observer(IterateView{result.iterations, *theta, x_cln, x_tgt, raw, x_r, adv, p_tgt});

    const bool out_of_budget = result.iterations >= cfg.max_iter;
    if (p_tgt > cfg.kappa || out_of_budget) {
      const Tensor x_q = quantize(adv);
      const Prediction pq = model.classify(x_q);
      // A gate hit that does not survive quantization resumes the loop.
      if (pq.predicted_class == target || out_of_budget) {
        result.x_adv = x_q;
        result.x_adv_raw = raw.detach();
        result.x_r = x_r.detach();
        result.x_tgt = x_tgt.detach();
        result.success = pq.predicted_class == target;
        result.final_target_prob = pq.probabilities[target];
        break;
      }
    }

    Tensor l_adv, l_total;
    {
      TapeScope scope(tape);
      l_adv = cross_entropy(logits, target);
      l_total = loss_total(loss_rec(x_cln, adv, model, cfg), l_adv, cfg.lambda_adv);
    }
    if (!std::isfinite(l_total.item())) {
      throw NumericalError("run_attack: non-finite loss at iteration " + std::to_string(result.iterations));
    }
    if (cfg.trace) result.trace.push_back(TracePoint{result.iterations, l_total.item(), p_tgt});

    theta_opt.zero_grad();
    tape.backward(l_total, theta_params);
    if (learn_target) {
      target_opt->zero_grad();
      tape.backward(l_adv, target_leaf);
    }
    if (theta_opt.step() != StepStatus::Ok) {
      throw NumericalError("run_attack: non-finite gradient at iteration " + std::to_string(result.iterations));
    }
    // A non-finite target gradient only skips that target update.
    if (learn_target && cgt_step(x_tgt, *target_opt) != StepStatus::Ok) ++result.skipped_target_steps;
    ++result.iterations;
  }

  theta_opt.zero_grad();
  for (auto p : theta_params) p.clear_grad();
  theta->set_requires_grad(false);
  result.theta = std::move(theta);
  result.metrics = measure(x_cln, result.x_adv, result.success, result.iterations);
  return result;
}

DroppedInfoEstimate estimate_dropped_info(const Iiem& theta, const Tensor& x_cln) {
  TapeScope no_tape(nullptr);
  const Tensor constant = Tensor::full(x_cln.shape(), 0.5);
  DroppedInfoEstimate est;
  est.residual_with_constant_target = theta.forward(x_cln, constant).second;
  est.sigma_hat = sub(est.residual_with_constant_target, constant);
  return est;
}

}  // namespace advinn
