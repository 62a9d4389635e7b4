#include "advinn/targets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>

#include "advinn/error.hpp"
#include "advinn/ops.hpp"
#include "advinn/tape.hpp"

namespace advinn {

TargetMode parse_target_mode(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "hct") return TargetMode::HCT;
  if (lower == "uap") return TargetMode::UAP;
  if (lower == "cgt") return TargetMode::CGT;
  throw ContractError("unknown target mode '" + std::string(name) + "' (expected hct, uap or cgt)");
}

std::string_view target_mode_name(TargetMode mode) {
  switch (mode) {
    case TargetMode::HCT: return "hct";
    case TargetMode::UAP: return "uap";
    case TargetMode::CGT: return "cgt";
  }
  return "?";
}

Tensor select_hct(const LabelledImages& data, const Classifier& model, std::size_t target_class) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == target_class) members.push_back(i);
  }
  if (members.empty()) throw LookupError("select_hct: no image of class " + std::to_string(target_class));

  TapeScope no_tape(nullptr);
  std::size_t best = members.front();
  double best_prob = -1.0;
  for (std::size_t i : members) {
    const double p = model.classify(data.images[i]).probabilities.at(target_class);
    if (p > best_prob) {
      best_prob = p;
      best = i;
    }
  }
  return data.images[best].clone();
}

void UapOptions::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("uap: learning rate must be positive");
  if (!(eps_uap >= 0.0 && eps_uap <= 1.0)) throw ContractError("uap: eps_uap must lie in [0, 1]");
}

std::vector<Tensor> smooth_noise_canvases(std::size_t count, const Shape& image_shape, std::uint64_t seed) {
  if (image_shape.size() != 3) throw DimensionError("smooth_noise_canvases: expected C x H x W");
  const std::size_t channels = image_shape[0], h = image_shape[1], w = image_shape[2];
  constexpr std::size_t kGrid = 4;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Tensor> out;
  for (std::size_t n = 0; n < count; ++n) {
    Tensor img(image_shape);
    auto px = img.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double grid[kGrid][kGrid];
      for (auto& row : grid) {
        for (auto& v : row) v = uniform(rng);
      }
      for (std::size_t y = 0; y < h; ++y) {
        const double gy = (h > 1) ? static_cast<double>(y) * (kGrid - 1) / static_cast<double>(h - 1) : 0.0;
        const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), kGrid - 2);
        const double fy = gy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
          const double gx = (w > 1) ? static_cast<double>(x) * (kGrid - 1) / static_cast<double>(w - 1) : 0.0;
          const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), kGrid - 2);
          const double fx = gx - static_cast<double>(x0);
          const double top = grid[y0][x0] * (1.0 - fx) + grid[y0][x0 + 1] * fx;
          const double bottom = grid[y0 + 1][x0] * (1.0 - fx) + grid[y0 + 1][x0 + 1] * fx;
          px[(c * h + y) * w + x] = top * (1.0 - fy) + bottom * fy;
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

Tensor build_uap(const Classifier& model, std::size_t target_class, const UapOptions& options) {
  options.validate();
  const ClassifierConfig& mc = model.config();
  if (target_class >= mc.num_classes) throw ContractError("build_uap: target class out of range");
  const Shape shape{mc.channels, mc.height, mc.width};
  Tensor u = Tensor::full(shape, 0.5);
  if (options.steps == 0) return u;

  std::vector<Tensor> backgrounds;
  for (const auto& canvas : smooth_noise_canvases(options.canvases, shape, options.seed)) {
    backgrounds.push_back(reshape(mul(canvas, 1.0 - options.eps_uap), Shape{1, shape[0], shape[1], shape[2]}));
  }
  const std::vector<std::size_t> labels(backgrounds.size() + 1, target_class);

  u.set_requires_grad(true);
  Adam optimizer({u}, AdamOptions{.learning_rate = options.learning_rate});
  for (std::size_t step = 0; step < options.steps; ++step) {
    optimizer.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      const Tensor u4 = reshape(u, Shape{1, shape[0], shape[1], shape[2]});
      const Tensor scaled = mul(u4, options.eps_uap);
      std::vector<Tensor> parts{u4};
      for (const auto& bg : backgrounds) parts.push_back(add(scaled, bg));
      loss = cross_entropy(model.logits(concat(std::span<const Tensor>(parts), 0)), labels);
    }
    if (!std::isfinite(loss.item())) {
      throw NumericalError("build_uap: non-finite objective at step " + std::to_string(step));
    }
    const Tensor wrt[] = {u};
    tape.backward(loss, wrt);
    if (optimizer.step() != StepStatus::Ok) {
      throw NumericalError("build_uap: non-finite gradient at step " + std::to_string(step));
    }
    for (auto& v : u.mutable_data()) v = std::clamp(v, 0.0, 1.0);
  }
  u.clear_grad();
  return u.detach();
}

Tensor cgt_init(const Shape& shape) {
  Tensor x = Tensor::full(shape, 0.5);
  x.set_requires_grad(true);
  return x;
}

StepStatus cgt_step(Tensor& x_cgt, Adam& optimizer) {
  const StepStatus status = optimizer.step();
  if (status != StepStatus::Ok) return status;
  for (auto& v : x_cgt.mutable_data()) v = std::clamp(v, 0.0, 1.0);
  return status;
}

TargetBank::TargetBank(const Classifier& model, const LabelledImages& reference, UapOptions uap)
    : model_(&model), reference_(&reference), uap_options_(uap) {
  uap_options_.validate();
}

const Tensor& TargetBank::hct(std::size_t target_class) {
  auto it = hct_.find(target_class);
  if (it == hct_.end()) it = hct_.emplace(target_class, select_hct(*reference_, *model_, target_class)).first;
  return it->second;
}

const Tensor& TargetBank::uap(std::size_t target_class) {
  auto it = uap_.find(target_class);
  if (it == uap_.end()) it = uap_.emplace(target_class, build_uap(*model_, target_class, uap_options_)).first;
  return it->second;
}

void TargetBank::set_uap(std::size_t target_class, Tensor image) { uap_[target_class] = std::move(image); }

}  // namespace advinn
