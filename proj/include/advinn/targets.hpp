#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "advinn/adam.hpp"
#include "advinn/classifier.hpp"
#include "advinn/dataset.hpp"
#include "advinn/tensor.hpp"

namespace advinn {

enum class TargetMode { HCT, UAP, CGT };

TargetMode parse_target_mode(std::string_view name);  // "hct", "uap", "cgt", any case
std::string_view target_mode_name(TargetMode mode);

// The image of `target_class` on which the model is most confident in that
// class; ties go to the lowest index. Throws LookupError if the class is absent.
Tensor select_hct(const LabelledImages& data, const Classifier& model, std::size_t target_class);

struct UapOptions {
  std::size_t steps = 200;
  double learning_rate = 0.01;
  // Mixing weight of u in each canvas blend (1 - eps) * canvas + eps * u.
  double eps_uap = 0.6;
  std::size_t canvases = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Seeded smooth random images: bilinear upsampling of coarse uniform noise.
std::vector<Tensor> smooth_noise_canvases(std::size_t count, const Shape& image_shape, std::uint64_t seed);

// Data-free targeted ascent: starting from mid-gray, Adam maximizes the mean
// target log-probability of u alone and of u blended into each canvas,
// clipping u to [0, 1] after every step. steps == 0 returns mid-gray.
// Throws NumericalError on a non-finite objective.
Tensor build_uap(const Classifier& model, std::size_t target_class, const UapOptions& options);

// Constant 0.5 image with requires_grad set.
Tensor cgt_init(const Shape& shape);

// One Adam descent step on x_cgt using its accumulated gradient, then
// projection onto [0, 1]. A non-finite gradient skips the step and reports
// Diverged; x_cgt is left untouched.
[[nodiscard]] StepStatus cgt_step(Tensor& x_cgt, Adam& optimizer);

// Per-class cache of constant target images (HCT from a reference split,
// UAP built on first use). Not thread-safe; fill it before sharing.
class TargetBank {
 public:
  TargetBank(const Classifier& model, const LabelledImages& reference, UapOptions uap = {});

  const Tensor& hct(std::size_t target_class);
  const Tensor& uap(std::size_t target_class);
  // Installs a precomputed UAP image (for example one loaded from disk).
  void set_uap(std::size_t target_class, Tensor image);
  const UapOptions& uap_options() const { return uap_options_; }

 private:
  const Classifier* model_;
  const LabelledImages* reference_;
  UapOptions uap_options_;
  std::map<std::size_t, Tensor> hct_;
  std::map<std::size_t, Tensor> uap_;
};

}  // namespace advinn
