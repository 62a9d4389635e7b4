#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Labelled images, each C x H x W with values in [0, 1].
struct LabelledImages {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  void push_back(Tensor image, std::size_t label);
};

struct Dataset {
  LabelledImages train;
  LabelledImages test;
  std::size_t num_classes = 0;
};

// Procedural texture/shape classes, in label order.
inline constexpr std::size_t kShapeClasses = 8;
std::string_view shape_class_name(std::size_t label);

struct ShapesOptions {
  std::uint64_t seed = 1;
  std::size_t n_train = 512;
  std::size_t n_test = 256;
  std::size_t size = 32;  // square images, 3 channels
};

// Draws one image of `label` (0 <= label < kShapeClasses). Pixel values are
// already quantized to multiples of 1/255 so that on-disk copies are exact.
Tensor render_shape(std::size_t label, std::size_t size, std::uint64_t seed);

// Labels round-robin over the classes, so class counts differ by at most one.
// Deterministic in `options.seed`.
Dataset make_shapes_dataset(const ShapesOptions& options);

}  // namespace advinn
