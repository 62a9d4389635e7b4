#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advinn/dataset.hpp"
#include "advinn/tensor.hpp"

namespace advinn {

struct ClassifierConfig {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 8;
  // Each input plane has its mean removed and is scaled by input_gain
  // before the first stage.
  double input_gain = 12.0;
  // Output channels of the three conv -> relu -> 2x2 average-pool stages.
  std::vector<std::size_t> widths{24, 40, 64};

  void validate() const;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::size_t predicted_class = 0;  // argmax, ties to the lowest index
  double confidence = 0.0;          // probability of predicted_class
};

Prediction make_prediction(std::span<const double> logits);
// Ties go to the lowest index.
std::size_t argmax_index(std::span<const double> values);
std::size_t argmin_index(std::span<const double> values);

// The attacked model: conv stages, global average pool, affine head.
// Parameters are created with requires_grad off; training switches them on
// for its duration, so a trained model can be shared read-only.
class Classifier {
 public:
  Classifier(const ClassifierConfig& config, std::uint64_t seed);

  // x: C x H x W (-> 1 x K) or N x C x H x W (-> N x K).
  Tensor logits(const Tensor& x) const;
  // Pre-logit features after the final pooling stage: N x feature_width().
  Tensor features(const Tensor& x) const;
  Prediction classify(const Tensor& image) const;

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool on);
  std::size_t parameter_count() const;
  std::size_t feature_width() const { return config_.widths.back(); }
  const ClassifierConfig& config() const { return config_; }
  Classifier clone() const;

 private:
  Classifier() = default;
  Tensor batch_view(const Tensor& x) const;

  ClassifierConfig config_;
  std::vector<Tensor> conv_weights_;
  std::vector<Tensor> conv_biases_;
  Tensor head_weight_;
  Tensor head_bias_;
};

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

// Minimizes mean cross-entropy with Adam over shuffled mini-batches.
// Deterministic in options.seed. Throws NumericalError on a non-finite loss.
TrainReport train_classifier(Classifier& model, const Dataset& data, const TrainOptions& options);

double accuracy(const Classifier& model, const LabelledImages& split);

// argmin over the logits of x, ties to the lowest index.
std::size_t least_likely_class(const Classifier& model, const Tensor& x);

// Perceptual embedding used by the reconstruction loss.
Tensor feature_embed(const Classifier& model, const Tensor& x);

// Stacks C x H x W images into one N x C x H x W tensor.
Tensor stack_images(std::span<const Tensor> images);

}  // namespace advinn
