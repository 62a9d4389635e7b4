#include "advinn/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "advinn/adam.hpp"
#include "advinn/error.hpp"
#include "advinn/ops.hpp"
#include "advinn/tape.hpp"

namespace advinn {

void ClassifierConfig::validate() const {
  if (channels == 0 || num_classes == 0) throw ContractError("classifier: channels and num_classes must be positive");
  if (!(input_gain > 0.0)) throw ContractError("classifier: input_gain must be positive");
  if (widths.empty()) throw ContractError("classifier: at least one conv stage is required");
  const std::size_t factor = std::size_t{1} << widths.size();
  if (height % factor || width % factor) {
    throw ContractError("classifier: input " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be divisible by " + std::to_string(factor));
  }
}

std::size_t argmax_index(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t argmin_index(std::span<const double> values) {
  return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

Prediction make_prediction(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("make_prediction: empty logits");
  Prediction p;
  p.logits.assign(logits.begin(), logits.end());
  const double mx = *std::max_element(logits.begin(), logits.end());
  p.probabilities.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p.probabilities[i] = std::exp(logits[i] - mx));
  for (auto& v : p.probabilities) v /= z;
  p.predicted_class = argmax_index(logits);
  p.confidence = p.probabilities[p.predicted_class];
  return p;
}

Classifier::Classifier(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in = config_.channels;
  for (std::size_t out : config_.widths) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in * 9)));
    Tensor w(Shape{out, in, 3, 3});
    for (auto& v : w.mutable_data()) v = normal(rng);
    conv_weights_.push_back(w);
    conv_biases_.push_back(Tensor::zeros(Shape{out}));
    in = out;
  }
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(in)));
  head_weight_ = Tensor(Shape{config_.num_classes, in});
  for (auto& v : head_weight_.mutable_data()) v = normal(rng);
  head_bias_ = Tensor::zeros(Shape{config_.num_classes});
}

Tensor Classifier::batch_view(const Tensor& x) const {
  const Shape expected{config_.channels, config_.height, config_.width};
  if (x.rank() == 3 && x.shape() == expected) {
    return reshape(x, Shape{1, config_.channels, config_.height, config_.width});
  }
  if (x.rank() == 4 && Shape(x.shape().begin() + 1, x.shape().end()) == expected) return x;
  throw DimensionError("classifier: input shape " + shape_to_string(x.shape()) + " does not match model input " +
                       shape_to_string(expected));
}

Tensor Classifier::features(const Tensor& x) const {
  Tensor h = mul(center_planes(batch_view(x)), config_.input_gain);
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) {
    h = avg_pool2d(relu(conv2d(h, conv_weights_[i], conv_biases_[i], 1)), 2);
  }
  return global_avg_pool(h);
}

Tensor Classifier::logits(const Tensor& x) const { return linear(features(x), head_weight_, head_bias_); }

Prediction Classifier::classify(const Tensor& image) const {
  TapeScope no_tape(nullptr);
  const Tensor z = logits(image);
  if (z.dim(0) != 1) throw DimensionError("classify: expected a single image, got " + shape_to_string(image.shape()));
  return make_prediction(z.data());
}

std::vector<Tensor> Classifier::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) {
    out.push_back(conv_weights_[i]);
    out.push_back(conv_biases_[i]);
  }
  out.push_back(head_weight_);
  out.push_back(head_bias_);
  return out;
}

void Classifier::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.set_requires_grad(on);
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

Classifier Classifier::clone() const {
  Classifier c;
  c.config_ = config_;
  for (const auto& w : conv_weights_) c.conv_weights_.push_back(w.clone());
  for (const auto& b : conv_biases_) c.conv_biases_.push_back(b.clone());
  c.head_weight_ = head_weight_.clone();
  c.head_bias_ = head_bias_.clone();
  return c;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw ContractError("stack_images: no images");
  const Shape& s = images.front().shape();
  if (s.size() != 3) throw DimensionError("stack_images: expected C x H x W, got " + shape_to_string(s));
  std::vector<double> data;
  data.reserve(images.size() * images.front().numel());
  for (const auto& img : images) {
    if (img.shape() != s) throw DimensionError("stack_images: mixed shapes " + shape_to_string(s) + " and " +
                                               shape_to_string(img.shape()));
    data.insert(data.end(), img.data().begin(), img.data().end());
  }
  return Tensor(Shape{images.size(), s[0], s[1], s[2]}, std::move(data));
}

double accuracy(const Classifier& model, const LabelledImages& split) {
  if (split.empty()) return 0.0;
  TapeScope no_tape(nullptr);
  constexpr std::size_t kChunk = 64;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < split.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, split.size() - start);
    const Tensor z = model.logits(stack_images(std::span(split.images).subspan(start, n)));
    const std::size_t k = z.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      if (argmax_index(z.data().subspan(i * k, k)) == split.labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

TrainReport train_classifier(Classifier& model, const Dataset& data, const TrainOptions& options) {
  const LabelledImages& train = data.train;
  if (train.empty()) throw ContractError("train_classifier: empty training set");
  if (options.batch_size == 0) throw ContractError("train_classifier: batch size must be positive");
  for (auto label : train.labels) {
    if (label >= model.config().num_classes) throw ContractError("train_classifier: label out of range");
  }

  model.set_requires_grad(true);
  Adam optimizer(model.parameters(), AdamOptions{.learning_rate = options.learning_rate});
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      std::vector<Tensor> batch;
      std::vector<std::size_t> labels;
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(train.images[order[start + i]]);
        labels.push_back(train.labels[order[start + i]]);
      }
      optimizer.zero_grad();
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = cross_entropy(model.logits(stack_images(batch)), labels);
      }
      if (!std::isfinite(loss.item())) {
        model.set_requires_grad(false);
        throw NumericalError("train_classifier: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(report.steps));
      }
      tape.backward(loss);
      if (optimizer.step() != StepStatus::Ok) {
        model.set_requires_grad(false);
        throw NumericalError("train_classifier: non-finite gradient at step " + std::to_string(report.steps));
      }
      report.final_loss = loss.item();
      ++report.steps;
    }
  }
  optimizer.zero_grad();
  for (auto& p : model.parameters()) p.clear_grad();
  model.set_requires_grad(false);

  report.train_accuracy = accuracy(model, train);
  report.test_accuracy = accuracy(model, data.test);
  return report;
}

std::size_t least_likely_class(const Classifier& model, const Tensor& x) {
  TapeScope no_tape(nullptr);
  const Tensor z = model.logits(x);
  return argmin_index(z.data().subspan(0, z.dim(1)));
}

Tensor feature_embed(const Classifier& model, const Tensor& x) { return model.features(x); }

}  // namespace advinn
