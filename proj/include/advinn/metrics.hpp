#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Distances on the [0, 1] pixel scale. Shapes must match.
double l2_distance(const Tensor& a, const Tensor& b);
double linf_distance(const Tensor& a, const Tensor& b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Single-scale SSIM on the channel-mean grayscale image (C x H x W or H x W),
// averaged over every window position that fits inside the image. A side
// shorter than the window shrinks the window to that side (Gaussian taps
// renormalized), leaving a single position along it.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

// Normalized 1-D Gaussian taps at offsets i - (length - 1) / 2.
std::vector<double> gaussian_taps(std::size_t length, double sigma);

struct MetricRecord {
  double l2 = 0.0;
  double linf = 0.0;
  double ssim = 1.0;
  bool success = false;
  std::size_t iterations = 0;
};

MetricRecord measure(const Tensor& x_cln, const Tensor& x_adv, bool success, std::size_t iterations);

struct MetricSummary {
  std::size_t count = 0;
  std::size_t successes = 0;
  double asr = 0.0;
  // Image-quality means over successful records; absent when none succeeded.
  std::optional<double> mean_l2;
  std::optional<double> mean_linf;
  std::optional<double> mean_ssim;
  // Iteration statistics over every record.
  double mean_iterations = 0.0;
  double median_iterations = 0.0;
};

MetricSummary aggregate(std::span<const MetricRecord> records);

}  // namespace advinn
