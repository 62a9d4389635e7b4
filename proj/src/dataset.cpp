#include "advinn/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "advinn/error.hpp"

namespace advinn {

void LabelledImages::push_back(Tensor image, std::size_t label) {
  images.push_back(std::move(image));
  labels.push_back(label);
}

namespace {

constexpr std::array<std::string_view, kShapeClasses> kNames = {
    "stripes", "checker", "rings", "blobs", "gradient", "cross", "dots", "waves",
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Canvas {
  std::size_t size;
  std::mt19937_64 rng;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
};

// Smooth step of a signed distance `d`: 0 far outside, 1 far inside.
double soft(double d, double width = 0.75) { return 0.5 * (1.0 + std::tanh(d / width)); }

// Coverage mask in [0, 1] for each class, evaluated at pixel centres.
std::vector<double> shape_mask(std::size_t label, Canvas& cv) {
  const std::size_t n = cv.size;
  const double half = 0.5 * static_cast<double>(n);
  std::vector<double> m(n * n, 0.0);
  auto fill = [&](auto&& f) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        m[y * n + x] = std::clamp(f(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5), 0.0, 1.0);
      }
    }
  };
  constexpr double pi = std::numbers::pi;
  switch (label) {
    case 0: {  // straight stripes at a random angle
      const double angle = cv.uniform(0.0, pi);
      const double period = cv.uniform(9.0, 13.0);
      const double phase = cv.uniform(0.0, period);
      const double c = std::cos(angle), s = std::sin(angle);
      fill([&](double x, double y) {
        const double t = x * c + y * s + phase;
        return soft(std::cos(2.0 * pi * t / period) * period / (2.0 * pi));
      });
      break;
    }
    case 1: {  // checkerboard, slightly rotated
      const double cell = cv.uniform(3.0, 4.5);
      const double angle = cv.uniform(-0.25, 0.25);
      const double ox = cv.uniform(0.0, 2.0 * cell), oy = cv.uniform(0.0, 2.0 * cell);
      const double c = std::cos(angle), s = std::sin(angle);
      fill([&](double x, double y) {
        const double u = (x * c + y * s + ox) * pi / cell;
        const double v = (-x * s + y * c + oy) * pi / cell;
        return soft(std::sin(u) * std::sin(v) * cell / pi);
      });
      break;
    }
    case 2: {  // concentric rings
      const double cx = cv.uniform(0.4, 0.6) * n, cy = cv.uniform(0.4, 0.6) * n;
      const double period = cv.uniform(4.5, 6.5);
      const double phase = cv.uniform(0.0, period);
      fill([&](double x, double y) {
        const double r = std::hypot(x - cx, y - cy) + phase;
        return soft(std::cos(2.0 * pi * r / period) * period / (2.0 * pi));
      });
      break;
    }
    case 3: {  // a few soft blobs
      const std::size_t count = 5 + cv.pick(3);
      std::vector<std::array<double, 3>> blobs;
      for (std::size_t i = 0; i < count; ++i) {
        blobs.push_back({cv.uniform(0.15, 0.85) * n, cv.uniform(0.15, 0.85) * n, cv.uniform(2.0, 3.5)});
      }
      fill([&](double x, double y) {
        double v = 0.0;
        for (const auto& b : blobs) {
          const double d2 = (x - b[0]) * (x - b[0]) + (y - b[1]) * (y - b[1]);
          v += std::exp(-d2 / (2.0 * b[2] * b[2]));
        }
        return v;
      });
      break;
    }
    case 4: {  // linear gradient
      const double angle = cv.uniform(0.0, 2.0 * pi);
      const double c = std::cos(angle), s = std::sin(angle);
      fill([&](double x, double y) { return 0.5 + ((x - half) * c + (y - half) * s) / static_cast<double>(n); });
      break;
    }
    case 5: {  // one plus-shaped cross
      const double cx = cv.uniform(0.35, 0.65) * n, cy = cv.uniform(0.35, 0.65) * n;
      const double thick = cv.uniform(1.0, 1.6);
      const double arm = cv.uniform(11.0, 15.0);
      fill([&](double x, double y) {
        const double dx = std::abs(x - cx), dy = std::abs(y - cy);
        const double horizontal = std::min(thick - dy, arm - dx);
        const double vertical = std::min(thick - dx, arm - dy);
        return soft(std::max(horizontal, vertical));
      });
      break;
    }
    case 6: {  // regular dot grid
      const double spacing = cv.uniform(7.5, 9.5);
      const double radius = cv.uniform(1.6, 2.4);
      const double ox = cv.uniform(0.0, spacing), oy = cv.uniform(0.0, spacing);
      fill([&](double x, double y) {
        const double u = std::fmod(x + ox, spacing) - 0.5 * spacing;
        const double v = std::fmod(y + oy, spacing) - 0.5 * spacing;
        return soft(radius - std::hypot(u, v));
      });
      break;
    }
    case 7: {  // wavy stripes
      const double period = cv.uniform(9.0, 13.0);
      const double amplitude = cv.uniform(3.5, 5.0);
      const double wavelength = cv.uniform(11.0, 15.0);
      const double phase = cv.uniform(0.0, 2.0 * pi);
      const bool vertical = cv.pick(2) == 1;
      fill([&](double x, double y) {
        const double along = vertical ? y : x;
        const double across = vertical ? x : y;
        const double t = across + amplitude * std::sin(2.0 * pi * along / wavelength + phase);
        return soft(std::cos(2.0 * pi * t / period) * period / (2.0 * pi));
      });
      break;
    }
    default:
      throw ContractError("render_shape: label out of range");
  }
  return m;
}

}  // namespace

std::string_view shape_class_name(std::size_t label) {
  if (label >= kShapeClasses) throw ContractError("shape_class_name: label out of range");
  return kNames[label];
}

Tensor render_shape(std::size_t label, std::size_t size, std::uint64_t seed) {
  if (label >= kShapeClasses) throw ContractError("render_shape: label out of range");
  if (size < 8) throw ContractError("render_shape: size must be at least 8");
  Canvas cv{size, std::mt19937_64(seed)};

  // Background colour plus a foreground offset of fixed L1 size in a random
  // colour direction.
  std::array<double, 3> bg{}, fg{};
  const double contrast = cv.uniform(0.10, 0.16);
  std::array<double, 3> dir{};
  double l1 = 0.0;
  for (auto& d : dir) l1 += std::abs(d = cv.uniform(-1.0, 1.0));
  for (std::size_t c = 0; c < 3; ++c) {
    const double offset = contrast * dir[c] / l1;
    bg[c] = cv.uniform(0.15 + std::max(0.0, -offset), 0.85 - std::max(0.0, offset));
    fg[c] = bg[c] + offset;
  }
  const std::vector<double> mask = shape_mask(label, cv);
  std::normal_distribution<double> noise(0.0, 0.004);

  Tensor img(Shape{3, size, size});
  auto px = img.mutable_data();
  const std::size_t area = size * size;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < area; ++i) {
      const double v = bg[c] + (fg[c] - bg[c]) * mask[i] + noise(cv.rng);
      px[c * area + i] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
  }
  return img;
}

Dataset make_shapes_dataset(const ShapesOptions& options) {
  if (options.n_train == 0) throw ContractError("make_shapes_dataset: n_train must be positive");
  Dataset ds;
  ds.num_classes = kShapeClasses;
  const std::uint64_t base = splitmix64(options.seed);
  for (std::size_t i = 0; i < options.n_train + options.n_test; ++i) {
    const bool is_train = i < options.n_train;
    const std::size_t local = is_train ? i : i - options.n_train;
    const std::size_t label = local % kShapeClasses;
    Tensor img = render_shape(label, options.size, splitmix64(base ^ (0x1000003ull * (i + 1))));
    (is_train ? ds.train : ds.test).push_back(std::move(img), label);
  }
  return ds;
}

}  // namespace advinn
