#include "advinn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "advinn/error.hpp"

namespace advinn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

struct Gray {
  std::size_t h = 0, w = 0;
  std::vector<double> px;
};

Gray grayscale(const Tensor& x) {
  Gray g;
  std::size_t channels = 1;
  if (x.rank() == 3) {
    channels = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
  } else if (x.rank() == 2) {
    g.h = x.dim(0);
    g.w = x.dim(1);
  } else {
    throw DimensionError("ssim: expected C x H x W or H x W, got " + shape_to_string(x.shape()));
  }
  const std::size_t area = g.h * g.w;
  g.px.assign(area, 0.0);
  const auto d = x.data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < area; ++i) g.px[i] += d[c * area + i];
  }
  for (auto& v : g.px) v /= static_cast<double>(channels);
  return g;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& ty, const std::vector<double>& tx) {
  const std::size_t oh = h - ty.size() + 1, ow = w - tx.size() + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < tx.size(); ++k) s += tx[k] * src[y * w + x + k];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < ty.size(); ++k) s += ty[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_distance");
  const auto x = a.data(), y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

double linf_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "linf_distance");
  const auto x = a.data(), y = b.data();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

std::vector<double> gaussian_taps(std::size_t length, double sigma) {
  if (length == 0 || !(sigma > 0.0)) throw ContractError("gaussian_taps: length and sigma must be positive");
  std::vector<double> taps(length);
  const double centre = 0.5 * static_cast<double>(length - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) - centre;
    total += (taps[i] = std::exp(-t * t / (2.0 * sigma * sigma)));
  }
  for (auto& v : taps) v /= total;
  return taps;
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options) {
  require_same_shape(a, b, "ssim");
  if (options.window == 0) throw ContractError("ssim: window must be positive");
  const Gray ga = grayscale(a), gb = grayscale(b);
  const std::size_t h = ga.h, w = ga.w;
  const auto ty = gaussian_taps(std::min(options.window, h), options.sigma);
  const auto tx = gaussian_taps(std::min(options.window, w), options.sigma);

  std::vector<double> aa(h * w), bb(h * w), ab(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    aa[i] = ga.px[i] * ga.px[i];
    bb[i] = gb.px[i] * gb.px[i];
    ab[i] = ga.px[i] * gb.px[i];
  }
  const auto mu_a = filter_valid(ga.px, h, w, ty, tx);
  const auto mu_b = filter_valid(gb.px, h, w, ty, tx);
  const auto e_aa = filter_valid(aa, h, w, ty, tx);
  const auto e_bb = filter_valid(bb, h, w, ty, tx);
  const auto e_ab = filter_valid(ab, h, w, ty, tx);

  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

MetricRecord measure(const Tensor& x_cln, const Tensor& x_adv, bool success, std::size_t iterations) {
  return MetricRecord{l2_distance(x_cln, x_adv), linf_distance(x_cln, x_adv), ssim(x_cln, x_adv), success,
                      iterations};
}

MetricSummary aggregate(std::span<const MetricRecord> records) {
  if (records.empty()) throw ContractError("aggregate: no records");
  MetricSummary s;
  s.count = records.size();
  double l2 = 0.0, linf = 0.0, sim = 0.0, iters = 0.0;
  std::vector<double> all_iters;
  for (const auto& r : records) {
    iters += static_cast<double>(r.iterations);
    all_iters.push_back(static_cast<double>(r.iterations));
    if (!r.success) continue;
    ++s.successes;
    l2 += r.l2;
    linf += r.linf;
    sim += r.ssim;
  }
  s.asr = static_cast<double>(s.successes) / static_cast<double>(s.count);
  if (s.successes > 0) {
    const double n = static_cast<double>(s.successes);
    s.mean_l2 = l2 / n;
    s.mean_linf = linf / n;
    s.mean_ssim = sim / n;
  }
  s.mean_iterations = iters / static_cast<double>(s.count);
  std::sort(all_iters.begin(), all_iters.end());
  const std::size_t mid = all_iters.size() / 2;
  s.median_iterations = all_iters.size() % 2 ? all_iters[mid] : 0.5 * (all_iters[mid - 1] + all_iters[mid]);
  return s;
}

}  // namespace advinn
