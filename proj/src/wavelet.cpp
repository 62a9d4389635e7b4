#include "advinn/wavelet.hpp"

#include <cctype>
#include <string>

#include "advinn/error.hpp"
#include "advinn/ops.hpp"
#include "advinn/tape.hpp"

namespace advinn {

namespace {

struct Planes {
  std::size_t batch, channels, height, width;
};

Planes planes_of(const Tensor& x, const char* op) {
  if (x.rank() < 3) {
    throw DimensionError(std::string(op) + ": expected at least C x H x W, got " + shape_to_string(x.shape()));
  }
  const std::size_t r = x.rank();
  return {x.numel() / (x.dim(r - 3) * x.dim(r - 2) * x.dim(r - 1)), x.dim(r - 3), x.dim(r - 2), x.dim(r - 1)};
}

// in: batch x C x H x W, out: batch x 4C x H/2 x W/2
void analysis_kernel(const Planes& p, const double* in, double* out) {
  const std::size_t oh = p.height / 2, ow = p.width / 2;
  for (std::size_t n = 0; n < p.batch * p.channels; ++n) {
    const double* src = in + n * p.height * p.width;
    double* ll = out + (4 * n) * oh * ow;
    double* lh = ll + oh * ow;
    double* hl = lh + oh * ow;
    double* hh = hl + oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const double* r0 = src + (2 * i) * p.width;
      const double* r1 = r0 + p.width;
      for (std::size_t j = 0; j < ow; ++j) {
        const double a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
        const std::size_t k = i * ow + j;
        ll[k] = 0.5 * (a + b + c + d);
        lh[k] = 0.5 * (a + b - c - d);
        hl[k] = 0.5 * (a - b + c - d);
        hh[k] = 0.5 * (a - b - c + d);
      }
    }
  }
}

// in: batch x 4C x h x w, out: batch x C x 2h x 2w. `accumulate` adds into out.
void synthesis_kernel(const Planes& coeff, const double* in, double* out, bool accumulate) {
  const std::size_t h = coeff.height, w = coeff.width, W = 2 * w;
  const std::size_t groups = coeff.batch * coeff.channels / 4;
  for (std::size_t n = 0; n < groups; ++n) {
    const double* ll = in + (4 * n) * h * w;
    const double* lh = ll + h * w;
    const double* hl = lh + h * w;
    const double* hh = hl + h * w;
    double* dst = out + n * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      double* r0 = dst + (2 * i) * W;
      double* r1 = r0 + W;
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t k = i * w + j;
        const double a = 0.5 * (ll[k] + lh[k] + hl[k] + hh[k]);
        const double b = 0.5 * (ll[k] + lh[k] - hl[k] - hh[k]);
        const double c = 0.5 * (ll[k] - lh[k] + hl[k] - hh[k]);
        const double d = 0.5 * (ll[k] - lh[k] - hl[k] + hh[k]);
        if (accumulate) {
          r0[2 * j] += a;
          r0[2 * j + 1] += b;
          r1[2 * j] += c;
          r1[2 * j + 1] += d;
        } else {
          r0[2 * j] = a;
          r0[2 * j + 1] = b;
          r1[2 * j] = c;
          r1[2 * j + 1] = d;
        }
      }
    }
  }
}

Shape with_trailing(const Tensor& x, std::size_t c, std::size_t h, std::size_t w) {
  Shape s(x.shape().begin(), x.shape().end() - 3);
  s.push_back(c);
  s.push_back(h);
  s.push_back(w);
  return s;
}

}  // namespace

Band parse_band(std::string_view name) {
  std::string lower(name);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  name = lower;
  if (name == "ll") return Band::LL;
  if (name == "lh") return Band::LH;
  if (name == "hl") return Band::HL;
  if (name == "hh") return Band::HH;
  throw ContractError("unknown sub-band '" + std::string(name) + "'");
}

std::string_view band_name(Band band) {
  switch (band) {
    case Band::LL: return "ll";
    case Band::LH: return "lh";
    case Band::HL: return "hl";
    case Band::HH: return "hh";
  }
  return "?";
}

Tensor haar_analysis(const Tensor& x) {
  const Planes p = planes_of(x, "dwt");
  if (p.height % 2 || p.width % 2) {
    throw DimensionError("dwt: spatial size " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                         " must be divisible by 2");
  }
  Tensor result(with_trailing(x, 4 * p.channels, p.height / 2, p.width / 2));
  analysis_kernel(p, x.data().data(), result.mutable_data().data());
  if (!x.requires_grad() || !active_tape()) return result;
  result.set_requires_grad(true);
  const Planes coeff{p.batch, 4 * p.channels, p.height / 2, p.width / 2};
  active_tape()->record({x}, result, [coeff](std::span<const double> g, std::span<const std::span<double>> gin) {
    synthesis_kernel(coeff, g.data(), gin[0].data(), true);
  });
  return result;
}

Tensor haar_synthesis(const Tensor& coefficients) {
  const Planes p = planes_of(coefficients, "idwt");
  if (p.channels % 4) {
    throw DimensionError("idwt: channel count " + std::to_string(p.channels) + " is not a multiple of 4");
  }
  Tensor result(with_trailing(coefficients, p.channels / 4, 2 * p.height, 2 * p.width));
  synthesis_kernel(p, coefficients.data().data(), result.mutable_data().data(), false);
  if (!coefficients.requires_grad() || !active_tape()) return result;
  result.set_requires_grad(true);
  const Planes image{p.batch, p.channels / 4, 2 * p.height, 2 * p.width};
  active_tape()->record({coefficients}, result,
                        [image](std::span<const double> g, std::span<const std::span<double>> gin) {
                          std::vector<double> tmp(g.size());
                          analysis_kernel(image, g.data(), tmp.data());
                          for (std::size_t i = 0; i < tmp.size(); ++i) gin[0][i] += tmp[i];
                        });
  return result;
}

SubbandStack dwt(const Tensor& x, std::size_t levels) {
  if (levels == 0) throw ContractError("dwt: levels must be positive");
  const Planes p = planes_of(x, "dwt");
  const std::size_t step = std::size_t{1} << levels;
  if (p.height % step || p.width % step) {
    throw DimensionError("dwt: spatial size " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                         " must be divisible by 2^" + std::to_string(levels) + " = " + std::to_string(step));
  }
  Tensor t = x;
  for (std::size_t l = 0; l < levels; ++l) t = haar_analysis(t);
  return SubbandStack{t, levels};
}

Tensor idwt(const SubbandStack& stack) {
  if (stack.levels == 0) throw DimensionError("idwt: stack has zero levels");
  const Planes p = planes_of(stack.data, "idwt");
  const std::size_t groups = std::size_t{1} << (2 * stack.levels);
  if (p.channels % groups) {
    throw DimensionError("idwt: " + std::to_string(p.channels) + " channels cannot hold " +
                         std::to_string(stack.levels) + " decomposition levels");
  }
  Tensor t = stack.data;
  for (std::size_t l = 0; l < stack.levels; ++l) t = haar_synthesis(t);
  return t;
}

std::vector<std::size_t> band_channels(std::size_t source_channels, std::size_t levels, Band band) {
  const std::size_t per_source = std::size_t{1} << (2 * levels);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < source_channels; ++c) {
    for (std::size_t k = 0; k < per_source; ++k) {
      // Digits of k in base 4, most significant = first level.
      Band group = Band::LL;
      for (std::size_t l = 0; l < levels; ++l) {
        const auto digit = static_cast<Band>((k >> (2 * (levels - 1 - l))) & 3);
        if (digit != Band::LL) {
          group = digit;
          break;
        }
      }
      if (group == band) out.push_back(c * per_source + k);
    }
  }
  return out;
}

Tensor subband_select(const SubbandStack& stack, Band band) {
  const Planes p = planes_of(stack.data, "subband_select");
  const std::size_t per_source = std::size_t{1} << (2 * stack.levels);
  if (p.channels % per_source) throw DimensionError("subband_select: malformed sub-band stack");
  const auto channels = band_channels(p.channels / per_source, stack.levels, band);
  return index_select(stack.data, stack.data.rank() - 3, channels);
}

}  // namespace advinn
