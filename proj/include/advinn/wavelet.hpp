#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Orthonormal 2-D Haar transform.
//
// One level maps a C x H x W array to 4C x H/2 x W/2. For the 2 x 2 block
//   [a b]
//   [c d]
// the four coefficients are
//   LL = (a + b + c + d) / 2     LH = (a + b - c - d) / 2
//   HL = (a - b + c - d) / 2     HH = (a - b - c + d) / 2
// and source channel c owns output channels 4c + {0: LL, 1: LH, 2: HL, 3: HH}
// (channel-major). Additional levels transform the whole stack again, so L
// levels give 4^L * C channels of size H/2^L x W/2^L and channel index
//   c * 4^L + b_1 * 4^(L-1) + ... + b_L
// where b_1 is the band chosen at the first level.
//
// Leading axes beyond the last three are treated as a batch.

enum class Band { LL = 0, LH = 1, HL = 2, HH = 3 };

Band parse_band(std::string_view name);
std::string_view band_name(Band band);

struct SubbandStack {
  Tensor data;
  std::size_t levels = 1;
};

SubbandStack dwt(const Tensor& x, std::size_t levels);
Tensor idwt(const SubbandStack& stack);

// Single-level primitives (differentiable; each is the other's adjoint).
Tensor haar_analysis(const Tensor& x);
Tensor haar_synthesis(const Tensor& coefficients);

// Channel indices of a band group within a stack of `levels` levels built
// from `source_channels` channels. LL is the deepest approximation band (LL
// at every level); a detail label collects every channel whose first non-LL
// band, in application order, is that orientation.
std::vector<std::size_t> band_channels(std::size_t source_channels, std::size_t levels, Band band);

// Coefficients of a band group, gathered along the channel axis.
Tensor subband_select(const SubbandStack& stack, Band band);

}  // namespace advinn
