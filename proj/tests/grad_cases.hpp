#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "advinn/tensor.hpp"

namespace gradcases {

struct Case {
  std::string name;
  std::function<advinn::Tensor()> f;  // scalar objective over `inputs`
  std::vector<advinn::Tensor> inputs;
};

// One case per differentiable primitive, sized from a 1 x 1 x side x side
// base instance. Inputs avoid kinks (relu, clamp) by a margin well above the
// finite-difference step.
std::vector<Case> primitive_cases(std::size_t side, std::uint64_t seed);

// Attack objectives on a 1 x side x side image: L_total w.r.t. the module
// parameters and L_cgt w.r.t. the learnable target.
std::vector<Case> attack_cases(std::size_t side, std::uint64_t seed);

}  // namespace gradcases
