#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Scale-network nonlinearity: c * (sigmoid(t) - 0.5), so that exp(alpha)
// lies in [exp(-c/2), exp(c/2)] and alpha(0) == 0.
Tensor alpha(const Tensor& t, double c);

struct SubnetConfig {
  std::size_t layers = 3;   // densely connected hidden layers
  std::size_t growth = 16;  // channels added per hidden layer
  std::size_t kernel = 3;   // odd
  double slope = 0.2;       // leaky-ReLU slope between layers
};

// Densely connected conv stack: hidden layer l sees the concatenation of the
// input and every earlier hidden output; a final projection maps the full
// concatenation to `out_channels`. The projection starts at zero, so a fresh
// subnet outputs zeros.
class DenseSubnet {
 public:
  DenseSubnet(std::size_t in_channels, std::size_t out_channels, const SubnetConfig& config, std::mt19937_64& rng);

  // x: N x in_channels x h x w -> N x out_channels x h x w
  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  DenseSubnet clone() const;

 private:
  DenseSubnet() = default;

  std::vector<Tensor> weights_;  // hidden layers, then the projection
  std::vector<Tensor> biases_;
  std::size_t pad_ = 1;
  double slope_ = 0.2;
};

struct CouplingState {
  Tensor w_cln;
  Tensor w_tgt;
};

using SubnetFn = std::function<Tensor(const Tensor&)>;

// The four conditioning functions of one affine coupling block.
struct CouplingFunctions {
  SubnetFn psi, phi, rho, eta;
  double clamp = 2.0;
};

// w_cln' = w_cln * exp(alpha(psi(w_tgt))) + phi(w_tgt)
// w_tgt' = w_tgt * exp(alpha(rho(w_cln'))) + eta(w_cln')
CouplingState coupling_forward(const CouplingState& s, const CouplingFunctions& f);
// Exact algebraic inverse of coupling_forward.
CouplingState coupling_inverse(const CouplingState& s, const CouplingFunctions& f);

class AffineCouplingBlock {
 public:
  AffineCouplingBlock(std::size_t channels, double clamp, const SubnetConfig& config, std::mt19937_64& rng);

  CouplingState forward(const CouplingState& s) const;
  CouplingState inverse(const CouplingState& s) const;
  CouplingFunctions functions() const;
  std::vector<Tensor> parameters() const;
  AffineCouplingBlock clone() const;
  double clamp() const { return clamp_; }

 private:
  AffineCouplingBlock(DenseSubnet psi, DenseSubnet phi, DenseSubnet rho, DenseSubnet eta, double clamp);

  DenseSubnet psi_, phi_, rho_, eta_;
  double clamp_;
};

struct IiemConfig {
  std::size_t channels = 3;  // image channels
  std::size_t dwt_levels = 1;
  std::size_t num_blocks = 2;
  double clamp = 2.0;
  SubnetConfig subnet;

  void validate() const;
};

// Invertible information exchange module: DWT on both inputs, a chain of
// affine coupling blocks, IDWT on both branches. Fully invertible for any
// parameter values; identity map at initialization.
class Iiem {
 public:
  Iiem(const IiemConfig& config, std::uint64_t seed);

  // Images are C x H x W (or N x C x H x W); H and W divisible by 2^levels.
  // Returns (x_adv_raw, x_r).
  std::pair<Tensor, Tensor> forward(const Tensor& x_cln, const Tensor& x_tgt) const;
  // Returns (x_cln, x_tgt).
  std::pair<Tensor, Tensor> inverse(const Tensor& x_adv, const Tensor& x_r) const;

  CouplingState forward_features(CouplingState s) const;
  CouplingState inverse_features(CouplingState s) const;

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool on);
  std::size_t parameter_count() const;
  // Adds N(0, scale^2) noise to every parameter (tests and probes).
  void perturb_parameters(std::uint64_t seed, double scale);
  Iiem clone() const;

  const IiemConfig& config() const { return config_; }
  const std::vector<AffineCouplingBlock>& blocks() const { return blocks_; }

 private:
  Iiem(IiemConfig config, std::vector<AffineCouplingBlock> blocks);

  IiemConfig config_;
  std::vector<AffineCouplingBlock> blocks_;
};

}  // namespace advinn
