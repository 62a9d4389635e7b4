#include "advinn/coupling.hpp"

#include <cmath>
#include <string>

#include "advinn/error.hpp"
#include "advinn/ops.hpp"
#include "advinn/wavelet.hpp"

namespace advinn {

Tensor alpha(const Tensor& t, double c) { return mul(add(sigmoid(t), -0.5), c); }

// ---------------------------------------------------------------- DenseSubnet

DenseSubnet::DenseSubnet(std::size_t in_channels, std::size_t out_channels, const SubnetConfig& config,
                         std::mt19937_64& rng)
    : pad_(config.kernel / 2), slope_(config.slope) {
  if (config.kernel % 2 == 0) throw ContractError("DenseSubnet: kernel size must be odd");
  if (config.growth == 0) throw ContractError("DenseSubnet: growth must be positive");
  const std::size_t k = config.kernel;
  std::size_t width = in_channels;
  const double gain = std::sqrt(2.0 / (1.0 + config.slope * config.slope));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const double stddev = gain / std::sqrt(static_cast<double>(width * k * k));
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor w(Shape{config.growth, width, k, k});
    for (auto& v : w.mutable_data()) v = normal(rng);
    weights_.push_back(w);
    biases_.push_back(Tensor::zeros(Shape{config.growth}));
    width += config.growth;
  }
  weights_.push_back(Tensor::zeros(Shape{out_channels, width, k, k}));
  biases_.push_back(Tensor::zeros(Shape{out_channels}));
}

Tensor DenseSubnet::forward(const Tensor& x) const {
  std::vector<Tensor> features{x};
  const std::size_t hidden = weights_.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    Tensor in = features.size() == 1 ? x : concat(features, 1);
    features.push_back(leaky_relu(conv2d(in, weights_[l], biases_[l], pad_), slope_));
  }
  Tensor in = features.size() == 1 ? x : concat(features, 1);
  return conv2d(in, weights_.back(), biases_.back(), pad_);
}

std::vector<Tensor> DenseSubnet::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

DenseSubnet DenseSubnet::clone() const {
  DenseSubnet copy;
  copy.pad_ = pad_;
  copy.slope_ = slope_;
  for (const auto& w : weights_) copy.weights_.push_back(w.clone());
  for (const auto& b : biases_) copy.biases_.push_back(b.clone());
  return copy;
}

// ------------------------------------------------------------- coupling maps

namespace {

void check_state(const CouplingState& s, const char* op) {
  if (s.w_cln.shape() != s.w_tgt.shape()) {
    throw DimensionError(std::string(op) + ": branch shapes differ, " + shape_to_string(s.w_cln.shape()) + " vs " +
                         shape_to_string(s.w_tgt.shape()));
  }
}

Tensor checked(const Tensor& t, const Tensor& like, const char* name) {
  if (t.shape() != like.shape()) {
    throw DimensionError(std::string("coupling: ") + name + " produced " + shape_to_string(t.shape()) +
                         ", expected " + shape_to_string(like.shape()));
  }
  return t;
}

}  // namespace

CouplingState coupling_forward(const CouplingState& s, const CouplingFunctions& f) {
  check_state(s, "acb_forward");
  const Tensor scale_cln = exp(alpha(checked(f.psi(s.w_tgt), s.w_cln, "psi"), f.clamp));
  Tensor w_cln = add(mul(s.w_cln, scale_cln), checked(f.phi(s.w_tgt), s.w_cln, "phi"));
  const Tensor scale_tgt = exp(alpha(checked(f.rho(w_cln), s.w_tgt, "rho"), f.clamp));
  Tensor w_tgt = add(mul(s.w_tgt, scale_tgt), checked(f.eta(w_cln), s.w_tgt, "eta"));
  return {w_cln, w_tgt};
}

CouplingState coupling_inverse(const CouplingState& s, const CouplingFunctions& f) {
  check_state(s, "acb_inverse");
  const Tensor unscale_tgt = exp(mul(alpha(checked(f.rho(s.w_cln), s.w_tgt, "rho"), f.clamp), -1.0));
  Tensor w_tgt = mul(sub(s.w_tgt, checked(f.eta(s.w_cln), s.w_tgt, "eta")), unscale_tgt);
  const Tensor unscale_cln = exp(mul(alpha(checked(f.psi(w_tgt), s.w_cln, "psi"), f.clamp), -1.0));
  Tensor w_cln = mul(sub(s.w_cln, checked(f.phi(w_tgt), s.w_cln, "phi")), unscale_cln);
  return {w_cln, w_tgt};
}

// -------------------------------------------------------- AffineCouplingBlock

AffineCouplingBlock::AffineCouplingBlock(std::size_t channels, double clamp, const SubnetConfig& config,
                                         std::mt19937_64& rng)
    : psi_(channels, channels, config, rng),
      phi_(channels, channels, config, rng),
      rho_(channels, channels, config, rng),
      eta_(channels, channels, config, rng),
      clamp_(clamp) {
  if (!(clamp > 0.0)) throw ContractError("AffineCouplingBlock: clamp constant must be positive");
}

AffineCouplingBlock::AffineCouplingBlock(DenseSubnet psi, DenseSubnet phi, DenseSubnet rho, DenseSubnet eta,
                                         double clamp)
    : psi_(std::move(psi)), phi_(std::move(phi)), rho_(std::move(rho)), eta_(std::move(eta)), clamp_(clamp) {}

CouplingFunctions AffineCouplingBlock::functions() const {
  return CouplingFunctions{
      [this](const Tensor& t) { return psi_.forward(t); },
      [this](const Tensor& t) { return phi_.forward(t); },
      [this](const Tensor& t) { return rho_.forward(t); },
      [this](const Tensor& t) { return eta_.forward(t); },
      clamp_,
  };
}

CouplingState AffineCouplingBlock::forward(const CouplingState& s) const { return coupling_forward(s, functions()); }

CouplingState AffineCouplingBlock::inverse(const CouplingState& s) const { return coupling_inverse(s, functions()); }

std::vector<Tensor> AffineCouplingBlock::parameters() const {
  std::vector<Tensor> out;
  for (const DenseSubnet* net : {&psi_, &phi_, &rho_, &eta_}) {
    auto p = net->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

AffineCouplingBlock AffineCouplingBlock::clone() const {
  return AffineCouplingBlock(psi_.clone(), phi_.clone(), rho_.clone(), eta_.clone(), clamp_);
}

// ----------------------------------------------------------------------- Iiem

void IiemConfig::validate() const {
  if (channels == 0) throw ContractError("iiem: channels must be positive");
  if (dwt_levels == 0) throw ContractError("iiem: dwt_levels must be positive");
  if (num_blocks == 0) throw ContractError("iiem: num_blocks must be positive");
  if (!(clamp > 0.0)) throw ContractError("iiem: clamp must be positive");
}

Iiem::Iiem(const IiemConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t subband_channels = config_.channels << (2 * config_.dwt_levels);
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    blocks_.emplace_back(subband_channels, config_.clamp, config_.subnet, rng);
  }
}

Iiem::Iiem(IiemConfig config, std::vector<AffineCouplingBlock> blocks)
    : config_(std::move(config)), blocks_(std::move(blocks)) {}

namespace {

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)});
  throw DimensionError("iiem: expected C x H x W or N x C x H x W, got " + shape_to_string(x.shape()));
}

void check_pair(const Tensor& a, const Tensor& b, std::size_t channels, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": image shapes differ, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  if (a.rank() < 3 || a.dim(a.rank() - 3) != channels) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(channels) + " channels, got shape " +
                         shape_to_string(a.shape()));
  }
}

}  // namespace

CouplingState Iiem::forward_features(CouplingState s) const {
  for (const auto& block : blocks_) s = block.forward(s);
  return s;
}

CouplingState Iiem::inverse_features(CouplingState s) const {
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) s = it->inverse(s);
  return s;
}

std::pair<Tensor, Tensor> Iiem::forward(const Tensor& x_cln, const Tensor& x_tgt) const {
  check_pair(x_cln, x_tgt, config_.channels, "iiem_forward");
  const std::size_t levels = config_.dwt_levels;
  CouplingState s{dwt(as_batch(x_cln), levels).data, dwt(as_batch(x_tgt), levels).data};
  s = forward_features(std::move(s));
  Tensor adv = idwt(SubbandStack{s.w_cln, levels});
  Tensor res = idwt(SubbandStack{s.w_tgt, levels});
  if (x_cln.rank() == 3) {
    adv = reshape(adv, x_cln.shape());
    res = reshape(res, x_cln.shape());
  }
  return {adv, res};
}

std::pair<Tensor, Tensor> Iiem::inverse(const Tensor& x_adv, const Tensor& x_r) const {
  check_pair(x_adv, x_r, config_.channels, "iiem_inverse");
  const std::size_t levels = config_.dwt_levels;
  CouplingState s{dwt(as_batch(x_adv), levels).data, dwt(as_batch(x_r), levels).data};
  s = inverse_features(std::move(s));
  Tensor cln = idwt(SubbandStack{s.w_cln, levels});
  Tensor tgt = idwt(SubbandStack{s.w_tgt, levels});
  if (x_adv.rank() == 3) {
    cln = reshape(cln, x_adv.shape());
    tgt = reshape(tgt, x_adv.shape());
  }
  return {cln, tgt};
}

std::vector<Tensor> Iiem::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks_) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void Iiem::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.set_requires_grad(on);
}

std::size_t Iiem::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

void Iiem::perturb_parameters(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& p : parameters()) {
    for (auto& v : p.mutable_data()) v += normal(rng);
  }
}

Iiem Iiem::clone() const {
  std::vector<AffineCouplingBlock> blocks;
  for (const auto& b : blocks_) blocks.push_back(b.clone());
  return Iiem(config_, std::move(blocks));
}

}  // namespace advinn
