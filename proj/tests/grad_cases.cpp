#include "grad_cases.hpp"

#include <cmath>
#include <memory>
#include <random>

#include "advinn/attack.hpp"
#include "advinn/classifier.hpp"
#include "advinn/coupling.hpp"
#include "advinn/ops.hpp"
#include "advinn/wavelet.hpp"
#include "oracles.hpp"

namespace gradcases {

using namespace advinn;

namespace {

// Values in [lo, hi] kept at least `margin` away from every point in `kinks`.
Tensor away_from(const Shape& shape, std::uint64_t seed, double lo, double hi, std::vector<double> kinks,
                 double margin = 0.05) {
  Tensor t = oracle::random_tensor(shape, seed, lo, hi);
  for (auto& v : t.mutable_data()) {
    for (double k : kinks) {
      if (std::abs(v - k) < margin) v = k + (v < k ? -margin : margin);
    }
  }
  return t;
}

// Fixed random weights turn a tensor-valued op into a scalar objective with
// a non-trivial gradient.
Tensor project(const Tensor& y, std::uint64_t seed) {
  return sum(mul(y, oracle::random_tensor(y.shape(), seed, -1.0, 1.0)));
}

}  // namespace

std::vector<Case> primitive_cases(std::size_t side, std::uint64_t seed) {
  const Shape img{1, 1, side, side};
  const Shape mat{side, side};
  std::vector<Case> cases;
  std::uint64_t s = seed * 1000;
  auto add_case = [&](std::string name, std::vector<Tensor> inputs,
                      std::function<Tensor(const std::vector<Tensor>&)> op) {
    const std::uint64_t proj_seed = ++s;
    auto held = std::make_shared<std::vector<Tensor>>(inputs);
    cases.push_back(Case{std::move(name), [held, op, proj_seed] { return project(op(*held), proj_seed); },
                         std::move(inputs)});
  };
  auto rnd = [&](const Shape& sh, double lo = -1.0, double hi = 1.0) { return oracle::random_tensor(sh, ++s, lo, hi); };

  add_case("add", {rnd(img), rnd(img)}, [](auto& in) { return add(in[0], in[1]); });
  add_case("sub", {rnd(img), rnd(img)}, [](auto& in) { return sub(in[0], in[1]); });
  add_case("mul", {rnd(img), rnd(img)}, [](auto& in) { return mul(in[0], in[1]); });
  add_case("mul_broadcast", {rnd(Shape{1}), rnd(img)}, [](auto& in) { return mul(in[0], in[1]); });
  add_case("add_scalar", {rnd(img)}, [](auto& in) { return add(in[0], 0.7); });
  add_case("mul_scalar", {rnd(img)}, [](auto& in) { return mul(in[0], -1.3); });
  add_case("matmul", {rnd(mat), rnd(mat)}, [](auto& in) { return matmul(in[0], in[1]); });
  add_case("linear", {rnd(mat), rnd(Shape{3, side}), rnd(Shape{3})},
           [](auto& in) { return linear(in[0], in[1], in[2]); });
  add_case("conv2d", {rnd(img), rnd(Shape{2, 1, 3, 3}), rnd(Shape{2})},
           [](auto& in) { return conv2d(in[0], in[1], in[2], 1); });
  add_case("conv2d_multichannel", {rnd(Shape{1, 2, side, side}), rnd(Shape{3, 2, 3, 3}), rnd(Shape{3})},
           [](auto& in) { return conv2d(in[0], in[1], in[2], 1); });
  add_case("exp", {rnd(img)}, [](auto& in) { return advinn::exp(in[0]); });
  add_case("log", {rnd(img, 0.5, 1.5)}, [](auto& in) { return advinn::log(in[0]); });
  add_case("sigmoid", {rnd(img, -3.0, 3.0)}, [](auto& in) { return sigmoid(in[0]); });
  add_case("relu", {away_from(img, ++s, -1.0, 1.0, {0.0})}, [](auto& in) { return relu(in[0]); });
  add_case("leaky_relu", {away_from(img, ++s, -1.0, 1.0, {0.0})}, [](auto& in) { return leaky_relu(in[0], 0.2); });
  add_case("square", {rnd(img)}, [](auto& in) { return square(in[0]); });
  add_case("clamp", {away_from(img, ++s, -1.0, 1.0, {-0.4, 0.4})}, [](auto& in) { return clamp(in[0], -0.4, 0.4); });
  {
    const Tensor lo = Tensor::full(img, -0.3), hi = Tensor::full(img, 0.5);
    add_case("clamp_tensor", {away_from(img, ++s, -1.0, 1.0, {-0.3, 0.5})},
             [lo, hi](auto& in) { return clamp(in[0], lo, hi); });
  }
  add_case("sum", {rnd(img)}, [](auto& in) { return mul(sum(in[0]), 1.7); });
  add_case("mean", {rnd(img)}, [](auto& in) { return mul(mean(in[0]), 2.3); });
  add_case("reshape", {rnd(img)}, [side](auto& in) { return reshape(in[0], Shape{side, side}); });
  add_case("slice", {rnd(img)}, [side](auto& in) { return slice(in[0], 3, 1, side - 2); });
  add_case("concat", {rnd(img), rnd(img)}, [](auto& in) { return concat({in[0], in[1]}, 1); });
  add_case("index_select", {rnd(Shape{1, 4, side, side})}, [](auto& in) {
    const std::size_t idx[] = {3, 0, 3};
    return index_select(in[0], 1, idx);
  });
  add_case("softmax", {rnd(mat, -2.0, 2.0)}, [](auto& in) { return softmax(in[0]); });
  add_case("log_softmax", {rnd(mat, -2.0, 2.0)}, [](auto& in) { return log_softmax(in[0]); });
  {
    std::vector<std::size_t> labels(side);
    for (std::size_t i = 0; i < side; ++i) labels[i] = (i * 3) % side;
    auto logits = rnd(mat, -2.0, 2.0);
    cases.push_back(Case{"cross_entropy", [logits, labels] { return cross_entropy(logits, labels); }, {logits}});
  }
  add_case("avg_pool2d", {rnd(img)}, [](auto& in) { return avg_pool2d(in[0], 2); });
  add_case("global_avg_pool", {rnd(Shape{1, 2, side, side})}, [](auto& in) { return global_avg_pool(in[0]); });
  add_case("center_planes", {rnd(Shape{1, 2, side, side})}, [](auto& in) { return center_planes(in[0]); });
  add_case("haar_analysis", {rnd(img)}, [](auto& in) { return haar_analysis(in[0]); });
  add_case("haar_synthesis", {rnd(Shape{1, 4, side / 2, side / 2})}, [](auto& in) { return haar_synthesis(in[0]); });
  add_case("dwt_2_levels", {rnd(Shape{1, side, side})}, [](auto& in) { return dwt(in[0], 2).data; });
  add_case("idwt_2_levels", {rnd(Shape{16, side / 4, side / 4})},
           [](auto& in) { return idwt(SubbandStack{in[0], 2}); });
  add_case("alpha", {rnd(img, -3.0, 3.0)}, [](auto& in) { return alpha(in[0], 2.0); });
  return cases;
}

namespace {

struct AttackFixture {
  std::shared_ptr<Classifier> model;
  std::shared_ptr<Iiem> theta;
  AttackConfig cfg;
  Tensor x_cln;
  Tensor x_tgt;
};

AttackFixture make_fixture(std::size_t side, std::uint64_t seed) {
  AttackFixture fx;
  ClassifierConfig cc;
  cc.channels = 1;
  cc.height = cc.width = side;
  cc.num_classes = 4;
  cc.widths = side >= 8 ? std::vector<std::size_t>{4, 6, 8} : std::vector<std::size_t>{4, 6};
  fx.model = std::make_shared<Classifier>(cc, seed + 11);

  IiemConfig ic;
  ic.channels = 1;
  ic.subnet.layers = 1;
  ic.subnet.growth = 2;
  fx.theta = std::make_shared<Iiem>(ic, seed + 13);
  fx.theta->perturb_parameters(seed + 17, 0.05);

  fx.cfg.epsilon = 1.0;  // no budget clipping inside the finite-difference stencil
  fx.cfg.lambda_perp = 0.5;  // large enough to exercise the perceptual term
  fx.x_cln = oracle::random_tensor(Shape{1, side, side}, seed + 19, 0.3, 0.7);
  fx.x_tgt = oracle::random_tensor(Shape{1, side, side}, seed + 23, 0.3, 0.7);
  return fx;
}

}  // namespace

std::vector<Case> attack_cases(std::size_t side, std::uint64_t seed) {
  auto fx = std::make_shared<AttackFixture>(make_fixture(side, seed));
  const std::size_t target = seed % 4;
  std::vector<Case> cases;
  cases.push_back(Case{"L_total wrt module parameters",
                       [fx, target] {
                         const Tensor raw = fx->theta->forward(fx->x_cln, fx->x_tgt).first;
                         const Tensor adv = clip_to_budget(raw, fx->x_cln, fx->cfg.epsilon);
                         return loss_total(loss_rec(fx->x_cln, adv, *fx->model, fx->cfg),
                                           loss_adv(*fx->model, adv, target), fx->cfg.lambda_adv);
                       },
                       fx->theta->parameters()});
  cases.push_back(Case{"L_cgt wrt target image",
                       [fx, target] {
                         const Tensor raw = fx->theta->forward(fx->x_cln, fx->x_tgt).first;
                         return loss_adv(*fx->model, clip_to_budget(raw, fx->x_cln, fx->cfg.epsilon), target);
                       },
                       {fx->x_tgt}});
  cases.push_back(Case{"module output wrt both images",
                       [fx] {
                         auto [adv, res] = fx->theta->forward(fx->x_cln, fx->x_tgt);
                         return add(project(adv, 5), project(res, 6));
                       },
                       {fx->x_cln, fx->x_tgt}});
  return cases;
}

}  // namespace gradcases
