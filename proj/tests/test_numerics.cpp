#include <cmath>
#include <vector>

#include "advinn/adam.hpp"
#include "advinn/error.hpp"
#include "advinn/gradcheck.hpp"
#include "advinn/ops.hpp"
#include "advinn/tape.hpp"
#include "doctest.h"
#include "grad_cases.hpp"
#include "oracles.hpp"

using namespace advinn;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Gradient of a scalar built under a fresh tape.
template <class F>
Tensor grad_of(Tensor x, F&& f) {
  x.set_requires_grad(true);
  x.clear_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f(x);
  }
  tape.backward(loss);
  return Tensor(x.shape(), std::vector<double>(x.grad().begin(), x.grad().end()));
}

}  // namespace

TEST_CASE("tensor shape and data agree") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(shape_numel(t.shape()) == t.numel());
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(shape_to_string(t.shape()) == "[2x3]");
}

TEST_CASE("elementwise ops") {
  const Tensor a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
  CHECK(values(add(a, b)) == std::vector<double>{4, 6});
  CHECK(values(sub(a, b)) == std::vector<double>{-2, -2});
  CHECK(values(mul(a, b)) == std::vector<double>{3, 8});
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(values(relu(Tensor(Shape{3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
  CHECK(values(clamp(Tensor(Shape{3}, {-1, 0.5, 2}), 0.0, 1.0)) == std::vector<double>{0, 0.5, 1});
  CHECK(sum(a).item() == 3.0);
  CHECK(mean(b).item() == 3.5);
}

TEST_CASE("shape mismatch names the operation") {
  const Tensor a(Shape{2}), b(Shape{3});
  try {
    (void)add(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor(Shape{1, 2, 4, 4}), Tensor(Shape{1, 3, 3, 3}), Tensor(Shape{1}), 1), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor(Shape{2, 4, 4}), Tensor(Shape{1, 2, 3, 3}), Tensor(Shape{1}), 1), DimensionError);
}

TEST_CASE("log of a non-positive value is a domain error") {
  CHECK_THROWS_AS(advinn::log(Tensor(Shape{2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(advinn::log(Tensor(Shape{1}, {-2.0})), DomainError);
}

TEST_CASE("conv2d of ones with a ones kernel sums nine products") {
  const Tensor y = conv2d(Tensor::full(Shape{1, 1, 3, 3}, 1.0), Tensor::full(Shape{1, 1, 3, 3}, 1.0),
                          Tensor::zeros(Shape{1}), 0);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("conv2d matches the direct-loop oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor x = oracle::random_tensor(Shape{2, 3, 7, 6}, seed, -1, 1);
    const Tensor w = oracle::random_tensor(Shape{4, 3, 3, 3}, seed + 100, -1, 1);
    const Tensor b = oracle::random_tensor(Shape{4}, seed + 200, -1, 1);
    for (std::size_t pad : {0u, 1u}) {
      CHECK(oracle::max_abs_diff(conv2d(x, w, b, pad), oracle::conv2d(x, w, b, pad)) < 1e-12);
    }
  }
}

TEST_CASE("matmul and softmax basics") {
  const Tensor a(Shape{2, 2}, {1, 2, 3, 4}), b(Shape{2, 2}, {5, 6, 7, 8});
  CHECK(values(matmul(a, b)) == std::vector<double>{19, 22, 43, 50});
  const Tensor p = softmax(Tensor(Shape{1, 4}, 0.0));
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25));
  const Tensor q = softmax(Tensor(Shape{2, 3}, {1000, 0, -1000, 1, 2, 3}));
  CHECK(all_finite(q.data()));
  CHECK(q[0] + q[1] + q[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward of sum gives ones, sum of squares gives 2x") {
  const Tensor g = grad_of(oracle::random_tensor(Shape{2, 3, 2}, 3), [](const Tensor& x) { return sum(x); });
  for (double v : g.data()) CHECK(v == 1.0);
  const Tensor g2 = grad_of(Tensor(Shape{1}, {3.0}), [](const Tensor& x) { return sum(mul(x, x)); });
  CHECK(g2.item() == 6.0);
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot") {
  const Tensor g = grad_of(Tensor(Shape{1, 2}, {0.0, 0.0}),
                           [](const Tensor& z) { return cross_entropy(z, std::size_t{0}); });
  CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));
  Tensor z(Shape{1, 2}, {0.0, 0.0});
  CHECK(finite_difference_check([](const Tensor& t) { return cross_entropy(t, std::size_t{0}); }, z, 1e-5) < 1e-8);
}

TEST_CASE("fan-out accumulates additively and backward requires a scalar") {
  const Tensor g = grad_of(Tensor(Shape{2}, {1.0, -2.0}), [](const Tensor& x) { return sum(add(mul(x, 3.0), x)); });
  CHECK(values(g) == std::vector<double>{4.0, 4.0});

  Tensor x = Tensor(Shape{2}, {1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = mul(x, 2.0);
  }
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("tensors off the tape receive no gradient") {
  Tensor x = Tensor(Shape{2}, {1.0, 2.0}).set_requires_grad(true);
  Tensor unrelated = Tensor(Shape{2}, {1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(square(x));
  }
  tape.backward(loss);
  CHECK(x.has_grad());
  CHECK_FALSE(unrelated.has_grad());
}

TEST_CASE("no tape records nothing") {
  Tensor x = Tensor(Shape{2}, {1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    TapeScope none(nullptr);
    (void)sum(x);
  }
  CHECK(tape.size() == 0);
}

TEST_CASE("clamp passes gradient inside the interval and blocks it outside") {
  const Tensor g = grad_of(Tensor(Shape{4}, {-2.0, 0.25, 0.75, 3.0}),
                           [](const Tensor& x) { return sum(clamp(x, 0.0, 1.0)); });
  CHECK(values(g) == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}

TEST_CASE("finite_difference_check examples") {
  Tensor x = oracle::random_tensor(Shape{5}, 9, -1, 1);
  CHECK(finite_difference_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-4) < 1e-6);
  CHECK(finite_difference_check([](const Tensor&) { return Tensor::scalar(4.0); }, x, 1e-4) == 0.0);
  CHECK_THROWS_AS(finite_difference_check([](const Tensor& t) { return sum(t); }, x, 1e-2), ContractError);
  CHECK_THROWS_AS(finite_difference_check([](const Tensor& t) { return sum(advinn::log(t)); },
                                          Tensor(Shape{1}, {-1.0}), 1e-4),
                  DomainError);
}

TEST_CASE("every primitive passes the finite-difference check") {
  for (std::size_t side : {4u, 8u}) {
    for (auto& c : gradcases::primitive_cases(side, 1)) {
      CAPTURE(c.name);
      CAPTURE(side);
      CHECK(finite_difference_check(c.f, c.inputs, 1e-5) < 1e-6);
    }
  }
}

TEST_CASE("tape replay is bit-identical") {
  auto run = [] {
    Tensor x = oracle::random_tensor(Shape{1, 2, 6, 6}, 4, -1, 1);
    Tensor w = oracle::random_tensor(Shape{3, 2, 3, 3}, 5, -1, 1);
    Tensor b = Tensor::zeros(Shape{3});
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(square(sigmoid(conv2d(x, w, b, 1))));
    }
    tape.backward(loss);
    std::vector<double> out{loss.item()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("adam first step moves each parameter by the learning rate") {
  Tensor p = Tensor(Shape{4}, {0.1, -0.2, 0.3, 0.0}).set_requires_grad(true);
  const std::vector<double> before = values(p);
  Adam opt({p}, AdamOptions{.learning_rate = 1e-4});
  p.accumulate_grad(std::vector<double>(4, 1.0));
  REQUIRE(opt.step() == StepStatus::Ok);
  for (std::size_t i = 0; i < 4; ++i) CHECK(before[i] - p[i] == doctest::Approx(1e-4).epsilon(1e-2));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(before[i] - p[i] - 1e-4) < 1e-6);
  CHECK(opt.step_count() == 1);
  CHECK(opt.first_moment().size() == 1);
  CHECK(opt.first_moment()[0].size() == 4);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor p = Tensor(Shape{3}, {1.0, 2.0, 3.0}).set_requires_grad(true);
  Adam opt({p}, AdamOptions{});
  p.zero_grad();
  REQUIRE(opt.step() == StepStatus::Ok);
  CHECK(values(p) == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam matches the scalar reference over many steps") {
  Tensor p = oracle::random_tensor(Shape{6}, 21, -1, 1).set_requires_grad(true);
  const std::vector<double> start = values(p);
  std::vector<std::vector<double>> grads;
  Adam opt({p}, AdamOptions{.learning_rate = 3e-3});
  for (std::uint64_t k = 0; k < 25; ++k) {
    const Tensor g = oracle::random_tensor(Shape{6}, 500 + k, -2, 2);
    grads.push_back(values(g));
    opt.zero_grad();
    p.accumulate_grad(g.data());
    REQUIRE(opt.step() == StepStatus::Ok);
  }
  const auto ref = oracle::adam_reference(start, grads, 3e-3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-14);
}

TEST_CASE("adam step decay every 200 steps with a floor") {
  Tensor p = Tensor(Shape{1}, 0.0).set_requires_grad(true);
  AdamOptions o{.learning_rate = 1e-4, .step_decay = true};
  Adam opt({p}, o);
  for (int i = 0; i < 199; ++i) {
    p.zero_grad();
    REQUIRE(opt.step() == StepStatus::Ok);
  }
  CHECK(opt.learning_rate() == doctest::Approx(1e-4));
  p.zero_grad();
  REQUIRE(opt.step() == StepStatus::Ok);
  CHECK(opt.learning_rate() == doctest::Approx(0.9e-4));
  for (int i = 0; i < 200 * 40; ++i) {
    p.zero_grad();
    REQUIRE(opt.step() == StepStatus::Ok);
  }
  CHECK(opt.learning_rate() == doctest::Approx(1e-5));
}

TEST_CASE("adam reports divergence and leaves parameters untouched") {
  Tensor p = Tensor(Shape{2}, {1.0, 2.0}).set_requires_grad(true);
  Adam opt({p}, AdamOptions{});
  p.accumulate_grad(std::vector<double>{1.0, std::nan("")});
  CHECK(opt.step() == StepStatus::Diverged);
  CHECK(values(p) == std::vector<double>{1.0, 2.0});
  CHECK(opt.step_count() == 0);
}

TEST_CASE("adam options are validated") {
  Tensor p(Shape{1});
  CHECK_THROWS_AS(Adam({p}, AdamOptions{.learning_rate = 0.0}), ContractError);
  CHECK_THROWS_AS(Adam({p}, AdamOptions{.beta1 = 1.0}), ContractError);
}

TEST_CASE("results do not depend on where buffers are allocated") {
  // Odd-sized allocations in between shift the 32-byte phase of later buffers.
  std::vector<std::vector<double>> spacers;
  std::vector<double> first;
  for (std::size_t round = 0; round < 8; ++round) {
    spacers.emplace_back(round * 2 + 1, 0.0);
    Tensor x = oracle::random_tensor(Shape{1, 37}, 1, -1, 1);
    Tensor w = oracle::random_tensor(Shape{29, 37}, 2, -1, 1);
    Tensor b = oracle::random_tensor(Shape{29}, 3, -1, 1);
    Tensor img = oracle::random_tensor(Shape{1, 3, 9, 9}, 4, -1, 1);
    Tensor k = oracle::random_tensor(Shape{5, 3, 3, 3}, 5, -1, 1);
    Tensor kb = oracle::random_tensor(Shape{5}, 6, -1, 1);
    for (Tensor* t : {&x, &w, &b, &img, &k, &kb}) t->set_requires_grad(true);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = add(sum(square(linear(x, w, b))), sum(square(conv2d(img, k, kb, 1))));
      loss = add(loss, sum(matmul(reshape(x, Shape{37, 1}), reshape(b, Shape{1, 29}))));
    }
    tape.backward(loss);
    std::vector<double> out{loss.item()};
    for (const Tensor* t : {&x, &w, &b, &img, &k, &kb}) out.insert(out.end(), t->grad().begin(), t->grad().end());
    if (round == 0) {
      first = out;
    } else {
      CHECK(out == first);
    }
  }
}
