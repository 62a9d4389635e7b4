#include <cmath>

#include "advinn/error.hpp"
#include "advinn/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advinn;

TEST_CASE("l2 and linf distances") {
  const Tensor a = oracle::random_tensor(Shape{3, 32, 32}, 1);
  CHECK(l2_distance(a, a) == 0.0);
  CHECK(linf_distance(a, a) == 0.0);
  Tensor b = a.clone();
  b.mutable_data()[17] += 1.0;
  CHECK(l2_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  b = a.clone();
  b.mutable_data()[5] -= 8.0 / 255.0;
  CHECK(linf_distance(a, b) == doctest::Approx(8.0 / 255.0).epsilon(1e-12));
  const Tensor c = Tensor::full(Shape{3, 32, 32}, 0.3), d = Tensor::full(Shape{3, 32, 32}, 0.2);
  CHECK(l2_distance(c, d) == doctest::Approx(std::sqrt(3072 * 0.01)).epsilon(1e-12));
  CHECK(l2_distance(c, d) == doctest::Approx(5.5426).epsilon(1e-4));
  CHECK_THROWS_AS(l2_distance(c, Tensor(Shape{3, 32, 16})), DimensionError);
  CHECK_THROWS_AS(linf_distance(c, Tensor(Shape{3, 32, 16})), DimensionError);
}

TEST_CASE("ssim identity, symmetry and the constant-image closed form") {
  const Tensor a = oracle::random_tensor(Shape{3, 16, 16}, 2), b = oracle::random_tensor(Shape{3, 16, 16}, 3);
  CHECK(ssim(a, a) == 1.0);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-15));
  CHECK(ssim(a, b) < 1.0);
  for (auto [v1, v2] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.51}, std::pair{0.0, 1.0}}) {
    const double c1 = 0.01 * 0.01;
    const double expected = (2 * v1 * v2 + c1) / (v1 * v1 + v2 * v2 + c1);
    CHECK(ssim(Tensor::full(Shape{3, 16, 16}, v1), Tensor::full(Shape{3, 16, 16}, v2)) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("ssim agrees with the direct oracle") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor a = oracle::random_tensor(Shape{1, 16, 16}, 100 + s);
    Tensor b = oracle::random_tensor(Shape{1, 16, 16}, 200 + s, -0.1, 0.1);
    for (std::size_t i = 0; i < b.numel(); ++i) b.mutable_data()[i] += a[i];
    CHECK(std::abs(ssim(a, b) - oracle::ssim_direct(a, b)) < 1e-8);
  }
  const Tensor big_a = oracle::random_tensor(Shape{3, 32, 24}, 1), big_b = oracle::random_tensor(Shape{3, 32, 24}, 2);
  CHECK(std::abs(ssim(big_a, big_b) - oracle::ssim_direct(big_a, big_b)) < 1e-8);
}

TEST_CASE("ssim on images smaller than the window") {
  const Tensor a = oracle::random_tensor(Shape{3, 8, 8}, 4), b = oracle::random_tensor(Shape{3, 8, 8}, 5);
  const double v = ssim(a, b);
  CHECK(std::isfinite(v));
  CHECK(v <= 1.0);
  CHECK(v >= -1.0);
  CHECK(ssim(a, a) == 1.0);
  CHECK(std::abs(v - oracle::ssim_direct(a, b, 8, 1.5)) < 1e-8);
}

TEST_CASE("gaussian taps are normalized and symmetric") {
  const auto taps = gaussian_taps(11, 1.5);
  REQUIRE(taps.size() == 11);
  double total = 0.0;
  for (double t : taps) total += t;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t i = 0; i < 11; ++i) CHECK(taps[i] == doctest::Approx(taps[10 - i]).epsilon(1e-15));
}

TEST_CASE("measure fills a record") {
  const Tensor a = oracle::random_tensor(Shape{3, 16, 16}, 6), b = oracle::random_tensor(Shape{3, 16, 16}, 7);
  const MetricRecord r = measure(a, b, true, 12);
  CHECK(r.l2 == l2_distance(a, b));
  CHECK(r.linf == linf_distance(a, b));
  CHECK(r.ssim == ssim(a, b));
  CHECK(r.success);
  CHECK(r.iterations == 12);
}

TEST_CASE("aggregate") {
  const MetricRecord one{0.5, 0.03, 0.97, true, 40};
  const std::vector<MetricRecord> same(4, one);
  const MetricSummary s = aggregate(same);
  CHECK(s.count == 4);
  CHECK(s.asr == 1.0);
  CHECK(*s.mean_l2 == doctest::Approx(0.5));
  CHECK(*s.mean_linf == doctest::Approx(0.03));
  CHECK(*s.mean_ssim == doctest::Approx(0.97));
  CHECK(s.mean_iterations == 40.0);
  CHECK(s.median_iterations == 40.0);

  std::vector<MetricRecord> many(100, one);
  for (std::size_t i = 0; i < 5; ++i) many[i].success = false;
  CHECK(aggregate(many).asr == doctest::Approx(0.95));

  const std::vector<MetricRecord> three{{1.0, 0.1, 0.9, true, 10}, {2.0, 0.2, 0.8, true, 30}, {9.0, 0.9, 0.1, false, 2000}};
  const MetricSummary t = aggregate(three);
  CHECK(t.successes == 2);
  CHECK(t.asr == doctest::Approx(2.0 / 3.0));
  CHECK(*t.mean_l2 == doctest::Approx(1.5));
  CHECK(*t.mean_linf == doctest::Approx(0.15));
  CHECK(*t.mean_ssim == doctest::Approx(0.85));
  CHECK(t.mean_iterations == doctest::Approx(2040.0 / 3.0));
  CHECK(t.median_iterations == 30.0);

  const std::vector<MetricRecord> even{{1, 0, 1, true, 10}, {1, 0, 1, true, 20}};
  CHECK(aggregate(even).median_iterations == 15.0);

  const std::vector<MetricRecord> failed{{1, 0, 1, false, 3}};
  const MetricSummary f = aggregate(failed);
  CHECK_FALSE(f.mean_l2.has_value());
  CHECK_FALSE(f.mean_ssim.has_value());
  CHECK(f.asr == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<MetricRecord>{}), ContractError);
}
