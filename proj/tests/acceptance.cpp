// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "advinn/attack.hpp"
#include "advinn/commands.hpp"
#include "advinn/coupling.hpp"
#include "advinn/gradcheck.hpp"
#include "advinn/io.hpp"
#include "advinn/metrics.hpp"
#include "advinn/run_config.hpp"
#include "advinn/tape.hpp"
#include "advinn/tensor.hpp"
#include "advinn/wavelet.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace advinn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int failures = 0;

// Runs one criterion; a positive budget makes the runtime part of the verdict.
void criterion(int number, const char* name, double budget_seconds, const std::function<Outcome()>& body) {
  Stopwatch clock;
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = Outcome{false, std::string("exception: ") + e.what()};
  }
  const double elapsed = clock.seconds();
  std::string timing = format("%.1f s", elapsed);
  if (budget_seconds > 0.0) {
    timing += format(" of %.0f s", budget_seconds);
    if (elapsed >= budget_seconds) out.pass = false;
  }
  if (!out.pass) ++failures;
  std::printf("%s %d %s: %s [%s]\n", out.pass ? "PASS" : "FAIL", number, name, out.detail.c_str(), timing.c_str());
  std::fflush(stdout);
}

std::ostream& quiet() {
  static std::ostream sink(nullptr);
  return sink;
}

// Trial i pairs module i with image pair i.
Outcome invertibility() {
  TapeScope no_tape(nullptr);
  constexpr std::uint64_t kTrials = 50;
  const Shape shape{3, 32, 32};
  const IiemConfig config{};
  const Iiem identity(config, 1);

  double worst = 0.0, id_err = 0.0;
  for (std::uint64_t i = 0; i < kTrials; ++i) {
    const Tensor x_cln = oracle::random_tensor(shape, 2 * i);
    const Tensor x_tgt = oracle::random_tensor(shape, 2 * i + 1);
    Iiem theta(config, 1000 + i);
    theta.perturb_parameters(5000 + i, 0.05);
    const auto [adv, res] = theta.forward(x_cln, x_tgt);
    const auto [c, t] = theta.inverse(adv, res);
    worst = std::max({worst, oracle::max_abs_diff(c, x_cln), oracle::max_abs_diff(t, x_tgt)});
    const auto [id_adv, id_res] = identity.forward(x_cln, x_tgt);
    id_err = std::max({id_err, oracle::max_abs_diff(id_adv, x_cln), oracle::max_abs_diff(id_res, x_tgt)});
  }
  return {worst < 1e-7 && id_err < 1e-10,
          format("round trip %.3g (< 1e-7) over %llu random modules and pairs, identity %.3g (< 1e-10)", worst,
                 static_cast<unsigned long long>(kTrials), id_err)};
}

Outcome wavelets() {
  double pr = 0.0, parseval = 0.0;
  for (std::size_t levels : {1, 2}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Tensor x = oracle::random_tensor(Shape{3, 32, 32}, seed * 7 + levels);
      const SubbandStack s = dwt(x, levels);
      pr = std::max(pr, oracle::max_abs_diff(idwt(s), x));
      const double energy = oracle::sum_squares(x);
      parseval = std::max(parseval, std::abs(oracle::sum_squares(s.data) - energy) / energy);
    }
  }
  return {pr < 1e-10 && parseval < 1e-9,
          format("reconstruction %.3g (< 1e-10), Parseval relative %.3g (< 1e-9), levels 1 and 2, 100 images", pr,
                 parseval)};
}

Outcome gradients() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    for (std::size_t side : {4, 8}) {
      auto cases = gradcases::primitive_cases(side, 100 + draw);
      for (auto& c : gradcases::attack_cases(side, 100 + draw)) cases.push_back(std::move(c));
      for (const auto& c : cases) {
        const double err = finite_difference_check(c.f, c.inputs, 1e-5);
        ++checks;
        if (!(err <= worst)) {
          worst = err;
          worst_name = c.name + format(" (side %zu)", side);
        }
      }
    }
  }
  return {worst < 1e-3,
          format("worst relative error %.3g (< 1e-3) at %s, %zu checks", worst, worst_name.c_str(), checks)};
}

// Column `col` of every data row in a results CSV.
std::vector<double> csv_column(const std::string& text, std::size_t col) {
  std::vector<double> out;
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string field;
    for (std::size_t i = 0; i <= col; ++i) std::getline(fields, field, ',');
    out.push_back(std::stod(field));
  }
  return out;
}

RunConfig run_config(const fs::path& root) {
  RunConfig cfg;
  cfg.data_dir = (root / "data").string();
  cfg.out_dir = (root / "out").string();
  return cfg;
}

// gen-data, train and attack with default settings under `root`.
MetricSummary full_run(const fs::path& root) {
  const RunConfig cfg = run_config(root);
  cmd_gen_data(cfg, quiet());
  cmd_train(cfg, quiet());
  return cmd_attack(cfg, quiet());
}

std::string mode_line(const char* mode, const MetricSummary& s) {
  return format("%s asr %.2f median %.1f", mode, s.asr, s.median_iterations);
}

}  // namespace

int main() {
  tune_allocator();
  const TempDir work("acceptance");
  const fs::path run1 = work.path() / "run1";
  const RunConfig base = run_config(run1);
  MetricSummary cgt;

  criterion(1, "invertibility", 10.0, invertibility);
  criterion(2, "wavelet reconstruction and energy", 5.0, wavelets);
  criterion(3, "gradient check", 60.0, gradients);

  criterion(4, "end-to-end attack", 1800.0, [&] {
    cgt = full_run(run1);
    const std::vector<double> linf = csv_column(read_file(fs::path(base.out_dir) / "attack_results.csv"), 5);
    const double bound = 8.0 / 255.0 + 1.0 / 510.0;
    double worst = 0.0;
    std::size_t over = 0;
    for (double v : linf) {
      if (std::isnan(v)) continue;  // aborted attack: no output, counted as a failure
      worst = std::max(worst, v);
      if (v > bound) ++over;
    }
    const bool pass = cgt.count == 100 && cgt.asr >= 0.95 && over == 0;
    return Outcome{pass, format("asr %.2f (>= 0.95) on %zu images, max linf %.5f (<= %.5f), %zu over budget", cgt.asr,
                                cgt.count, worst, bound, over)};
  });

  criterion(5, "lambda_adv trend", 0.0, [&] {
    const std::vector<double> values{10.0, 30.0, 100.0};
    std::vector<SweepPoint> points{SweepPoint{3.0, cgt}};
    for (const auto& p : cmd_sweep(base, SweepAxis::LambdaAdv, values, quiet())) points.push_back(p);
    const TrendVerdict v = lambda_trend(points);
    std::string detail = format("l2 rho %+.2f (+1), iterations rho %+.2f (-1);", v.l2_rho, v.iterations_rho);
    for (const auto& p : points) {
      detail += format(" lambda %g: l2 %.4f it %.1f;", p.value, p.summary.mean_l2.value_or(std::nan("")),
                       p.summary.mean_iterations);
    }
    detail.pop_back();
    return Outcome{v.pass, detail};
  });

  criterion(6, "target modes", 0.0, [&] {
    RunConfig cfg = base;
    cfg.checkpoint = base.checkpoint_path();
    cfg.attack.target_mode = TargetMode::HCT;
    cfg.out_dir = (run1 / "hct").string();
    const MetricSummary hct = cmd_attack(cfg, quiet());
    cfg.attack.target_mode = TargetMode::UAP;
    cfg.out_dir = (run1 / "uap").string();
    const MetricSummary uap = cmd_attack(cfg, quiet());
    const bool pass = cgt.median_iterations < hct.median_iterations && cgt.asr >= 0.90 && hct.asr >= 0.90 &&
                      uap.asr >= 0.90;
    return Outcome{pass, "median CGT < HCT, every asr >= 0.90; " + mode_line("cgt", cgt) + ", " +
                             mode_line("hct", hct) + ", " + mode_line("uap", uap)};
  });

  criterion(7, "constant-target probe", 0.0, [&] {
    const Dataset data = load_dataset(base.data_dir);
    const Classifier model = load_classifier(base.checkpoint_path());
    const Tensor& x = data.test.images[select_suite(model, data.test, 1).front()];

    const Iiem identity(base.attack.iiem_config(3), 1);
    std::size_t nonzero_identity = 0;
    const DroppedInfoEstimate probe = estimate_dropped_info(identity, x);
    for (double v : probe.sigma_hat.data()) nonzero_identity += v != 0.0;

    const AttackResult r = run_attack(model, x, base.attack);
    const double sigma_energy = oracle::sum_squares(estimate_dropped_info(*r.theta, x).sigma_hat);
    TapeScope no_tape(nullptr);
    const auto [c, t] = r.theta->inverse(r.x_adv_raw, r.x_r);
    const double round_trip = std::max(oracle::max_abs_diff(c, x), oracle::max_abs_diff(t, r.x_tgt));
    const bool pass = nonzero_identity == 0 && r.success && sigma_energy > 0.0 && round_trip < 1e-6;
    return Outcome{pass, format("identity: %zu nonzero entries (0); converged after %zu iterations: |sigma|^2 %.3g "
                                "(> 0), round trip %.3g (< 1e-6)",
                                nonzero_identity, r.iterations, sigma_energy, round_trip)};
  });

  criterion(8, "SSIM oracle", 0.0, [] {
    double worst = 0.0;
    bool identical_one = true;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const Tensor a = oracle::random_tensor(Shape{3, 16, 16}, 2 * seed);
      const Tensor b = oracle::random_tensor(Shape{3, 16, 16}, 2 * seed + 1);
      worst = std::max(worst, std::abs(ssim(a, b) - oracle::ssim_direct(a, b)));
      identical_one = identical_one && ssim(a, a) == 1.0;
    }
    return Outcome{worst < 1e-8 && identical_one,
                   format("max deviation %.3g (< 1e-8) on 25 pairs, identical images %s", worst,
                          identical_one ? "score 1.0" : "do not score 1.0")};
  });

  criterion(9, "determinism", 0.0, [&] {
    const fs::path run2 = work.path() / "run2";
    full_run(run2);
    std::string detail;
    bool pass = true;
    for (const char* name : {"attack_results.csv", "attack_summary.csv"}) {
      const bool same = read_file(run1 / "out" / name) == read_file(run2 / "out" / name);
      pass = pass && same;
      detail += std::string(detail.empty() ? "" : ", ") + name + (same ? " identical" : " differ");
    }
    return Outcome{pass, detail};
  });

  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
