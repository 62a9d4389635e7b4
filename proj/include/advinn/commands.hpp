#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advinn/attack.hpp"
#include "advinn/classifier.hpp"
#include "advinn/dataset.hpp"
#include "advinn/metrics.hpp"
#include "advinn/run_config.hpp"
#include "advinn/targets.hpp"

namespace advinn {

// One attacked image. `error` is set when the attack aborted; such rows
// count as failures.
struct SuiteRow {
  std::size_t id = 0;  // index into the test split
  std::size_t target_class = 0;
  bool success = false;
  std::size_t iterations = 0;
  double l2 = 0.0;
  double linf = 0.0;
  double ssim = 0.0;
  double final_target_prob = 0.0;
  std::string error;
};

struct SuiteReport {
  std::vector<SuiteRow> rows;
  MetricSummary summary;
};

// Indices of the first `count` test images the model classifies correctly.
// Throws LookupError when fewer exist.
std::vector<std::size_t> select_suite(const Classifier& model, const LabelledImages& test, std::size_t count);

struct SuiteOptions {
  std::optional<std::filesystem::path> dump_dir;  // image dumps when set
  std::function<void(const SuiteRow&)> on_row;  // progress hook
};

SuiteReport run_suite(const Classifier& model, const LabelledImages& test, std::span<const std::size_t> ids,
                      const AttackConfig& cfg, TargetBank& targets, const SuiteOptions& options = {});

// Header: id,target_class,success,iterations,l2,linf,ssim,final_target_prob
std::string results_csv(const SuiteReport& report);
// Header: count,successes,asr,mean_l2,mean_linf,mean_ssim,mean_iterations,median_iterations
std::string summary_csv(const MetricSummary& summary);

enum class SweepAxis { LambdaAdv, NumBlocks, DwtLevels };
SweepAxis parse_sweep_axis(std::string_view name);  // lambda_adv, num_blocks, dwt_levels
std::string_view sweep_axis_name(SweepAxis axis);
void set_sweep_value(AttackConfig& cfg, SweepAxis axis, double value);
std::vector<double> parse_value_list(std::string_view text);  // "3,10,30,100"

struct SweepPoint {
  double value = 0.0;
  MetricSummary summary;
};

// Spearman rank correlation with average ranks for ties; 0 when either
// sequence is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct TrendVerdict {
  double l2_rho = 0.0;
  double iterations_rho = 0.0;
  bool pass = false;  // mean l2 rho == +1 and mean iterations rho == -1
};
TrendVerdict lambda_trend(std::span<const SweepPoint> points);

// Header: axis,value,count,successes,asr,mean_l2,mean_linf,mean_ssim,
// mean_iterations,median_iterations, then '#' verdict lines.
std::string sweep_csv(SweepAxis axis, std::span<const SweepPoint> points);

// Amplified absolute perturbation clamp(40 * |x_adv - x_cln|, 0, 1).
Tensor amplified_perturbation(const Tensor& x_adv, const Tensor& x_cln, double gain = 40.0);

// Command entry points; each validates `cfg` first and writes progress and
// report lines to `log`.
void cmd_gen_data(const RunConfig& cfg, std::ostream& log);
TrainReport cmd_train(const RunConfig& cfg, std::ostream& log);
MetricSummary cmd_attack(const RunConfig& cfg, std::ostream& log);
std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, SweepAxis axis, std::span<const double> values,
                                  std::ostream& log);

}  // namespace advinn
