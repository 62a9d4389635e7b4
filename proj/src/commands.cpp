#include "advinn/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "advinn/error.hpp"
#include "advinn/io.hpp"
#include "advinn/ops.hpp"

namespace advinn {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string summary_fields(const MetricSummary& s) {
  return std::to_string(s.count) + "," + std::to_string(s.successes) + "," + fmt(s.asr) + "," + fmt(s.mean_l2) +
         "," + fmt(s.mean_linf) + "," + fmt(s.mean_ssim) + "," + fmt(s.mean_iterations) + "," +
         fmt(s.median_iterations);
}

std::string image_name(std::size_t id, const char* what) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%05zu_%s.ppm", id, what);
  return buf;
}

}  // namespace

std::vector<std::size_t> select_suite(const Classifier& model, const LabelledImages& test, std::size_t count) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < test.size() && ids.size() < count; ++i) {
    if (model.classify(test.images[i]).predicted_class == test.labels[i]) ids.push_back(i);
  }
  if (ids.size() < count) {
    throw LookupError("only " + std::to_string(ids.size()) + " correctly classified test images, " +
                      std::to_string(count) + " requested");
  }
  return ids;
}

SuiteReport run_suite(const Classifier& model, const LabelledImages& test, std::span<const std::size_t> ids,
                      const AttackConfig& cfg, TargetBank& targets, const SuiteOptions& options) {
  SuiteReport report;
  std::vector<MetricRecord> records;
  for (std::size_t id : ids) {
    if (id >= test.size()) throw ContractError("run_suite: image id out of range");
    const Tensor& x = test.images[id];
    SuiteRow row;
    row.id = id;
    try {
      const AttackResult r = run_attack(model, x, cfg, &targets);
      row.target_class = r.target_class;
      row.success = r.success;
      row.iterations = r.iterations;
      row.l2 = r.metrics.l2;
      row.linf = r.metrics.linf;
      row.ssim = r.metrics.ssim;
      row.final_target_prob = r.final_target_prob;
      records.push_back(r.metrics);
      if (options.dump_dir) {
        const auto& dir = *options.dump_dir;
        write_ppm(dir / image_name(id, "clean"), x);
        write_ppm(dir / image_name(id, "adv"), r.x_adv);
        write_ppm(dir / image_name(id, "residual"), clamp(r.x_r, 0.0, 1.0));
        write_ppm(dir / image_name(id, "perturbation_x40"), amplified_perturbation(r.x_adv, x));
      }
    } catch (const NumericalError& e) {
      row.target_class = least_likely_class(model, x);
      row.l2 = row.linf = row.ssim = row.final_target_prob = std::nan("");
      row.error = e.what();
      records.push_back(MetricRecord{0.0, 0.0, 0.0, false, 0});
    }
    if (options.on_row) options.on_row(row);
    report.rows.push_back(std::move(row));
  }
  report.summary = aggregate(records);
  return report;
}

std::string results_csv(const SuiteReport& report) {
  std::string out = "id,target_class,success,iterations,l2,linf,ssim,final_target_prob\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.id) + "," + std::to_string(r.target_class) + "," + (r.success ? "1" : "0") + "," +
           std::to_string(r.iterations) + "," + fmt(r.l2) + "," + fmt(r.linf) + "," + fmt(r.ssim) + "," +
           fmt(r.final_target_prob) + "\n";
  }
  return out;
}

std::string summary_csv(const MetricSummary& summary) {
  return "count,successes,asr,mean_l2,mean_linf,mean_ssim,mean_iterations,median_iterations\n" +
         summary_fields(summary) + "\n";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "lambda_adv") return SweepAxis::LambdaAdv;
  if (s == "num_blocks") return SweepAxis::NumBlocks;
  if (s == "dwt_levels") return SweepAxis::DwtLevels;
  throw ContractError("unknown sweep axis '" + std::string(name) + "' (expected lambda_adv, num_blocks or dwt_levels)");
}

std::string_view sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::LambdaAdv: return "lambda_adv";
    case SweepAxis::NumBlocks: return "num_blocks";
    case SweepAxis::DwtLevels: return "dwt_levels";
  }
  return "?";
}

void set_sweep_value(AttackConfig& cfg, SweepAxis axis, double value) {
  if (axis == SweepAxis::LambdaAdv) {
    cfg.lambda_adv = value;
    return;
  }
  if (!(value >= 1.0) || value != std::floor(value)) {
    throw ContractError(std::string(sweep_axis_name(axis)) + " values must be positive integers");
  }
  (axis == SweepAxis::NumBlocks ? cfg.num_blocks : cfg.dwt_levels) = static_cast<std::size_t>(value);
}

std::vector<double> parse_value_list(std::string_view text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double v = 0.0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
      throw ContractError("invalid value list '" + std::string(text) + "'");
    }
    values.push_back(v);
    start = comma + 1;
  }
  return values;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: sequences differ in length");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

TrendVerdict lambda_trend(std::span<const SweepPoint> points) {
  std::vector<double> lambdas, l2, iters;
  for (const auto& p : points) {
    lambdas.push_back(p.value);
    l2.push_back(p.summary.mean_l2.value_or(std::nan("")));
    iters.push_back(p.summary.mean_iterations);
  }
  TrendVerdict v;
  if (std::any_of(l2.begin(), l2.end(), [](double d) { return std::isnan(d); })) return v;
  v.l2_rho = spearman(lambdas, l2);
  v.iterations_rho = spearman(lambdas, iters);
  v.pass = std::abs(v.l2_rho - 1.0) < 1e-12 && std::abs(v.iterations_rho + 1.0) < 1e-12;
  return v;
}

std::string sweep_csv(SweepAxis axis, std::span<const SweepPoint> points) {
  std::string out = "axis,value,count,successes,asr,mean_l2,mean_linf,mean_ssim,mean_iterations,median_iterations\n";
  for (const auto& p : points) {
    out += std::string(sweep_axis_name(axis)) + "," + fmt(p.value) + "," + summary_fields(p.summary) + "\n";
  }
  if (axis == SweepAxis::LambdaAdv) {
    const TrendVerdict v = lambda_trend(points);
    out += "# trend mean_l2 spearman=" + fmt(v.l2_rho) + " expected=+1\n";
    out += "# trend mean_iterations spearman=" + fmt(v.iterations_rho) + " expected=-1\n";
    out += std::string("# verdict ") + (v.pass ? "pass" : "fail") + "\n";
  } else {
    out += "# rows=" + std::to_string(points.size()) + "\n";
  }
  return out;
}

Tensor amplified_perturbation(const Tensor& x_adv, const Tensor& x_cln, double gain) {
  if (x_adv.shape() != x_cln.shape()) throw DimensionError("amplified_perturbation: shape mismatch");
  Tensor out(x_adv.shape());
  auto o = out.mutable_data();
  const auto a = x_adv.data(), c = x_cln.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(gain * std::abs(a[i] - c[i]), 0.0, 1.0);
  return out;
}

// ---- commands -------------------------------------------------------------------

namespace {

ClassifierConfig classifier_config(const RunConfig& cfg) {
  ClassifierConfig c;
  c.height = c.width = cfg.data.size;
  c.num_classes = kShapeClasses;
  return c;
}

void check_model_input(const Classifier& model, const Dataset& data) {
  const ClassifierConfig& c = model.config();
  const Shape expected{c.channels, c.height, c.width};
  for (const auto* split : {&data.train, &data.test}) {
    for (const auto& img : split->images) {
      if (img.shape() != expected) {
        throw DimensionError("dataset image " + shape_to_string(img.shape()) + " does not match the checkpoint input " +
                             shape_to_string(expected));
      }
    }
  }
}

// UAP targets are cached on disk as P6 images; in-memory copies are
// quantized so that a cached and a fresh run see the same image.
void prepare_uap(TargetBank& bank, const Classifier& model, const fs::path& cache_dir, std::ostream& log) {
  for (std::size_t k = 0; k < model.config().num_classes; ++k) {
    const fs::path file = cache_dir / ("class_" + std::to_string(k) + ".ppm");
    if (fs::exists(file)) {
      bank.set_uap(k, read_ppm(file));
      continue;
    }
    const Tensor u = quantize(build_uap(model, k, bank.uap_options()));
    const Prediction p = model.classify(u);
    log << "uap class " << k << ": predicted " << p.predicted_class << " p_target=" << fmt(p.probabilities[k])
        << "\n";
    write_ppm(file, u);
    bank.set_uap(k, u);
  }
}

struct Loaded {
  Dataset data;
  Classifier model;
};

Loaded load_inputs(const RunConfig& cfg) {
  Dataset data = load_dataset(cfg.data_dir);
  Classifier model = load_classifier(cfg.checkpoint_path());
  check_model_input(model, data);
  return Loaded{std::move(data), std::move(model)};
}

SuiteReport attack_suite(const RunConfig& cfg, const AttackConfig& attack, const Loaded& in, TargetBank& bank,
                         const std::optional<fs::path>& dump_dir, std::ostream& log) {
  const auto ids = select_suite(in.model, in.data.test, cfg.num_images);
  if (attack.target_mode == TargetMode::UAP) prepare_uap(bank, in.model, fs::path(cfg.out_dir) / "uap", log);
  SuiteOptions options;
  options.dump_dir = dump_dir;
  options.on_row = [&log](const SuiteRow& r) {
    log << "image " << r.id << " target=" << r.target_class << " success=" << r.success
        << " iterations=" << r.iterations;
    if (!r.error.empty()) log << " error=\"" << r.error << "\"";
    log << "\n";
  };
  return run_suite(in.model, in.data.test, ids, attack, bank, options);
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset data = make_shapes_dataset(cfg.data);
  save_dataset(cfg.data_dir, data);
  log << "wrote " << data.train.size() << " train and " << data.test.size() << " test images to " << cfg.data_dir
      << "\n";
}

TrainReport cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset data = load_dataset(cfg.data_dir);
  Classifier model(classifier_config(cfg), cfg.model_seed);
  check_model_input(model, data);
  const TrainReport report = train_classifier(model, data, cfg.train);
  save_classifier(cfg.checkpoint_path(), model);
  log << "train_acc=" << fmt(report.train_accuracy) << " test_acc=" << fmt(report.test_accuracy) << "\n";
  return report;
}

MetricSummary cmd_attack(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Loaded in = load_inputs(cfg);
  TargetBank bank(in.model, in.data.train, cfg.uap);
  const fs::path out(cfg.out_dir);
  std::optional<fs::path> dump_dir;
  if (cfg.dump_images) dump_dir = out / "images";
  const SuiteReport report = attack_suite(cfg, cfg.attack, in, bank, dump_dir, log);
  write_file_atomic(out / "attack_results.csv", results_csv(report));
  write_file_atomic(out / "attack_summary.csv", summary_csv(report.summary));
  log << "asr=" << fmt(report.summary.asr) << " mean_iterations=" << fmt(report.summary.mean_iterations) << "\n";
  return report.summary;
}

std::vector<SweepPoint> cmd_sweep(const RunConfig& cfg, SweepAxis axis, std::span<const double> values,
                                  std::ostream& log) {
  cfg.validate();
  if (values.empty()) throw ContractError("sweep: no values given");
  std::vector<AttackConfig> configs;
  for (double v : values) {
    AttackConfig a = cfg.attack;
    set_sweep_value(a, axis, v);
    a.validate();
    if (cfg.data.size % (std::size_t{1} << a.dwt_levels)) {
      throw ContractError("sweep: image-size is not divisible by 2^dwt_levels for value " + fmt(v));
    }
    configs.push_back(a);
  }
  const Loaded in = load_inputs(cfg);
  TargetBank bank(in.model, in.data.train, cfg.uap);
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    log << sweep_axis_name(axis) << "=" << fmt(values[i]) << "\n";
    const SuiteReport report = attack_suite(cfg, configs[i], in, bank, std::nullopt, log);
    points.push_back(SweepPoint{values[i], report.summary});
  }
  const std::string csv = sweep_csv(axis, points);
  write_file_atomic(fs::path(cfg.out_dir) / ("sweep_" + std::string(sweep_axis_name(axis)) + ".csv"), csv);
  log << csv;
  return points;
}

}  // namespace advinn
