#include "advinn/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "advinn/error.hpp"
#include "advinn/io.hpp"

namespace advinn {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ContractError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                      std::string(expected) + ")");
}

double parse_real(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  auto number = [&](std::string_view part) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size() || !std::isfinite(v)) bad_value(key, text, "a number");
    return v;
  };
  const auto slash = s.find('/');
  if (slash == std::string::npos) return number(s);
  const double den = number(std::string_view(s).substr(slash + 1));
  if (den == 0.0) bad_value(key, text, "a non-zero denominator");
  return number(std::string_view(s).substr(0, slash)) / den;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) bad_value(key, text, "a non-negative integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  std::string s = trim(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, text, "true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename F>
Setter real(F field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_real(k, v); };
}
template <typename F>
Setter uint(F field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) {
    field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_uint(k, v));
  };
}
template <typename F>
Setter boolean(F field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_bool(k, v); };
}
template <typename F>
Setter text(F field) {
  return [field](RunConfig& c, std::string_view, std::string_view v) { field(c) = trim(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"epsilon", real([](RunConfig& c) -> double& { return c.attack.epsilon; })},
      {"kappa", real([](RunConfig& c) -> double& { return c.attack.kappa; })},
      {"lambda-adv", real([](RunConfig& c) -> double& { return c.attack.lambda_adv; })},
      {"w-ll", real([](RunConfig& c) -> double& { return c.attack.w_ll; })},
      {"w-detail", real([](RunConfig& c) -> double& { return c.attack.w_detail; })},
      {"lambda-perp", real([](RunConfig& c) -> double& { return c.attack.lambda_perp; })},
      {"lr1", real([](RunConfig& c) -> double& { return c.attack.lr1; })},
      {"lr1-decay-every", uint([](RunConfig& c) -> std::size_t& { return c.attack.lr1_decay_every; })},
      {"lr1-decay-rate", real([](RunConfig& c) -> double& { return c.attack.lr1_decay_rate; })},
      {"lr1-min", real([](RunConfig& c) -> double& { return c.attack.lr1_min; })},
      {"lr2", real([](RunConfig& c) -> double& { return c.attack.lr2; })},
      {"max-iter", uint([](RunConfig& c) -> std::size_t& { return c.attack.max_iter; })},
      {"num-blocks", uint([](RunConfig& c) -> std::size_t& { return c.attack.num_blocks; })},
      {"dwt-levels", uint([](RunConfig& c) -> std::size_t& { return c.attack.dwt_levels; })},
      {"target-mode",
       [](RunConfig& c, std::string_view, std::string_view v) { c.attack.target_mode = parse_target_mode(trim(v)); }},
      {"seed", uint([](RunConfig& c) -> std::uint64_t& { return c.attack.seed; })},
      {"trace", boolean([](RunConfig& c) -> bool& { return c.attack.trace; })},
      {"data-seed", uint([](RunConfig& c) -> std::uint64_t& { return c.data.seed; })},
      {"n-train", uint([](RunConfig& c) -> std::size_t& { return c.data.n_train; })},
      {"n-test", uint([](RunConfig& c) -> std::size_t& { return c.data.n_test; })},
      {"image-size", uint([](RunConfig& c) -> std::size_t& { return c.data.size; })},
      {"epochs", uint([](RunConfig& c) -> std::size_t& { return c.train.epochs; })},
      {"batch-size", uint([](RunConfig& c) -> std::size_t& { return c.train.batch_size; })},
      {"train-lr", real([](RunConfig& c) -> double& { return c.train.learning_rate; })},
      {"train-seed", uint([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"model-seed", uint([](RunConfig& c) -> std::uint64_t& { return c.model_seed; })},
      {"uap-steps", uint([](RunConfig& c) -> std::size_t& { return c.uap.steps; })},
      {"uap-lr", real([](RunConfig& c) -> double& { return c.uap.learning_rate; })},
      {"uap-eps", real([](RunConfig& c) -> double& { return c.uap.eps_uap; })},
      {"uap-canvases", uint([](RunConfig& c) -> std::size_t& { return c.uap.canvases; })},
      {"uap-seed", uint([](RunConfig& c) -> std::uint64_t& { return c.uap.seed; })},
      {"num-images", uint([](RunConfig& c) -> std::size_t& { return c.num_images; })},
      {"data-dir", text([](RunConfig& c) -> std::string& { return c.data_dir; })},
      {"out-dir", text([](RunConfig& c) -> std::string& { return c.out_dir; })},
      {"checkpoint", text([](RunConfig& c) -> std::string& { return c.checkpoint; })},
      {"dump-images", boolean([](RunConfig& c) -> bool& { return c.dump_images; })},
  };
  return table;
}

}  // namespace

std::vector<std::string_view> run_config_keys() {
  std::vector<std::string_view> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  std::string k = trim(key);
  std::replace(k.begin(), k.end(), '_', '-');
  auto it = setters().find(k);
  if (it == setters().end()) throw ContractError("unknown configuration key '" + std::string(key) + "'");
  it->second(cfg, k, value);
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ContractError& e) {
      throw ContractError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) { apply_config_text(cfg, read_file(path)); }

void apply_environment(RunConfig& cfg) {
  if (const char* seed = std::getenv("ADVINN_SEED"); seed && *seed) {
    cfg.attack.seed = parse_uint("ADVINN_SEED", seed);
  }
}

void RunConfig::validate() const {
  if (!(attack.epsilon > 0.0)) throw ContractError("epsilon must lie in (0, 1]");
  attack.validate();
  uap.validate();
  if (data.n_train == 0) throw ContractError("n-train must be positive");
  if (data.size < 8) throw ContractError("image-size must be at least 8");
  if (train.epochs == 0) throw ContractError("epochs must be positive");
  if (train.batch_size == 0) throw ContractError("batch-size must be positive");
  if (!(train.learning_rate > 0.0)) throw ContractError("train-lr must be positive");
  if (num_images == 0) throw ContractError("num-images must be positive");
  const std::size_t factor = std::size_t{1} << attack.dwt_levels;
  if (data.size % factor) {
    throw ContractError("image-size " + std::to_string(data.size) + " is not divisible by 2^dwt-levels = " +
                        std::to_string(factor));
  }
  if (out_dir.empty()) throw ContractError("out-dir must not be empty");
}

std::string RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? (fs::path(out_dir) / "classifier.advinn").string() : checkpoint;
}

}  // namespace advinn
