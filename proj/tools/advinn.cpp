// advinn: dataset generation, classifier training, attacks and sweeps.
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "advinn/commands.hpp"
#include "advinn/error.hpp"
#include "advinn/run_config.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kMissingInput = 2, kCorruption = 3, kNumerical = 4 };

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "advinn: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  advinn::tune_allocator();

  CLI::App app{"Invertible-network adversarial attacks on a synthetic texture classifier"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "File of 'key = value' settings; flags override it");
  std::map<std::string, std::string> flags;
  for (auto key : advinn::run_config_keys()) {
    const std::string name(key);
    app.add_option("--" + name, flags[name]);
  }

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset and its manifest");
  auto* train = app.add_subcommand("train", "Train the classifier and save a checkpoint");
  auto* attack = app.add_subcommand("attack", "Attack the selected test images and write result CSVs");
  auto* sweep = app.add_subcommand("sweep", "Repeat the attack suite over values of one setting");
  std::string axis, values;
  sweep->add_option("--axis", axis, "lambda_adv, num_blocks or dwt_levels")->required();
  sweep->add_option("--values", values, "Comma-separated values, e.g. 3,10,30,100")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    advinn::RunConfig cfg;
    if (!config_file.empty()) advinn::apply_config_file(cfg, config_file);
    advinn::apply_environment(cfg);
    for (const auto& [name, value] : flags) {
      if (app.count("--" + name) > 0) advinn::apply_setting(cfg, name, value);
    }

    if (gen->parsed()) {
      advinn::cmd_gen_data(cfg, std::cout);
    } else if (train->parsed()) {
      advinn::cmd_train(cfg, std::cout);
    } else if (attack->parsed()) {
      advinn::cmd_attack(cfg, std::cout);
    } else if (sweep->parsed()) {
      const auto parsed_axis = advinn::parse_sweep_axis(axis);
      const auto list = advinn::parse_value_list(values);
      advinn::cmd_sweep(cfg, parsed_axis, list, std::cout);
    }
  } catch (const advinn::ContractError& e) {
    return report("usage", e, kUsage);
  } catch (const advinn::IoError& e) {
    return report("missing input", e, kMissingInput);
  } catch (const advinn::LookupError& e) {
    return report("missing input", e, kMissingInput);
  } catch (const advinn::CorruptionError& e) {
    return report("corrupt data", e, kCorruption);
  } catch (const advinn::NumericalError& e) {
    return report("numerical abort", e, kNumerical);
  } catch (const advinn::DomainError& e) {
    return report("numerical abort", e, kNumerical);
  } catch (const advinn::DimensionError& e) {
    return report("usage", e, kUsage);
  } catch (const std::exception& e) {
    return report("error", e, kUsage);
  }
  return kOk;
}
