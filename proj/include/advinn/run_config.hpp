#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "advinn/attack.hpp"
#include "advinn/classifier.hpp"
#include "advinn/dataset.hpp"
#include "advinn/targets.hpp"

namespace advinn {

// Everything a command needs. Keys are the kebab-case field names listed by
// run_config_keys(); config files use the same keys.
struct RunConfig {
  AttackConfig attack;
  ShapesOptions data;  // data-seed, n-train, n-test, image-size
  TrainOptions train;  // epochs, batch-size, train-lr, train-seed
  std::uint64_t model_seed = 7;
  UapOptions uap;
  std::size_t num_images = 100;
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string checkpoint;  // empty: <out-dir>/classifier.advinn
  bool dump_images = false;

  // Range checks for a real run (epsilon must be positive here). Throws
  // ContractError naming the offending key.
  void validate() const;
  std::string checkpoint_path() const;
};

std::vector<std::string_view> run_config_keys();

// Sets one key. Accepts '_' in place of '-'. Booleans take true/false/1/0/
// yes/no/on/off; real values also accept a ratio such as 8/255. Throws
// ContractError on an unknown key or unparsable value.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

// "key = value" lines; '#' starts a comment; blank lines are ignored.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::string& path);  // IoError if missing

// ADVINN_SEED, when set, replaces attack.seed.
void apply_environment(RunConfig& cfg);

}  // namespace advinn
