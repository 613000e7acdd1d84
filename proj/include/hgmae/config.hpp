#pragma once

// Run manifest: every knob of a run in one flat, dotted-key JSON object.

#include "hgmae/mp2vec.hpp"
#include "hgmae/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hgmae {

struct EvalSettings {
  int labels_per_class = 20;
  Index val_size = 1000;
  Index test_size = 1000;
  int seeds = 10;
  int kmeans_restarts = 10;
  double edge_holdout = 0.4;  // fraction of each view's edges hidden for edge AUC
};

struct RunManifest {
  TrainConfig train;
  WalkConfig walk;
  EvalSettings eval;
  std::string data_dir;
  std::string positions_file;  // empty: compute from walks
  std::uint64_t seed = 0;

  /// Copies the run seed and positional dimension into the sub-configs.
  void resolve();
  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Keys accepted in a config file, in manifest order.
std::vector<std::string> config_keys();

/// Applies `config` (a JSON object) then each "key=value" override on top of
/// the defaults. Override values are parsed as JSON, falling back to a plain
/// string. Throws ConfigError naming unknown keys and mistyped values.
RunManifest parse_config(const nlohmann::json& config, const std::vector<std::string>& overrides = {});

/// Same, reading the object from a file; an empty path means {}.
RunManifest parse_config_file(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

/// Seed precedence: config < HGMAE_SEED < command line.
void apply_seed(RunManifest& m, const char* env_seed, std::optional<std::uint64_t> cli_seed);

/// Every key with its resolved value.
nlohmann::ordered_json manifest_to_json(const RunManifest& m);

}  // namespace hgmae
