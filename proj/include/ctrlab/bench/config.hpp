#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace ctrlab::bench {

using nlohmann::json;

// schema violation, reported with the offending key path
struct ConfigError : std::runtime_error {
  ConfigError(std::string key, const std::string& msg)
      : std::runtime_error(key + ": " + msg), key_path(std::move(key)) {}
  std::string key_path;
};

struct ExperimentConfig {
  std::string task;    // swingup | balance | gate-pass | hop
  std::string method;  // mpc | rl | bptt | psmpc
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::string run_id;

  json env;            // { name, dt?, params? }
  json reward;         // coefficient overrides
  json randomization;  // domain randomization block
  json episode;        // { steps?, x0?, x0_ranges? }
  json success;        // success-definition overrides
  json method_cfg;     // the single method block
  json eval;           // robustness grid
  json compare;        // { threshold?, direction? }

  json raw;  // the whole document, for hashing and manifests
};

ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::string& path);

std::string config_hash(const json& doc);

// config-level output root override
std::string resolve_out_dir(const ExperimentConfig& cfg);

}  // namespace ctrlab::bench
