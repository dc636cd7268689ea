#include "ctrlab/bench/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ctrlab/util/math.hpp"

namespace ctrlab::bench {

namespace {

const std::set<std::string> kTasks = {"swingup", "balance", "gate-pass",
                                      "hop"};
const std::set<std::string> kMethods = {"mpc", "rl", "bptt", "psmpc"};
const std::set<std::string> kEnvs = {"pendulum", "cartpole", "quadrotor",
                                     "hopper"};

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  c.raw = doc;

  if (!doc.is_object()) throw ConfigError("", "config root must be an object");

  if (!doc.contains("task") || !doc["task"].is_string())
    throw ConfigError("task", "required string");
  c.task = doc["task"].get<std::string>();
  if (!kTasks.count(c.task))
    throw ConfigError("task", "unknown task '" + c.task + "'");

  if (!doc.contains("method") || !doc["method"].is_string())
    throw ConfigError("method", "required string");
  c.method = doc["method"].get<std::string>();
  if (!kMethods.count(c.method))
    throw ConfigError("method", "unknown method '" + c.method + "'");

  if (!doc.contains("seeds") || !doc["seeds"].is_array() ||
      doc["seeds"].empty())
    throw ConfigError("seeds", "required non-empty array");
  for (const auto& s : doc["seeds"]) {
    if (!s.is_number_unsigned() && !s.is_number_integer())
      throw ConfigError("seeds", "seeds must be integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }

  // exactly one method block, and it must match the method field
  int blocks = 0;
  for (const auto& m : kMethods)
    if (doc.contains(m)) ++blocks;
  if (!doc.contains(c.method))
    throw ConfigError("method",
                      "missing config block '" + c.method + "' for method");
  if (blocks != 1)
    throw ConfigError("method", "exactly one method block must be present");
  c.method_cfg = doc[c.method];
  if (!c.method_cfg.is_object())
    throw ConfigError(c.method, "method block must be an object");

  if (!doc.contains("env") || !doc["env"].is_object() ||
      !doc["env"].contains("name"))
    throw ConfigError("env.name", "required");
  c.env = doc["env"];
  const std::string ename = c.env["name"].get<std::string>();
  if (!kEnvs.count(ename))
    throw ConfigError("env.name", "unknown environment '" + ename + "'");

  c.out_dir = doc.value("out_dir", std::string("results/") + c.task + "_" +
                                       c.method);
  c.run_id = doc.value("run_id", c.task + "_" + c.method);

  c.reward = doc.value("reward", json::object());
  c.randomization = doc.value("randomization", json::object());
  c.episode = doc.value("episode", json::object());
  c.success = doc.value("success", json::object());
  c.eval = doc.value("eval", json::object());
  c.compare = doc.value("compare", json::object());
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("parse error: ") + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const json& doc) {
  const std::string canon = doc.dump();  // stable: nlohmann sorts object keys
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canon);
  return os.str();
}

std::string resolve_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::path p = cfg.out_dir;
  if (const char* root = std::getenv("CTRLAB_OUT_ROOT");
      root != nullptr && p.is_relative())
    p = std::filesystem::path(root) / p;
  return p.string();
}

}  // namespace ctrlab::bench
