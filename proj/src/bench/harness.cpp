#include "ctrlab/bench/harness.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "ctrlab/ad/record.hpp"
#include "ctrlab/mpc/ilqr.hpp"
#include "ctrlab/util/math.hpp"

namespace ctrlab::bench {

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_to_vec(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

json spec_to_json(const policy::MlpSpec& s) {
  return json{{"sizes", s.sizes},
              {"output",
               s.output == policy::MlpSpec::Output::linear ? "linear"
                                                           : "tanh_scaled"},
              {"out_scale", s.out_scale},
              {"out_shift", s.out_shift}};
}

policy::MlpSpec spec_from_json(const json& j) {
  policy::MlpSpec s;
  s.sizes = j["sizes"].get<std::vector<int>>();
  s.output = j["output"] == "linear" ? policy::MlpSpec::Output::linear
                                     : policy::MlpSpec::Output::tanh_scaled;
  s.out_scale = j["out_scale"].get<std::vector<double>>();
  s.out_shift = j["out_shift"].get<std::vector<double>>();
  return s;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  in >> j;
  return j;
}

}  // namespace

json read_manifest(const std::filesystem::path& run_dir) {
  return read_json(run_dir / "manifest.json");
}

void save_gaussian_policy(const std::filesystem::path& path,
                          const pg::GaussianPolicy& p) {
  write_json(path, json{{"kind", "gaussian"},
                        {"mean", spec_to_json(p.mean)},
                        {"theta", vec_to_json(p.theta)}});
}

pg::GaussianPolicy load_gaussian_policy(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("kind", "") != "gaussian")
    throw std::runtime_error(path.string() + ": not a gaussian policy");
  pg::GaussianPolicy p;
  p.mean = spec_from_json(j["mean"]);
  p.theta = json_to_vec(j["theta"]);
  return p;
}

void save_deterministic_policy(const std::filesystem::path& path,
                               const policy::MlpSpec& spec,
                               const Eigen::VectorXd& theta) {
  write_json(path, json{{"kind", "deterministic"},
                        {"net", spec_to_json(spec)},
                        {"theta", vec_to_json(theta)}});
}

std::pair<policy::MlpSpec, Eigen::VectorXd> load_deterministic_policy(
    const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("kind", "") != "deterministic")
    throw std::runtime_error(path.string() + ": not a deterministic policy");
  return {spec_from_json(j["net"]), json_to_vec(j["theta"])};
}

void save_psmpc_policy(const std::filesystem::path& path,
                       const psmpc::HighLevelPolicy& p) {
  write_json(path, json{{"kind", "psmpc"},
                        {"contextual", p.contextual},
                        {"net", spec_to_json(p.net)},
                        {"w", vec_to_json(p.w)},
                        {"mu", vec_to_json(p.mu)},
                        {"log_std", vec_to_json(p.log_std)},
                        {"lo", vec_to_json(p.bounds.lo)},
                        {"hi", vec_to_json(p.bounds.hi)}});
}

psmpc::HighLevelPolicy load_psmpc_policy(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.value("kind", "") != "psmpc")
    throw std::runtime_error(path.string() + ": not a psmpc policy");
  psmpc::HighLevelPolicy p;
  p.contextual = j["contextual"].get<bool>();
  if (p.contextual) p.net = spec_from_json(j["net"]);
  p.w = json_to_vec(j["w"]);
  p.mu = json_to_vec(j["mu"]);
  p.log_std = json_to_vec(j["log_std"]);
  p.bounds.lo = json_to_vec(j["lo"]);
  p.bounds.hi = json_to_vec(j["hi"]);
  return p;
}

// --- run ---------------------------------------------------------------------

namespace {

void curve_to_metrics(const std::string& run_id, std::uint64_t seed,
                      const std::vector<TrainPoint>& curve,
                      MetricsWriter& out) {
  for (const TrainPoint& pt : curve) {
    MetricsRecord r;
    r.run_id = run_id;
    r.seed = seed;
    r.iteration = pt.iteration;
    r.env_steps = pt.env_steps;
    r.wall_time_s = pt.wall_time_s;
    r.objective = pt.objective;
    r.success = pt.success;
    out.write(r);
  }
}

bool run_seed(const ExperimentConfig& cfg, const TaskSetup& ts,
              std::uint64_t seed, const std::filesystem::path& dir,
              std::ostream& log) {
  const json& mc = cfg.method_cfg;
  MetricsWriter out(dir / ("seed_" + std::to_string(seed) + ".csv"));

  if (cfg.method == "mpc") {
    auto ctrl = make_mpc_controller(ts);
    const bool randomize = mc.value("randomize", false);
    EpisodeWorld w = make_episode(ts, seed, randomize, nullptr);
    if (!randomize) w.x0 = ts.x0_nominal;
    const auto t0 = std::chrono::steady_clock::now();
    MpcEpisodeResult ep = run_mpc_episode(ts, w, ctrl);
    const bool success = trace_success(ts, w, ep.trace);
    const bool gate = ts.task == env::Task::gate_pass;
    double cum = 0.0;
    for (int k = 0; k < ep.trace.steps; ++k) {
      const std::size_t sk = static_cast<std::size_t>(k);
      if (gate)
        cum += sk < ep.trace.step_rewards.size() ? ep.trace.step_rewards[sk]
                                                 : 0.0;
      else
        cum += sk < ep.step_costs.size() ? ep.step_costs[sk] : 0.0;
      MetricsRecord r;
      r.run_id = cfg.run_id;
      r.seed = seed;
      r.iteration = k;
      r.env_steps = k + 1;
      r.wall_time_s = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      r.objective = cum;
      r.success = (k + 1 == ep.trace.steps) && success;
      out.write(r);
    }
    log << "  seed " << seed << ": mpc closed-loop cost "
        << ep.closed_loop_cost << (success ? " (success)" : "") << "\n";
    return true;
  }

  if (cfg.method == "rl") {
    pg::PgConfig pc;
    pc.gamma = mc.value("gamma", pc.gamma);
    pc.episodes_per_iter = mc.value("episodes_per_iter", pc.episodes_per_iter);
    pc.learning_rate = mc.value("learning_rate", pc.learning_rate);
    pc.entropy_weight = mc.value("entropy_weight", pc.entropy_weight);
    pc.grad_clip = mc.value("grad_clip", pc.grad_clip);
    pc.iterations = mc.value("iterations", pc.iterations);
    pc.eval_episodes = mc.value("eval_episodes", pc.eval_episodes);
    pc.normalize_advantages =
        mc.value("normalize_advantages", pc.normalize_advantages);
    pc.ppo_clip = mc.value("ppo_clip", pc.ppo_clip);
    pc.ppo_epsilon = mc.value("ppo_epsilon", pc.ppo_epsilon);
    pc.ppo_epochs = mc.value("ppo_epochs", pc.ppo_epochs);
    const std::string bl = mc.value("baseline", "mean_return");
    pc.baseline = bl == "none" ? pg::Baseline::none
                  : bl == "value_mlp" ? pg::Baseline::value_mlp
                                      : pg::Baseline::mean_return;
    pc.randomize = mc.value("randomize", false);
    pc.seed = seed;

    auto spec = policy_spec(ts, mc.value("hidden", 24));
    auto p0 = pg::GaussianPolicy::make(spec, mc.value("init_log_std", -0.7),
                                       Rng::stream(seed, 0x11));
    const auto cb = make_pg_callbacks(ts, pc.randomize);
    const auto res = pg::train(p0, cb, pc);
    curve_to_metrics(cfg.run_id, seed, res.curve, out);
    save_gaussian_policy(dir / ("seed_" + std::to_string(seed) +
                                "_policy.json"),
                         res.best);
    log << "  seed " << seed << ": rl best objective " << res.best_objective
        << (res.diverged ? " (diverged)" : "") << "\n";
    return !res.curve.empty();
  }

  if (cfg.method == "bptt") {
    bptt::BpttConfig bc;
    bc.horizon = mc.value("horizon", ts.episode_steps);
    bc.truncation = mc.value("truncation", std::min(50, bc.horizon));
    bc.learning_rate = mc.value("learning_rate", 5e-3);
    bc.grad_clip = mc.value("grad_clip", 100.0);
    bc.batch = mc.value("batch", 16);
    bc.iterations = mc.value("iterations", 300);
    bc.eval_batch = mc.value("eval_batch", 4);
    bc.seed = seed;
    bc.x0_ranges = ts.x0_ranges;

    auto spec = policy_spec(ts, mc.value("hidden", 24));
    Eigen::VectorXd theta0 = policy::mlp_init(spec, Rng::stream(seed, 0x22));

    const bool decouple = ts.task == env::Task::hop;
    bptt::ContactDecoupling coup;
    if (decouple) coup = task_coupling(ts);

    bptt::SuccessProbe probe;
    if (ts.task == env::Task::hop) {
      const auto* hop = dynamic_cast<const env::Hopper*>(ts.nominal.get());
      probe = [&ts, hop, &spec, &bc, decouple, coup](const Eigen::VectorXd& th) {
        std::vector<Eigen::VectorXd> traj;
        bptt::rollout_cost(spec, th, *ts.nominal, ts.integ, *ts.stage_cost,
                           *ts.terminal_cost, ts.x0_nominal, bc.horizon,
                           decouple ? &coup : nullptr, &traj);
        return count_flights_above_rest(*hop, traj) >= ts.success.hop_flights;
      };
    } else {
      probe = [&ts, &spec, &bc](const Eigen::VectorXd& th) {
        std::vector<Eigen::VectorXd> traj;
        bptt::rollout_cost(spec, th, *ts.nominal, ts.integ, *ts.stage_cost,
                           *ts.terminal_cost, ts.x0_nominal, bc.horizon,
                           nullptr, &traj);
        EpisodeTrace tr;
        tr.x = traj;
        EpisodeWorld w;
        return trace_success(ts, w, tr);
      };
    }

    const auto res =
        bptt::train(spec, theta0, *ts.nominal, ts.integ, *ts.stage_cost,
                    *ts.terminal_cost, bc, decouple ? &coup : nullptr, probe);
    curve_to_metrics(cfg.run_id, seed, res.curve, out);
    save_deterministic_policy(
        dir / ("seed_" + std::to_string(seed) + "_policy.json"), spec,
        res.best_theta);
    log << "  seed " << seed << ": bptt best cost " << res.best_cost
        << (res.aborted ? " (aborted)" : "") << "\n";
    return !res.curve.empty();
  }

  if (cfg.method == "psmpc") {
    psmpc::PsmpcConfig sc;
    sc.samples_per_iter = mc.value("samples_per_iter", 16);
    sc.beta = mc.value("beta", 2.0);
    sc.iterations = mc.value("iterations", 25);
    sc.std_floor = mc.value("std_floor", 0.02);
    sc.context_free = mc.value("context_free", false);
    sc.eval_episodes = mc.value("eval_episodes", 20);
    sc.seed = seed;

    const auto prob = make_psmpc_problem(ts, mc.value("waypoint_weight", 60.0));
    const auto bounds = psmpc_bounds(ts);
    psmpc::HighLevelPolicy p0;
    const double T = ts.episode_steps * ts.integ.dt;
    Eigen::VectorXd ls0 = Eigen::VectorXd::Constant(1, std::log(0.2 * T));
    if (sc.context_free) {
      p0 = psmpc::HighLevelPolicy::context_free(
          bounds, Eigen::VectorXd::Constant(1, 0.5 * T), ls0);
    } else {
      p0 = psmpc::HighLevelPolicy::with_context(bounds, prob.ctx_dim,
                                                mc.value("hidden", 16), ls0,
                                                Rng::stream(seed, 0x33));
    }
    const auto res = psmpc::train(p0, prob, sc);
    curve_to_metrics(cfg.run_id, seed, res.curve, out);
    save_psmpc_policy(dir / ("seed_" + std::to_string(seed) + "_policy.json"),
                      res.policy);
    log << "  seed " << seed << ": psmpc best mean reward "
        << res.best_mean_reward << "\n";
    return !res.curve.empty();
  }

  throw ConfigError("method", "unknown method " + cfg.method);
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const TaskSetup ts = build_task(cfg);
  const std::filesystem::path dir = resolve_out_dir(cfg);
  std::filesystem::create_directories(dir);

  json manifest{{"schema_version", kMetricsSchemaVersion},
                {"run_id", cfg.run_id},
                {"task", cfg.task},
                {"method", cfg.method},
                {"seeds", cfg.seeds},
                {"config_hash", config_hash(cfg.raw)},
                {"code_version", kCodeVersion},
                {"config", cfg.raw}};
  write_json(dir / "manifest.json", manifest);

  log << "run " << cfg.run_id << " -> " << dir.string() << "\n";
  int ok_seeds = 0;
  for (const std::uint64_t seed : cfg.seeds) {
    try {
      if (run_seed(cfg, ts, seed, dir, log)) ++ok_seeds;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      log << "  seed " << seed << ": diverged (" << e.what() << ")\n";
    }
  }
  return ok_seeds == 0 ? kExitAllSeedsDiverged : kExitOk;
}

// --- robustness ----------------------------------------------------------------

RobustnessGrid parse_grid(const json& evalj) {
  RobustnessGrid g;
  if (evalj.contains("param_scales"))
    g.param_scales = evalj["param_scales"].get<std::vector<double>>();
  if (evalj.contains("push_fracs"))
    g.push_fracs = evalj["push_fracs"].get<std::vector<double>>();
  if (evalj.contains("noise_levels"))
    g.noise_levels = evalj["noise_levels"].get<std::vector<double>>();
  g.episodes = evalj.value("episodes", g.episodes);
  return g;
}

std::vector<RobustnessCellResult> eval_robustness(
    const TaskSetup& ts, const CellEpisodeFn& episode,
    const RobustnessGrid& grid, std::span<const std::uint64_t> seeds) {
  std::vector<RobustnessCellResult> out;
  for (const std::uint64_t seed : seeds) {
    for (double s : grid.param_scales) {
      for (double pf : grid.push_fracs) {
        for (double nl : grid.noise_levels) {
          CellOverride cell;
          cell.param_scales[ts.robust_param] = s;
          cell.push_frac = pf;
          cell.noise_level = nl;
          std::ostringstream id;
          id << "s" << std::fixed << std::setprecision(2) << s << "_p" << pf
             << "_n" << std::setprecision(3) << nl;
          cell.id = id.str();

          RobustnessCellResult r;
          r.seed = seed;
          r.cell_id = cell.id;
          r.param_scale = s;
          r.push_frac = pf;
          r.noise_level = nl;
          r.episodes = grid.episodes;
          for (int e = 0; e < grid.episodes; ++e) {
            const std::uint64_t es =
                Rng::stream(seed, fnv1a64(cell.id),
                            static_cast<std::uint64_t>(e));
            if (episode(es, cell)) ++r.successes;
          }
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

void write_robustness_csv(const std::filesystem::path& path,
                          std::span<const RobustnessCellResult> cells) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "seed,cell_id,param_scale,push_frac,noise_level,successes,episodes,"
         "rate\n";
  for (const auto& c : cells)
    out << c.seed << ',' << c.cell_id << ',' << c.param_scale << ','
        << c.push_frac << ',' << c.noise_level << ',' << c.successes << ','
        << c.episodes << ',' << std::setprecision(17) << c.rate() << "\n";
}

std::vector<RobustnessCellResult> read_robustness_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<RobustnessCellResult> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RobustnessCellResult r;
    std::istringstream is(line);
    std::string f;
    std::getline(is, f, ',');
    r.seed = std::stoull(f);
    std::getline(is, r.cell_id, ',');
    std::getline(is, f, ',');
    r.param_scale = std::stod(f);
    std::getline(is, f, ',');
    r.push_frac = std::stod(f);
    std::getline(is, f, ',');
    r.noise_level = std::stod(f);
    std::getline(is, f, ',');
    r.successes = std::stoi(f);
    std::getline(is, f, ',');
    r.episodes = std::stoi(f);
    out.push_back(std::move(r));
  }
  return out;
}

CellEpisodeFn make_mpc_cell_episode(const TaskSetup& ts,
                                    std::shared_ptr<MpcController> ctrl) {
  return [&ts, ctrl](std::uint64_t ep_seed, const CellOverride& cell) {
    const EpisodeWorld w = make_episode(ts, ep_seed, false, &cell);
    const MpcEpisodeResult ep = run_mpc_episode(ts, w, *ctrl);
    return trace_success(ts, w, ep.trace);
  };
}

CellEpisodeFn make_policy_cell_episode(const TaskSetup& ts,
                                       std::shared_ptr<pg::GaussianPolicy> p) {
  return [&ts, p](std::uint64_t ep_seed, const CellOverride& cell) {
    const EpisodeWorld w = make_episode(ts, ep_seed, false, &cell);
    const EpisodeTrace tr =
        run_policy_episode(ts, w, *p, ep_seed, false, nullptr);
    return trace_success(ts, w, tr);
  };
}

int eval_command(const ExperimentConfig& cfg,
                 const std::filesystem::path& artifact_dir, std::ostream& log) {
  const TaskSetup ts = build_task(cfg);
  const RobustnessGrid grid = parse_grid(cfg.eval);

  std::vector<RobustnessCellResult> cells;
  if (cfg.method == "mpc") {
    auto ctrl = std::make_shared<MpcController>(make_mpc_controller(ts));
    cells = eval_robustness(ts, make_mpc_cell_episode(ts, ctrl), grid,
                            cfg.seeds);
  } else if (cfg.method == "rl" || cfg.method == "bptt") {
    for (const std::uint64_t seed : cfg.seeds) {
      const auto path =
          artifact_dir / ("seed_" + std::to_string(seed) + "_policy.json");
      auto p = std::make_shared<pg::GaussianPolicy>();
      if (cfg.method == "rl") {
        *p = load_gaussian_policy(path);
      } else {
        // deterministic policy evaluated through the mean-action path
        auto [spec, theta] = load_deterministic_policy(path);
        p->mean = spec;
        p->theta.resize(theta.size() + spec.output_dim());
        p->theta.head(theta.size()) = theta;
        p->theta.tail(spec.output_dim()).setConstant(-6.0);
      }
      const std::uint64_t seeds_one[] = {seed};
      auto part = eval_robustness(ts, make_policy_cell_episode(ts, p), grid,
                                  seeds_one);
      cells.insert(cells.end(), part.begin(), part.end());
    }
  } else {
    log << "eval: method " << cfg.method << " is not supported\n";
    return kExitConfigError;
  }

  const std::filesystem::path out =
      (cfg.method == "mpc" ? std::filesystem::path(resolve_out_dir(cfg))
                           : artifact_dir) /
      "robustness.csv";
  write_robustness_csv(out, cells);
  log << "wrote " << out.string() << " (" << cells.size() << " cells)\n";
  return kExitOk;
}

// --- compare -------------------------------------------------------------------

double steps_to_threshold(const std::vector<MetricsRecord>& curve,
                          double threshold, bool below) {
  for (const auto& r : curve) {
    const bool crossed =
        below ? r.objective <= threshold : r.objective >= threshold;
    if (crossed) return static_cast<double>(r.env_steps);
  }
  return -1.0;
}

std::vector<CompareRow> compare_dirs(
    const std::vector<std::filesystem::path>& dirs,
    std::optional<double> threshold, bool below, std::ostream& log) {
  std::vector<CompareRow> rows;
  std::string task;
  for (const auto& dir : dirs) {
    const json man = read_manifest(dir);
    CompareRow row;
    row.dir = dir.string();
    row.method = man["method"].get<std::string>();
    row.task = man["task"].get<std::string>();
    if (task.empty())
      task = row.task;
    else if (task != row.task)
      throw std::runtime_error("compare: mixed tasks (" + task + " vs " +
                               row.task + ")");

    std::vector<double> finals, steps;
    int succ = 0, n = 0;
    for (const auto& s : man["seeds"]) {
      const auto seed = s.get<std::uint64_t>();
      const auto mf =
          read_metrics(dir / ("seed_" + std::to_string(seed) + ".csv"));
      if (mf.schema_version != kMetricsSchemaVersion)
        throw std::runtime_error("compare: metrics schema mismatch in " +
                                 dir.string());
      if (mf.records.empty()) continue;
      finals.push_back(mf.records.back().objective);
      succ += mf.records.back().success ? 1 : 0;
      ++n;
      if (threshold)
        steps.push_back(steps_to_threshold(mf.records, *threshold, below));
    }
    row.median_final_objective = median(finals);
    row.final_success_rate = n ? double(succ) / n : 0.0;
    if (threshold) {
      // never-crossed runs rank as +inf for the median
      for (double& v : steps)
        if (v < 0) v = std::numeric_limits<double>::infinity();
      row.median_steps_to_threshold = median(steps);
    }
    rows.push_back(std::move(row));
  }

  log << "task: " << task << "\n";
  log << std::left << std::setw(28) << "dir" << std::setw(8) << "method"
      << std::setw(18) << "median_objective" << std::setw(20)
      << "steps_to_threshold" << "success_rate\n";
  for (const auto& r : rows) {
    log << std::left << std::setw(28) << r.dir << std::setw(8) << r.method
        << std::setw(18) << r.median_final_objective << std::setw(20);
    if (r.median_steps_to_threshold < 0)
      log << "-";
    else
      log << r.median_steps_to_threshold;
    log << r.final_success_rate << "\n";
  }

  for (const auto& dir : dirs) {
    const auto rc = dir / "robustness.csv";
    if (!std::filesystem::exists(rc)) continue;
    const auto cells = read_robustness_csv(rc);
    std::map<std::string, std::pair<int, int>> agg;
    for (const auto& c : cells) {
      agg[c.cell_id].first += c.successes;
      agg[c.cell_id].second += c.episodes;
    }
    log << dir.string() << " robustness:\n";
    for (const auto& [id, se] : agg)
      log << "  " << std::left << std::setw(24) << id
          << double(se.first) / std::max(1, se.second) << "\n";
  }
  return rows;
}

// --- gradcheck -----------------------------------------------------------------

int gradcheck_command(const std::string& env_name, int steps, int trials,
                      std::uint64_t seed, bool decoupled, std::ostream& log) {
  std::shared_ptr<env::Env> e;
  if (env_name == "pendulum")
    e = std::make_shared<env::Pendulum>();
  else if (env_name == "cartpole")
    e = std::make_shared<env::Cartpole>();
  else if (env_name == "quadrotor")
    e = std::make_shared<env::PlanarQuadrotor>();
  else if (env_name == "hopper")
    e = std::make_shared<env::Hopper>();
  else {
    log << "gradcheck: unknown environment " << env_name << "\n";
    return kExitConfigError;
  }

  if (!e->is_smooth() && !decoupled) {
    log << "gradcheck: " << env_name
        << " has discontinuous dynamics; rerun with --decoupled to check "
           "the smooth contact proxy\n";
    return kExitConfigError;
  }

  // --decoupled checks the smooth contact proxy: the soft vector field is
  // used on both the value and the gradient path
  struct SoftHopper : env::Hopper {
    using env::Hopper::Hopper;
    bool is_smooth() const override { return true; }
  };
  if (!e->is_smooth()) e = std::make_shared<SoftHopper>();

  ad::IntegratorConfig integ;
  integ.dt = e->default_dt();
  if (env_name == "hopper") integ.method = ad::Method::semi_implicit_euler;

  policy::MlpSpec spec;
  spec.sizes = {env::encoded_obs_dim(*e), 8, e->control_dim()};
  spec.output = policy::MlpSpec::Output::tanh_scaled;
  const auto lo = e->control_lo(), hi = e->control_hi();
  spec.out_scale.resize(lo.size());
  spec.out_shift.resize(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    spec.out_scale[i] = 0.5 * (hi[i] - lo[i]);
    spec.out_shift[i] = 0.5 * (hi[i] + lo[i]);
  }
  const int np = spec.param_count();

  auto stage = mpc::make_stage_cost([](auto x, auto u, int) {
    std::remove_cvref_t<decltype(x[0])> acc(0.0);
    for (const auto& xi : x) acc += 0.5 * xi * xi;
    for (const auto& ui : u) acc += 0.05 * ui * ui;
    return acc;
  });
  auto terminal = mpc::make_terminal_cost([](auto x) {
    std::remove_cvref_t<decltype(x[0])> acc(0.0);
    for (const auto& xi : x) acc += 0.5 * xi * xi;
    return acc;
  });

  const double h = 1e-6;
  double worst = 0.0;
  int worst_trial = -1, worst_coord = -1;

  for (int t = 0; t < trials; ++t) {
    Rng rng(Rng::stream(seed, 0x6763, static_cast<std::uint64_t>(t)));
    Eigen::VectorXd theta =
        policy::mlp_init(spec, Rng::stream(seed, 0x6764,
                                           static_cast<std::uint64_t>(t)));
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      theta[i] += 0.2 * rng.normal();
    Eigen::VectorXd x0(e->state_dim());
    for (int i = 0; i < e->state_dim(); ++i) x0[i] = rng.uniform(-0.5, 0.5);
    if (env_name == "hopper") {
      // start a little above the ground so the rollout spans flight/contact
      x0[0] = rng.uniform(0.6, 0.9);
      x0[2] = rng.uniform(-0.05, 0.05);
    }

    const bptt::ContactDecoupling* coup = nullptr;

    bptt::RolloutGrad rg =
        bptt::rollout_and_grad(spec, theta, *e, integ, *stage, *terminal,
                               std::span<const Eigen::VectorXd>(&x0, 1), steps,
                               std::max(1, steps), 1e18, coup);

    for (int i = 0; i < np; ++i) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fp = bptt::rollout_cost(spec, tp, *e, integ, *stage,
                                           *terminal, x0, steps, coup);
      const double fm = bptt::rollout_cost(spec, tm, *e, integ, *stage,
                                           *terminal, x0, steps, coup);
      const double fd = (fp - fm) / (2.0 * h);
      const double err =
          std::abs(rg.grad[i] - fd) / std::max(1.0, std::abs(fd));
      if (!std::isfinite(err) || err > worst) {
        worst = std::isfinite(err) ? err
                                   : std::numeric_limits<double>::infinity();
        worst_trial = t;
        worst_coord = i;
      }
    }
  }

  log << "gradcheck " << env_name << " N=" << steps << " trials=" << trials
      << ": max rel err " << std::scientific << worst << "\n";
  if (worst >= 1e-4) {
    log << "breach at trial " << worst_trial << ", coordinate " << worst_coord
        << "\n";
    return kExitInvariantBreach;
  }
  return kExitOk;
}

}  // namespace ctrlab::bench
