#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctrlab/env/cartpole.hpp"
#include "ctrlab/env/gate.hpp"
#include "ctrlab/env/hopper.hpp"
#include "ctrlab/env/pendulum.hpp"
#include "ctrlab/env/quadrotor.hpp"
#include "ctrlab/env/randomize.hpp"
#include "ctrlab/env/reward.hpp"
#include "ctrlab/env/step.hpp"
#include "oracles.hpp"

using namespace ctrlab;
using ad::Ad;

TEST_CASE("pendulum: stable equilibrium has zero derivative") {
  env::Pendulum p;
  std::vector<double> x = {0.0, 0.0}, u = {0.0}, dx(2);
  p.deriv(x, u, {}, dx);
  CHECK(dx[0] == 0.0);
  CHECK(dx[1] == 0.0);
}

TEST_CASE("quadrotor: hover is a force balance") {
  env::PlanarQuadrotor q;
  const double f = q.params().hover_thrust();
  std::vector<double> x(6, 0.0), u = {f, f}, dx(6);
  q.deriv(x, u, {}, dx);
  for (double v : dx) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("cartpole: matches the mass-matrix oracle") {
  env::Cartpole c;
  const auto& p = c.params();
  SUBCASE("spec point") {
    std::vector<double> x = {0.0, 0.2, 0.0, 0.0}, u = {0.0}, dx(4);
    c.deriv(x, u, {}, dx);
    const auto acc = oracles::cartpole_accel_oracle(
        p.cart_mass, p.pole_mass, p.pole_length, p.gravity, 0.2, 0.0, 0.0);
    CHECK(std::abs(dx[2] - acc[0]) < 1e-10);
    CHECK(std::abs(dx[3] - acc[1]) < 1e-10);
  }
  SUBCASE("random states") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
      const double th = rng.uniform(-M_PI, M_PI);
      const double thd = rng.uniform(-3, 3);
      const double F = rng.uniform(-8, 8);
      std::vector<double> x = {rng.uniform(-1, 1), th, rng.uniform(-2, 2),
                               thd},
                          u = {F}, dx(4);
      c.deriv(x, u, {}, dx);
      const auto acc = oracles::cartpole_accel_oracle(
          p.cart_mass, p.pole_mass, p.pole_length, p.gravity, th, thd, F);
      CHECK(std::abs(dx[2] - acc[0]) < 1e-10);
      CHECK(std::abs(dx[3] - acc[1]) < 1e-10);
    }
  }
}

TEST_CASE("dynamics: dimension mismatch is rejected") {
  env::Pendulum p;
  ad::IntegratorConfig cfg;
  std::vector<double> x = {0.0, 0.0, 0.0}, u = {0.0}, out(3);
  CHECK_THROWS_AS(env::step(p, cfg, x, u, {}, out), std::invalid_argument);
}

TEST_CASE("step: equilibrium state stays put") {
  ad::IntegratorConfig cfg;
  env::Pendulum p;
  std::vector<double> x = {0.0, 0.0}, u = {0.0}, out(2);
  env::step(p, cfg, x, u, {}, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  env::PlanarQuadrotor q;
  const double f = q.params().hover_thrust();
  std::vector<double> xq(6, 0.0), uq = {f, f}, outq(6);
  env::step(q, cfg, xq, uq, {}, outq);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(outq[i]) < 1e-12);
}

TEST_CASE("step: undamped pendulum conserves energy over 10 s") {
  env::PendulumParams pp;
  pp.damping = 0.0;
  env::Pendulum p(pp);
  ad::IntegratorConfig cfg;
  cfg.dt = 0.01;
  std::vector<double> x = {2.0, 0.0}, u = {0.0}, out(2);
  const double e0 = p.energy(x);
  double max_drift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    env::step(p, cfg, x, u, {}, out);
    x = out;
    max_drift = std::max(max_drift, std::abs(p.energy(x) - e0));
  }
  CHECK(max_drift / std::abs(e0) < 1e-4);
}

TEST_CASE("hopper: drop test never penetrates the ground") {
  env::Hopper h;
  ad::IntegratorConfig cfg;
  cfg.dt = h.default_dt();
  cfg.method = ad::Method::semi_implicit_euler;
  const auto& p = h.params();
  std::vector<double> x = {p.rest_body_height() + 1.0, 0.0, 0.0, 0.0},
                      u = {0.0}, out(4);
  double min_clearance = 1e9;
  for (int k = 0; k < 1500; ++k) {
    env::step(h, cfg, x, u, {}, out);
    x = out;
    min_clearance = std::min(
        min_clearance, (x[0] - p.rest_length - x[2]) - p.ground_height);
  }
  CHECK(min_clearance > -1e-6);
}

TEST_CASE("gate_position: trivial cases") {
  env::GateSpec g;
  g.base = {0.3, 1.1};
  g.axis = {0.0, 1.0};
  g.normal = {1.0, 0.0};
  SUBCASE("zero amplitude") {
    g.amplitude = 0.0;
    g.omega = 3.0;
    for (double t : {0.0, 0.7, 2.9}) {
      const auto p = env::gate_position(g, t);
      CHECK(p[0] == 0.3);
      CHECK(p[1] == 1.1);
    }
  }
  SUBCASE("phase zero at t=0") {
    g.amplitude = 0.5;
    g.omega = 2.0;
    const auto p = env::gate_position(g, 0.0);
    CHECK(p[0] == 0.3);
    CHECK(p[1] == 1.1);
  }
  SUBCASE("quarter period") {
    g.amplitude = 0.5;
    g.omega = 2.0;
    const auto p = env::gate_position(g, M_PI / 4.0);
    CHECK(p[1] == doctest::Approx(1.1 + 0.5).epsilon(1e-12));
  }
}

TEST_CASE("sample_randomized: identity range keeps parameters") {
  env::Pendulum p;
  env::RandomizationSpec spec;
  spec.param_ranges["mass"] = {1.0, 1.0};
  auto p2 = env::sample_randomized(p, spec, 42);
  const auto& q = dynamic_cast<const env::Pendulum&>(*p2);
  CHECK(q.params().mass == p.params().mass);
}

TEST_CASE("sample_randomized: Monte Carlo range and mean") {
  env::Pendulum p;
  env::RandomizationSpec spec;
  spec.param_ranges["mass"] = {0.8, 1.2};
  double lo = 1e9, hi = -1e9, mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto p2 = env::sample_randomized(p, spec, static_cast<std::uint64_t>(i));
    const double m = dynamic_cast<const env::Pendulum&>(*p2).params().mass;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    mean += m;
  }
  mean /= n;
  CHECK(lo >= 0.8 * p.params().mass);
  CHECK(hi <= 1.2 * p.params().mass);
  CHECK(std::abs(mean - p.params().mass) / p.params().mass < 0.02);
}

TEST_CASE("sample_randomized: same seed gives identical parameters") {
  env::Cartpole c;
  env::RandomizationSpec spec;
  spec.param_ranges["pole_mass"] = {0.7, 1.3};
  spec.param_ranges["cart_mass"] = {0.9, 1.1};
  auto a = env::sample_randomized(c, spec, 123);
  auto b = env::sample_randomized(c, spec, 123);
  const auto& pa = dynamic_cast<const env::Cartpole&>(*a).params();
  const auto& pb = dynamic_cast<const env::Cartpole&>(*b).params();
  CHECK(pa.pole_mass == pb.pole_mass);
  CHECK(pa.cart_mass == pb.cart_mass);
}

TEST_CASE("randomized samples stay within range, 1e5 sweep") {
  env::PlanarQuadrotor q;
  env::RandomizationSpec spec;
  spec.param_ranges["mass"] = {0.7, 1.3};
  spec.param_ranges["inertia"] = {0.9, 1.15};
  const double m0 = q.params().mass, i0 = q.params().inertia;
  for (int i = 0; i < 100000; ++i) {
    auto e = env::sample_randomized(q, spec, static_cast<std::uint64_t>(i));
    const auto& p = dynamic_cast<const env::PlanarQuadrotor&>(*e).params();
    REQUIRE(p.mass >= 0.7 * m0);
    REQUIRE(p.mass <= 1.3 * m0);
    REQUIRE(p.inertia >= 0.9 * i0);
    REQUIRE(p.inertia <= 1.15 * i0);
  }
}

TEST_CASE("reward: swingup is maximal at upright rest") {
  env::RewardConfig rc;
  std::vector<double> x = {M_PI, 0.0}, u = {0.0};
  CHECK(env::swingup_reward(x, u, 0.02, rc) == 0.0);
  std::vector<double> x2 = {M_PI - 0.3, 0.5};
  CHECK(env::swingup_reward(x2, u, 0.02, rc) < 0.0);
}

TEST_CASE("reward: gate crash penalty is exact") {
  env::GateSpec g;
  g.base = {0.0, 1.0};
  g.half_width = 0.25;
  env::RewardConfig rc;
  rc.progress_weight = 0.0;
  // crossing far outside the half-width
  env::GateStepOutcome out;
  const double r = env::gate_step_reward(g, 0.0, {-0.1, 2.5}, 0.02,
                                         {0.1, 2.5}, rc, &out);
  CHECK(out.crashed);
  CHECK(r == rc.crash_penalty);
}

TEST_CASE("reward: cumulative progress equals distance reduction") {
  env::GateSpec g;
  g.base = {0.0, 1.0};
  env::RewardConfig rc;
  rc.pass_bonus = 0.0;
  rc.crash_penalty = 0.0;
  // straight approach toward the plane, stopping short of it
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const double x_start = -2.0 + rng.uniform(-0.5, 0.5);
    const double z = rng.uniform(0.5, 1.5);
    const int n = 30;
    const double x_end = -0.2;
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      const double xa = x_start + (x_end - x_start) * k / n;
      const double xb = x_start + (x_end - x_start) * (k + 1) / n;
      total += env::gate_step_reward(g, k * 0.02, {xa, z}, (k + 1) * 0.02,
                                     {xb, z}, rc, nullptr);
    }
    const double reduction = std::abs(env::gate_plane_distance(g, {x_start, z})) -
                             std::abs(env::gate_plane_distance(g, {x_end, z}));
    CHECK(total == doctest::Approx(reduction).epsilon(1e-10));
  }
}

TEST_CASE("observe: zero noise returns the state exactly") {
  Rng rng(1);
  std::vector<double> x = {0.4, -1.2, 3.3};
  const auto o = env::observe(x, std::vector<double>{0.0, 0.0, 0.0}, rng);
  CHECK(o == x);
}

TEST_CASE("observe: empirical std within 3 percent") {
  Rng rng(2);
  std::vector<double> x = {0.0};
  const std::vector<double> std_dev = {0.1};
  double acc = 0.0, acc2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto o = env::observe(x, std_dev, rng);
    acc += o[0];
    acc2 += o[0] * o[0];
  }
  const double emp_std = std::sqrt(acc2 / n - (acc / n) * (acc / n));
  CHECK(std::abs(emp_std - 0.1) / 0.1 < 0.03);
}

TEST_CASE("observe: same seed gives the same observation") {
  std::vector<double> x = {1.0, 2.0};
  const std::vector<double> std_dev = {0.3, 0.2};
  Rng a(77), b(77);
  CHECK(env::observe(x, std_dev, a) == env::observe(x, std_dev, b));
}

TEST_CASE("property: dynamics on tape equal plain evaluation bitwise") {
  Rng rng(13);
  env::Pendulum pend;
  env::Cartpole cart;
  env::PlanarQuadrotor quad;
  env::Hopper hop;
  const std::vector<const env::Env*> envs = {&pend, &cart, &quad, &hop};
  for (const env::Env* e : envs) {
    for (int t = 0; t < 25; ++t) {
      std::vector<double> x(static_cast<std::size_t>(e->state_dim()));
      std::vector<double> u(static_cast<std::size_t>(e->control_dim()));
      for (auto& v : x) v = rng.uniform(-1.0, 1.5);
      for (auto& v : u) v = rng.uniform(-2.0, 2.0);
      std::vector<double> dx(x.size());
      e->deriv(x, u, {}, dx);

      ad::Tape tape;
      std::vector<Ad> ax, au, adx(x.size());
      for (double v : x) ax.push_back(ad::make_input(tape, v));
      for (double v : u) au.push_back(ad::make_input(tape, v));
      e->deriv(std::span<const Ad>(ax), std::span<const Ad>(au), {},
               std::span<Ad>(adx));
      for (std::size_t i = 0; i < dx.size(); ++i)
        CHECK(adx[i].v == dx[i]);  // identical operation order: bitwise
    }
  }
}

TEST_CASE("property: crossing detector agrees with a dense-time oracle") {
  Rng rng(31);
  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    env::GateSpec g;
    g.base = {0.0, rng.uniform(0.5, 1.5)};
    g.amplitude = rng.uniform(0.0, 0.6);
    g.omega = rng.uniform(0.0, 6.0);
    g.phase = rng.uniform(0.0, 2 * M_PI);
    g.half_width = rng.uniform(0.1, 0.4);

    // random piecewise-linear trajectory drifting rightward
    const int n = 40;
    const double dt = 0.02;
    std::vector<env::Vec2> traj;
    double x = rng.uniform(-1.5, -0.5), z = rng.uniform(0.3, 1.8);
    for (int k = 0; k <= n; ++k) {
      traj.push_back({x, z});
      x += rng.uniform(-0.02, 0.09);
      z += rng.uniform(-0.06, 0.06);
    }

    // event detector: first crossing decides
    bool det_pass = false;
    bool det_crossed = false;
    for (int k = 0; k < n && !det_crossed; ++k) {
      if (auto ev = env::detect_crossing(g, k * dt, traj[static_cast<std::size_t>(k)],
                                         (k + 1) * dt,
                                         traj[static_cast<std::size_t>(k + 1)])) {
        det_crossed = true;
        det_pass = ev->pass;
      }
    }
    const bool oracle_pass = oracles::dense_gate_pass(g, traj, dt);
    CHECK(det_pass == oracle_pass);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("randomization spec validation") {
  env::RandomizationSpec s;
  s.param_ranges["mass"] = {1.2, 1.4};  // lo must be <= 1
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("hopper tape path is rejected (discontinuous)") {
  env::Hopper h;
  ad::IntegratorConfig cfg;
  cfg.dt = h.default_dt();
  ad::Tape tape;
  std::vector<Ad> x = {ad::make_input(tape, 0.5), ad::make_input(tape, 0.0),
                       ad::make_input(tape, 0.0), ad::make_input(tape, 0.0)};
  std::vector<Ad> u = {ad::make_input(tape, 0.0)};
  std::vector<Ad> out(4);
  CHECK_THROWS_AS(env::step(h, cfg, std::span<const Ad>(x),
                            std::span<const Ad>(u), {}, std::span<Ad>(out)),
                  std::invalid_argument);
}
