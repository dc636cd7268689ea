#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctrlab/ad/integrate.hpp"
#include "ctrlab/ad/record.hpp"
#include "ctrlab/ad/tape.hpp"
#include "ctrlab/env/pendulum.hpp"
#include "ctrlab/env/step.hpp"
#include "ctrlab/util/rng.hpp"
#include "oracles.hpp"

using namespace ctrlab;
using ad::Ad;

namespace {

// generic scalar test functions (same code path on double and Ad)
template <class S>
S f_mixed(std::span<const S> x) {
  using ad::exp;
  using ad::tanh;
  using std::exp;
  using std::tanh;
  return tanh(2.0 * x[0]) * exp(-x[0]);
}

template <class S>
void pendulum_dyn(const env::Pendulum& p, std::span<const S> x,
                  std::span<const S> u, std::span<S> dx) {
  p.dyn<S>(x, u, {}, dx);
}

// rollout cost used by the rollout-gradient checks: quadratic state/control
// running cost under a fixed control sequence, gradient w.r.t. x0
template <class S>
S rollout_cost_x0(const env::Pendulum& p, std::span<const S> x0,
                  const std::vector<double>& controls, double dt) {
  std::vector<S> x(x0.begin(), x0.end());
  std::vector<S> xn(2);
  S cost(0.0);
  for (double uk : controls) {
    const S u[1] = {S(uk)};
    auto dyn = [&](std::span<const S> xs, std::span<const S> us,
                   std::span<S> dxs) { p.dyn<S>(xs, us, {}, dxs); };
    ad::rk4_step<S>(dyn, x, std::span<const S>(u, 1), dt, xn);
    cost += dt * (x[0] * x[0] + 0.1 * x[1] * x[1] + 0.01 * uk * uk);
    x = xn;
  }
  cost += x[0] * x[0] + x[1] * x[1];
  return cost;
}

}  // namespace

TEST_CASE("record: identity keeps the value and one input node") {
  auto r = ad::record([](std::span<const Ad> x) { return x[0]; },
                      std::vector<double>{3.5});
  CHECK(r.value == 3.5);
  CHECK(r.tape.inputs().size() == 1);
}

TEST_CASE("record: sin(x)+x^2 at 0 is 0") {
  auto r = ad::record(
      [](std::span<const Ad> x) { return ad::sin(x[0]) + x[0] * x[0]; },
      std::vector<double>{0.0});
  CHECK(r.value == 0.0);
}

TEST_CASE("record: taped value is bitwise equal to untaped evaluation") {
  const std::vector<double> xs = {0.7, -1.3, 0.01, 2.9};
  for (double xv : xs) {
    const double direct = f_mixed<double>(std::vector<double>{xv});
    auto r = ad::record([](std::span<const Ad> x) { return f_mixed<Ad>(x); },
                        std::vector<double>{xv});
    CHECK(r.value == direct);  // same operation order: bitwise
  }
}

TEST_CASE("record: domain errors") {
  CHECK_THROWS_AS(
      ad::record([](std::span<const Ad> x) { return ad::log(x[0]); },
                 std::vector<double>{-1.0}),
      ad::DomainError);
  CHECK_THROWS_AS(
      ad::record([](std::span<const Ad> x) { return ad::sqrt(x[0]); },
                 std::vector<double>{-2.0}),
      ad::DomainError);
  CHECK_THROWS_AS(
      ad::record([](std::span<const Ad> x) { return x[0] / (x[0] - x[0]); },
                 std::vector<double>{1.0}),
      ad::DomainError);
}

TEST_CASE("backward: constant function has zero gradient") {
  auto g = ad::gradient([](std::span<const Ad>) { return Ad(4.2); },
                        std::vector<double>{1.0, 2.0});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("backward: product rule at (2,3)") {
  auto g = ad::gradient([](std::span<const Ad> x) { return x[0] * x[1]; },
                        std::vector<double>{2.0, 3.0});
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 2.0);
}

TEST_CASE("backward: tanh(x^2) matches central differences") {
  const std::vector<double> x0 = {0.9};
  auto f = [](auto x) {
    using ad::tanh;
    using std::tanh;
    return tanh(x[0] * x[0]);
  };
  auto g = ad::gradient([&](std::span<const Ad> x) { return f(x); },
                        std::span<const double>(x0));
  const double fd =
      (std::tanh((0.9 + 1e-5) * (0.9 + 1e-5)) -
       std::tanh((0.9 - 1e-5) * (0.9 - 1e-5))) /
      2e-5;
  CHECK(std::abs(g[0] - fd) / std::max(1.0, std::abs(fd)) < 1e-6);
}

TEST_CASE("backward: non-finite adjoint reports a node index") {
  // values stay finite while the adjoint overflows through the chain
  auto build = [](std::span<const Ad> x) {
    Ad y = x[0];
    for (int i = 0; i < 60; ++i) y = ad::sin(y) * 1e10;
    return y;
  };
  auto r = ad::record(build, std::vector<double>{0.3});
  CHECK_THROWS_AS(r.tape.gradient(r.output), ad::NonFiniteError);
  try {
    r.tape.gradient(r.output);
  } catch (const ad::NonFiniteError& e) {
    CHECK(e.node >= 0);
  }
}

TEST_CASE("jacobian: identity map") {
  auto J = ad::jacobian(
      [](std::span<const Ad> x) {
        return std::vector<Ad>(x.begin(), x.end());
      },
      std::vector<double>{1.0, -2.0, 0.5});
  CHECK(J.isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST_CASE("jacobian: linear map returns A exactly") {
  Rng rng(7);
  Eigen::MatrixXd A(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A(i, j) = rng.normal();
  std::vector<double> x = {0.3, -1.2, 2.0, 0.7};
  auto J = ad::jacobian(
      [&](std::span<const Ad> in) {
        std::vector<Ad> out(4, Ad(0.0));
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) out[i] += A(i, j) * in[j];
        return out;
      },
      std::span<const double>(x));
  CHECK((J - A).cwiseAbs().maxCoeff() == 0.0);  // partials are the entries
}

TEST_CASE("jacobian: pendulum dynamics matches central differences") {
  env::Pendulum pend;
  const std::vector<double> z = {0.3, -1.0, 0.5};  // (theta, omega, u)
  auto J = ad::jacobian(
      [&](std::span<const Ad> in) {
        std::vector<Ad> dx(2);
        const Ad x[2] = {in[0], in[1]};
        const Ad u[1] = {in[2]};
        pend.dyn<Ad>(std::span<const Ad>(x, 2), std::span<const Ad>(u, 1), {},
                     dx);
        return dx;
      },
      std::span<const double>(z));
  auto Jfd = oracles::fd_jacobian(
      [&](const Eigen::VectorXd& v) {
        std::vector<double> dx(2);
        const double x[2] = {v[0], v[1]};
        const double u[1] = {v[2]};
        pend.dyn<double>(std::span<const double>(x, 2),
                         std::span<const double>(u, 1), {}, dx);
        return Eigen::Vector2d(dx[0], dx[1]);
      },
      Eigen::Vector3d(z[0], z[1], z[2]));
  CHECK(((J - Jfd).cwiseAbs().array() /
         Jfd.cwiseAbs().array().max(1.0))
            .maxCoeff() < 1e-6);
}

TEST_CASE("rk4: pendulum equilibria are fixed points") {
  env::Pendulum pend;
  for (double theta0 : {0.0, M_PI}) {
    std::vector<double> x = {theta0, 0.0}, u = {0.0}, out(2);
    auto dyn = [&](std::span<const double> xs, std::span<const double> us,
                   std::span<double> dxs) { pend.dyn<double>(xs, us, {}, dxs); };
    ad::rk4_step<double>(dyn, x, u, 0.01, out);
    CHECK(out[0] == doctest::Approx(theta0).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("rk4: one step matches a fine explicit-Euler oracle") {
  env::Pendulum pend;
  const double dt = 0.01;
  std::vector<double> x = {0.1, 0.0}, u = {0.0}, out(2);
  auto dyn = [&](std::span<const double> xs, std::span<const double> us,
                 std::span<double> dxs) { pend.dyn<double>(xs, us, {}, dxs); };
  ad::rk4_step<double>(dyn, x, u, dt, out);

  auto euler = [&](int n) {
    double th = 0.1, om = 0.0;
    std::vector<double> xs(2), dx(2);
    for (int i = 0; i < n; ++i) {
      xs = {th, om};
      pend.dyn<double>(xs, u, {}, dx);
      th += dt / n * dx[0];
      om += dt / n * dx[1];
    }
    return std::array<double, 2>{th, om};
  };

  // dt/1000 Euler carries ~1e-7 of its own first-order error; check at that
  // level, then tighten the oracle until its error is below the 1e-8 target
  const auto coarse = euler(1000);
  CHECK(std::abs(out[0] - coarse[0]) < 2e-7);
  CHECK(std::abs(out[1] - coarse[1]) < 2e-7);
  const auto fine = euler(1000000);
  CHECK(std::abs(out[0] - fine[0]) < 1e-8);
  CHECK(std::abs(out[1] - fine[1]) < 1e-8);
}

TEST_CASE("rk4: halving dt shrinks fixed-interval error by about 2^4") {
  env::Pendulum pend({1.0, 0.5, 9.81, 0.0, 2.5});
  auto dyn = [&](std::span<const double> xs, std::span<const double> us,
                 std::span<double> dxs) { pend.dyn<double>(xs, us, {}, dxs); };
  const std::vector<double> x = {0.8, 0.3}, u = {0.0};
  const double T = 0.4;

  auto integrate = [&](int n) {
    std::vector<double> xr = x, xn(2);
    for (int i = 0; i < n; ++i) {
      ad::rk4_step<double>(dyn, xr, u, T / n, xn);
      xr = xn;
    }
    return xr;
  };
  const auto ref = integrate(4096);
  auto err = [&](int n) {
    const auto xe = integrate(n);
    return std::hypot(xe[0] - ref[0], xe[1] - ref[1]);
  };
  const double ratio = err(10) / err(20);  // dt -> dt/2 over the same window
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("gradcheck: ||x||^2 has gradient 2x") {
  Rng rng(3);
  std::vector<double> x(5);
  for (auto& v : x) v = rng.uniform(-2.0, 2.0);
  const double err = ad::gradcheck(
      [](auto in) {
        std::remove_cvref_t<decltype(in[0])> acc(0.0);
        for (const auto& v : in) acc += v * v;
        return acc;
      },
      std::span<const double>(x), 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("gradcheck: constant function reports zero error") {
  std::vector<double> x = {1.0, 2.0};
  const double err = ad::gradcheck(
      [](auto in) { return std::remove_cvref_t<decltype(in[0])>(3.0); },
      std::span<const double>(x), 1e-5);
  CHECK(err == 0.0);
}

TEST_CASE("gradcheck: 20-step pendulum rollout cost wrt initial state") {
  env::Pendulum pend;
  Rng rng(11);
  std::vector<double> controls(20);
  for (auto& u : controls) u = rng.uniform(-1.5, 1.5);
  std::vector<double> x0 = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  const double err = ad::gradcheck(
      [&](auto in) {
        using S = std::remove_cvref_t<decltype(in[0])>;
        return rollout_cost_x0<S>(pend, in, controls, 0.02);
      },
      std::span<const double>(x0), 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("property: backward is linear in the recorded function") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const double alpha = rng.uniform(-2.0, 2.0);
    const double beta = rng.uniform(-2.0, 2.0);
    const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 1.5);
    std::vector<double> x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

    auto f = [a](std::span<const Ad> v) {
      return ad::sin(a * v[0]) * ad::cos(v[1]);
    };
    auto g = [b](std::span<const Ad> v) {
      return ad::exp(b * v[1]) + v[0] * v[0];
    };
    auto combo = [&](std::span<const Ad> v) {
      return alpha * f(v) + beta * g(v);
    };
    const auto gf = ad::gradient(f, std::span<const double>(x));
    const auto gg = ad::gradient(g, std::span<const double>(x));
    const auto gc = ad::gradient(combo, std::span<const double>(x));
    for (int i = 0; i < 2; ++i) {
      const double want = alpha * gf[static_cast<std::size_t>(i)] +
                          beta * gg[static_cast<std::size_t>(i)];
      CHECK(std::abs(gc[static_cast<std::size_t>(i)] - want) <=
            1e-10 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("property: rollout gradients match central differences, 100 seeds") {
  env::Pendulum pend;
  int failures = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(Rng::stream(99, static_cast<std::uint64_t>(seed)));
    const int n = rng.uniform_int(5, 50);
    std::vector<double> controls(static_cast<std::size_t>(n));
    for (auto& u : controls) u = rng.uniform(-1.0, 1.0);
    std::vector<double> x0 = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const double err = ad::gradcheck(
        [&](auto in) {
          using S = std::remove_cvref_t<decltype(in[0])>;
          return rollout_cost_x0<S>(pend, in, controls, 0.02);
        },
        std::span<const double>(x0), 1e-5);
    if (err >= 1e-5) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("min/max: left argument wins ties") {
  auto g = ad::gradient(
      [](std::span<const Ad> x) { return ad::max(x[0], x[1]); },
      std::vector<double>{1.0, 1.0});
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  auto g2 = ad::gradient(
      [](std::span<const Ad> x) { return ad::min(x[0], x[1]); },
      std::vector<double>{1.0, 1.0});
  CHECK(g2[0] == 1.0);
  CHECK(g2[1] == 0.0);
}

TEST_CASE("replace_value: forward value swapped, gradient passes through") {
  ad::Tape tape;
  Ad x = ad::make_input(tape, 2.0);
  Ad soft = x * x;                       // value 4, d/dx = 4
  Ad swapped = ad::replace_value(soft, 7.0);
  Ad out = 3.0 * swapped;
  CHECK(out.v == 21.0);
  const auto g = tape.gradient(out.idx);
  CHECK(g[0] == doctest::Approx(12.0));  // 3 * d(soft)/dx
}

TEST_CASE("integrator config validates dt") {
  ad::IntegratorConfig c;
  c.dt = 0.2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.dt = 0.05;
  CHECK_NOTHROW(c.validate());
}
