#pragma once

#include <Eigen/Core>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "ctrlab/ad/tape.hpp"

namespace ctrlab::ad {

struct RecordResult {
  double value = 0.0;
  int output = -1;
  Tape tape;
};

// Evaluate f on a fresh tape. f: span<const Ad> -> Ad.
template <class F>
RecordResult record(F&& f, std::span<const double> x) {
  RecordResult r;
  std::vector<Ad> in;
  in.reserve(x.size());
  for (double xi : x) in.push_back(make_input(r.tape, xi));
  Ad out = f(std::span<const Ad>(in));
  if (out.is_const()) {
    // output never touched the inputs; register a node so backward works
    out = make_input(r.tape, out.v) * 1.0;
  }
  r.value = out.v;
  r.output = out.idx;
  return r;
}

template <class F>
std::vector<double> gradient(F&& f, std::span<const double> x) {
  RecordResult r = record(std::forward<F>(f), x);
  return r.tape.gradient(r.output);
}

// Jacobian of a vector function f: span<const Ad> -> vector<Ad>, row i is the
// reverse-mode gradient of output i.
template <class F>
Eigen::MatrixXd jacobian(F&& f, std::span<const double> x) {
  Tape tape;
  std::vector<Ad> in;
  in.reserve(x.size());
  for (double xi : x) in.push_back(make_input(tape, xi));
  std::vector<Ad> out = f(std::span<const Ad>(in));
  Eigen::MatrixXd J(out.size(), x.size());
  std::vector<double> adj;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].is_const()) {
      J.row(static_cast<Eigen::Index>(i)).setZero();
      continue;
    }
    tape.backward(out[i].idx, adj);
    for (std::size_t j = 0; j < x.size(); ++j)
      J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          adj[static_cast<std::size_t>(in[j].idx)];
  }
  return J;
}

// Max over coordinates of |ad - fd| / max(1, |fd|), central differences.
// f must be callable on both scalar types: S f(span<const S>).
template <class F>
double gradcheck(F&& f, std::span<const double> x, double fd_step) {
  assert(fd_step >= 1e-8 && fd_step <= 1e-3);
  std::vector<double> g = gradient(
      [&](std::span<const Ad> in) { return f(in); }, x);
  std::vector<double> xp(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = xp[i];
    xp[i] = xi + fd_step;
    const double fp = f(std::span<const double>(xp));
    xp[i] = xi - fd_step;
    const double fm = f(std::span<const double>(xp));
    xp[i] = xi;
    const double fd = (fp - fm) / (2.0 * fd_step);
    const double err = std::abs(g[i] - fd) / std::max(1.0, std::abs(fd));
    if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ctrlab::ad
