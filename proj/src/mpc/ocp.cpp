#include "ctrlab/mpc/ocp.hpp"

namespace ctrlab::mpc {

namespace {

thread_local ad::Tape scratch_tape;

// gradient of a scalar z -> f(z) split as (x, u) on the scratch tape
template <class F>
VectorXd tape_gradient(F&& f, std::span<const double> x,
                       std::span<const double> u) {
  scratch_tape.reset();
  std::vector<Ad> ax, au;
  ax.reserve(x.size());
  au.reserve(u.size());
  for (double v : x) ax.push_back(ad::make_input(scratch_tape, v));
  for (double v : u) au.push_back(ad::make_input(scratch_tape, v));
  Ad out = f(std::span<const Ad>(ax), std::span<const Ad>(au));
  VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(x.size() + u.size()));
  if (out.is_const()) return g;
  std::vector<double> grad = scratch_tape.gradient(out.idx);
  for (std::size_t i = 0; i < grad.size(); ++i)
    g[static_cast<Eigen::Index>(i)] = grad[i];
  return g;
}

}  // namespace

void StageCost::expand(std::span<const double> x, std::span<const double> u,
                       int k, StageExpansion& e) const {
  const int nx = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  e.resize(nx, nu);

  auto grad_at = [&](const std::vector<double>& z) {
    return tape_gradient(
        [&](std::span<const Ad> ax, std::span<const Ad> au) {
          return value(ax, au, k);
        },
        std::span<const double>(z.data(), static_cast<std::size_t>(nx)),
        std::span<const double>(z.data() + nx, static_cast<std::size_t>(nu)));
  };

  std::vector<double> z(static_cast<std::size_t>(nx + nu));
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(u.begin(), u.end(), z.begin() + nx);

  const VectorXd g = grad_at(z);
  e.lx = g.head(nx);
  e.lu = g.tail(nu);

  // Hessian by central differences of the tape gradient
  const double h = 1e-5;
  MatrixXd H(nx + nu, nx + nu);
  for (int j = 0; j < nx + nu; ++j) {
    const double zj = z[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(j)] = zj + h;
    const VectorXd gp = grad_at(z);
    z[static_cast<std::size_t>(j)] = zj - h;
    const VectorXd gm = grad_at(z);
    z[static_cast<std::size_t>(j)] = zj;
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  e.lxx = H.topLeftCorner(nx, nx);
  e.luu = H.bottomRightCorner(nu, nu);
  e.lux = H.bottomLeftCorner(nu, nx);
}

void TerminalCost::expand(std::span<const double> x, VectorXd& lx,
                          MatrixXd& lxx) const {
  const int nx = static_cast<int>(x.size());
  auto grad_at = [&](const std::vector<double>& z) {
    return tape_gradient(
        [&](std::span<const Ad> ax, std::span<const Ad>) {
          return value(ax);
        },
        std::span<const double>(z.data(), static_cast<std::size_t>(nx)),
        std::span<const double>());
  };
  std::vector<double> z(x.begin(), x.end());
  lx = grad_at(z);

  const double h = 1e-5;
  lxx.resize(nx, nx);
  for (int j = 0; j < nx; ++j) {
    const double zj = z[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(j)] = zj + h;
    const VectorXd gp = grad_at(z);
    z[static_cast<std::size_t>(j)] = zj - h;
    const VectorXd gm = grad_at(z);
    z[static_cast<std::size_t>(j)] = zj;
    lxx.col(j) = (gp - gm) / (2.0 * h);
  }
  lxx = 0.5 * (lxx + lxx.transpose()).eval();
}

void Constraint::jacobian(std::span<const double> x, std::span<const double> u,
                          int k, MatrixXd& J) const {
  const int nx = static_cast<int>(x.size());
  const int nu = static_cast<int>(u.size());
  scratch_tape.reset();
  std::vector<Ad> ax, au;
  for (double v : x) ax.push_back(ad::make_input(scratch_tape, v));
  for (double v : u) au.push_back(ad::make_input(scratch_tape, v));
  std::vector<Ad> out(static_cast<std::size_t>(dim()));
  eval(std::span<const Ad>(ax), std::span<const Ad>(au), k,
       std::span<Ad>(out));
  J.setZero(dim(), nx + nu);
  std::vector<double> adj;
  for (int i = 0; i < dim(); ++i) {
    const Ad& o = out[static_cast<std::size_t>(i)];
    if (o.is_const()) continue;
    scratch_tape.backward(o.idx, adj);
    for (int j = 0; j < nx; ++j)
      J(i, j) = adj[static_cast<std::size_t>(ax[static_cast<std::size_t>(j)].idx)];
    for (int j = 0; j < nu; ++j)
      J(i, nx + j) =
          adj[static_cast<std::size_t>(au[static_cast<std::size_t>(j)].idx)];
  }
}

void DiscreteDynamics::linearize(std::span<const double> x,
                                 std::span<const double> u, MatrixXd& A,
                                 MatrixXd& B) const {
  scratch_tape.reset();
  std::vector<Ad> ax, au;
  for (double v : x) ax.push_back(ad::make_input(scratch_tape, v));
  for (double v : u) au.push_back(ad::make_input(scratch_tape, v));
  std::vector<Ad> out(static_cast<std::size_t>(nx()));
  step(std::span<const Ad>(ax), std::span<const Ad>(au), std::span<Ad>(out));
  A.setZero(nx(), nx());
  B.setZero(nx(), nu());
  std::vector<double> adj;
  for (int i = 0; i < nx(); ++i) {
    const Ad& o = out[static_cast<std::size_t>(i)];
    if (o.is_const()) continue;
    scratch_tape.backward(o.idx, adj);
    for (int j = 0; j < nx(); ++j)
      A(i, j) = adj[static_cast<std::size_t>(ax[static_cast<std::size_t>(j)].idx)];
    for (int j = 0; j < nu(); ++j)
      B(i, j) = adj[static_cast<std::size_t>(au[static_cast<std::size_t>(j)].idx)];
  }
}

}  // namespace ctrlab::mpc
