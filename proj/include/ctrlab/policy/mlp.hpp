#pragma once

#include <Eigen/Core>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctrlab/ad/tape.hpp"
#include "ctrlab/util/rng.hpp"

namespace ctrlab::policy {

using ad::Ad;
using Eigen::VectorXd;

// Fully connected tanh network with flattened parameters (per layer: weights
// row-major, then biases). Output is either raw (linear) or squashed through
// tanh and scaled to actuation limits.
struct MlpSpec {
  std::vector<int> sizes;  // input, hidden..., output
  enum class Output { linear, tanh_scaled };
  Output output = Output::tanh_scaled;
  std::vector<double> out_scale;  // per output, used by tanh_scaled
  std::vector<double> out_shift;  // optional additive offset (e.g. hover)

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }

  int param_count() const {
    int n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += sizes[l + 1] * sizes[l] + sizes[l + 1];
    return n;
  }

  void validate(int n_params) const {
    if (sizes.size() < 2) throw std::invalid_argument("mlp: need >= 2 layers");
    if (n_params != param_count())
      throw std::invalid_argument("mlp: flattened length mismatch");
    if (output == Output::tanh_scaled &&
        static_cast<int>(out_scale.size()) != output_dim())
      throw std::invalid_argument("mlp: out_scale size mismatch");
  }
};

// SP: parameter scalar type, SO: observation scalar type
template <class SP, class SO>
void mlp_forward(const MlpSpec& spec, std::span<const SP> params,
                 std::span<const SO> obs,
                 std::span<ad::promote_t<SP, SO>> out) {
  using R = ad::promote_t<SP, SO>;
  using ad::tanh;
  using std::tanh;
  assert(static_cast<int>(obs.size()) == spec.input_dim());
  assert(static_cast<int>(out.size()) == spec.output_dim());
  assert(static_cast<int>(params.size()) == spec.param_count());

  std::vector<R> act(obs.begin(), obs.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
    const int nin = spec.sizes[l];
    const int nout = spec.sizes[l + 1];
    std::vector<R> next(static_cast<std::size_t>(nout));
    for (int j = 0; j < nout; ++j) {
      R acc = params[off + static_cast<std::size_t>(nout * nin + j)];  // bias
      for (int i = 0; i < nin; ++i)
        acc += params[off + static_cast<std::size_t>(j * nin + i)] *
               act[static_cast<std::size_t>(i)];
      const bool last = (l + 2 == spec.sizes.size());
      if (!last) {
        next[static_cast<std::size_t>(j)] = tanh(acc);
      } else {
        R o = (spec.output == MlpSpec::Output::tanh_scaled)
                  ? R(spec.out_scale[static_cast<std::size_t>(j)] * tanh(acc))
                  : acc;
        if (!spec.out_shift.empty())
          o += spec.out_shift[static_cast<std::size_t>(j)];
        next[static_cast<std::size_t>(j)] = o;
      }
    }
    act = std::move(next);
    off += static_cast<std::size_t>(nout * nin + nout);
  }
  for (std::size_t j = 0; j < act.size(); ++j) out[j] = act[j];
}

inline VectorXd mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  Rng rng(Rng::stream(seed, 0x6d6c70));
  VectorXd w(spec.param_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
    const int nin = spec.sizes[l];
    const int nout = spec.sizes[l + 1];
    const double s = 1.0 / std::sqrt(static_cast<double>(nin));
    for (int i = 0; i < nout * nin; ++i) w[off++] = rng.uniform(-s, s);
    for (int i = 0; i < nout; ++i) w[off++] = 0.0;
  }
  return w;
}

// standard Adam, minimization convention
class Adam {
 public:
  Adam(int dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps),
        m_(VectorXd::Zero(dim)), v_(VectorXd::Zero(dim)) {}

  void step(VectorXd& theta, const VectorXd& grad) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    theta -= (lr_ / c1) * m_.cwiseQuotient(
                              ((v_ / c2).cwiseSqrt().array() + eps_).matrix());
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  VectorXd m_, v_;
};

inline VectorXd clip_norm(VectorXd g, double max_norm) {
  const double n = g.norm();
  if (n > max_norm && n > 0.0) g *= max_norm / n;
  return g;
}

}  // namespace ctrlab::policy
