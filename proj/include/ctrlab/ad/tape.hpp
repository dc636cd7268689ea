#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrlab::ad {

enum class Op : std::uint8_t {
  input,
  add,
  sub,
  mul,
  div,
  neg,
  sin,
  cos,
  tanh,
  exp,
  log,
  sqrt,
  pow,
  min,
  max,
  value_swap,
};

const char* op_name(Op op);

struct AdError : std::runtime_error {
  AdError(const std::string& msg, int node_index)
      : std::runtime_error(msg), node(node_index) {}
  int node;
};

// log/sqrt of a negative argument, division by zero, pow outside its domain
struct DomainError : AdError {
  using AdError::AdError;
};

// a non-finite value, local partial, or adjoint showed up
struct NonFiniteError : AdError {
  using AdError::AdError;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so operand
// indices always precede their consumers. One tape per thread of execution.
class Tape {
 public:
  struct Node {
    std::int32_t a = -1, b = -1;
    double da = 0.0, db = 0.0;
    Op op = Op::input;
  };

  int input(double v) {
    const int i = push_raw(v, -1, 0.0, -1, 0.0, Op::input);
    inputs_.push_back(i);
    return i;
  }

  int push(double v, int a, double da, Op op) {
    return push_raw(v, a, da, -1, 0.0, op);
  }

  int push(double v, int a, double da, int b, double db, Op op) {
    return push_raw(v, a, da, b, db, op);
  }

  double value(int i) const { return val_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<int>& inputs() const { return inputs_; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  // Reverse accumulation from `out`; adjoint gets one entry per node.
  void backward(int out, std::vector<double>& adjoint) const {
    assert(out >= 0 && out < size());
    adjoint.assign(nodes_.size(), 0.0);
    adjoint[static_cast<std::size_t>(out)] = 1.0;
    for (int i = out; i >= 0; --i) {
      const double w = adjoint[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      if (!std::isfinite(w))
        throw NonFiniteError("non-finite adjoint at node " + std::to_string(i) +
                                 " (" + op_name(nodes_[i].op) + ")",
                             i);
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.a >= 0) adjoint[static_cast<std::size_t>(n.a)] += n.da * w;
      if (n.b >= 0) adjoint[static_cast<std::size_t>(n.b)] += n.db * w;
    }
  }

  // gradient w.r.t. the registered inputs, in registration order
  std::vector<double> gradient(int out) const {
    std::vector<double> adj;
    backward(out, adj);
    std::vector<double> g(inputs_.size());
    for (std::size_t k = 0; k < inputs_.size(); ++k) {
      g[k] = adj[static_cast<std::size_t>(inputs_[k])];
      if (!std::isfinite(g[k]))
        throw NonFiniteError(
            "non-finite gradient for input " + std::to_string(k), inputs_[k]);
    }
    return g;
  }

  // keep capacity, drop contents
  void reset() {
    nodes_.clear();
    val_.clear();
    inputs_.clear();
  }

 private:
  int push_raw(double v, int a, double da, int b, double db, Op op) {
    const int i = static_cast<int>(nodes_.size());
    if (!std::isfinite(v) || !std::isfinite(da) || !std::isfinite(db))
      throw NonFiniteError("non-finite value or partial at node " +
                               std::to_string(i) + " (" + op_name(op) + ")",
                           i);
    nodes_.push_back(Node{a, b, da, db, op});
    val_.push_back(v);
    return i;
  }

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<int> inputs_;
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::pow: return "pow";
    case Op::min: return "min";
    case Op::max: return "max";
    case Op::value_swap: return "value_swap";
  }
  return "?";
}

// Scalar bound to a tape node. tape == nullptr marks a constant that does
// not live on any tape; arithmetic folds constants without recording.
struct Ad {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
  double v = 0.0;

  Ad() = default;
  Ad(double value) : v(value) {}  // NOLINT: implicit constant lift
  Ad(Tape* t, int i, double value) : tape(t), idx(i), v(value) {}

  bool is_const() const { return tape == nullptr; }
  double value() const { return v; }
};

inline Ad make_input(Tape& t, double v) { return Ad(&t, t.input(v), v); }

inline Tape* common_tape(const Ad& a, const Ad& b) {
  if (a.tape && b.tape) {
    assert(a.tape == b.tape && "operands recorded on different tapes");
    return a.tape;
  }
  return a.tape ? a.tape : b.tape;
}

namespace detail {

inline Ad binary(const Ad& a, const Ad& b, double v, double da, double db,
                 Op op) {
  Tape* t = common_tape(a, b);
  if (!t) return Ad(v);
  if (a.is_const()) return Ad(t, t->push(v, b.idx, db, op), v);
  if (b.is_const()) return Ad(t, t->push(v, a.idx, da, op), v);
  return Ad(t, t->push(v, a.idx, da, b.idx, db, op), v);
}

inline Ad unary(const Ad& a, double v, double da, Op op) {
  if (a.is_const()) return Ad(v);
  return Ad(a.tape, a.tape->push(v, a.idx, da, op), v);
}

}  // namespace detail

inline Ad operator+(const Ad& a, const Ad& b) {
  return detail::binary(a, b, a.v + b.v, 1.0, 1.0, Op::add);
}
inline Ad operator-(const Ad& a, const Ad& b) {
  return detail::binary(a, b, a.v - b.v, 1.0, -1.0, Op::sub);
}
inline Ad operator*(const Ad& a, const Ad& b) {
  return detail::binary(a, b, a.v * b.v, b.v, a.v, Op::mul);
}
inline Ad operator/(const Ad& a, const Ad& b) {
  if (b.v == 0.0)
    throw DomainError("division by zero", b.idx);
  const double inv = 1.0 / b.v;
  return detail::binary(a, b, a.v * inv, inv, -a.v * inv * inv, Op::div);
}
inline Ad operator-(const Ad& a) {
  return detail::unary(a, -a.v, -1.0, Op::neg);
}

inline Ad operator+(const Ad& a, double b) { return a + Ad(b); }
inline Ad operator+(double a, const Ad& b) { return Ad(a) + b; }
inline Ad operator-(const Ad& a, double b) { return a - Ad(b); }
inline Ad operator-(double a, const Ad& b) { return Ad(a) - b; }
inline Ad operator*(const Ad& a, double b) { return a * Ad(b); }
inline Ad operator*(double a, const Ad& b) { return Ad(a) * b; }
inline Ad operator/(const Ad& a, double b) { return a / Ad(b); }
inline Ad operator/(double a, const Ad& b) { return Ad(a) / b; }

inline Ad& operator+=(Ad& a, const Ad& b) { return a = a + b; }
inline Ad& operator-=(Ad& a, const Ad& b) { return a = a - b; }
inline Ad& operator*=(Ad& a, const Ad& b) { return a = a * b; }
inline Ad& operator/=(Ad& a, const Ad& b) { return a = a / b; }

inline Ad sin(const Ad& a) {
  return detail::unary(a, std::sin(a.v), std::cos(a.v), Op::sin);
}
inline Ad cos(const Ad& a) {
  return detail::unary(a, std::cos(a.v), -std::sin(a.v), Op::cos);
}
inline Ad tanh(const Ad& a) {
  const double t = std::tanh(a.v);
  return detail::unary(a, t, 1.0 - t * t, Op::tanh);
}
inline Ad exp(const Ad& a) {
  const double e = std::exp(a.v);
  return detail::unary(a, e, e, Op::exp);
}
inline Ad log(const Ad& a) {
  if (!(a.v > 0.0))
    throw DomainError("log of non-positive argument", a.idx);
  return detail::unary(a, std::log(a.v), 1.0 / a.v, Op::log);
}
inline Ad sqrt(const Ad& a) {
  if (!(a.v > 0.0))
    throw DomainError("sqrt of non-positive argument", a.idx);
  const double s = std::sqrt(a.v);
  return detail::unary(a, s, 0.5 / s, Op::sqrt);
}
inline Ad pow(const Ad& a, double p) {
  if (a.v < 0.0 && p != std::floor(p))
    throw DomainError("pow of negative base with non-integer exponent", a.idx);
  if (a.v == 0.0 && p < 1.0)
    throw DomainError("pow with unbounded derivative at zero", a.idx);
  const double v = std::pow(a.v, p);
  const double d = (p == 0.0) ? 0.0 : p * std::pow(a.v, p - 1.0);
  return detail::unary(a, v, d, Op::pow);
}

// subgradient convention: left argument wins ties
inline Ad min(const Ad& a, const Ad& b) {
  const bool left = a.v <= b.v;
  return detail::binary(a, b, left ? a.v : b.v, left ? 1.0 : 0.0,
                        left ? 0.0 : 1.0, Op::min);
}
inline Ad max(const Ad& a, const Ad& b) {
  const bool left = a.v >= b.v;
  return detail::binary(a, b, left ? a.v : b.v, left ? 1.0 : 0.0,
                        left ? 0.0 : 1.0, Op::max);
}
inline Ad min(const Ad& a, double b) { return min(a, Ad(b)); }
inline Ad min(double a, const Ad& b) { return min(Ad(a), b); }
inline Ad max(const Ad& a, double b) { return max(a, Ad(b)); }
inline Ad max(double a, const Ad& b) { return max(Ad(a), b); }

// Value substitution: carries `hard` forward, passes gradients through to
// `soft` unchanged. The hook behind hard-contact values with soft-contact
// derivatives.
inline Ad replace_value(const Ad& soft, double hard) {
  if (soft.is_const()) return Ad(hard);
  Tape* t = soft.tape;
  return Ad(t, t->push(hard, soft.idx, 1.0, Op::value_swap), hard);
}

// Cuts the gradient path: result is a tape-free constant with equal value.
inline Ad detach(const Ad& a) { return Ad(a.v); }
inline double detach(double a) { return a; }

inline double value_of(double x) { return x; }
inline double value_of(const Ad& x) { return x.v; }

template <class S>
inline constexpr bool is_ad_v = false;
template <>
inline constexpr bool is_ad_v<Ad> = true;

template <class A, class B>
using promote_t = std::conditional_t<is_ad_v<A> || is_ad_v<B>, Ad, double>;

}  // namespace ctrlab::ad
