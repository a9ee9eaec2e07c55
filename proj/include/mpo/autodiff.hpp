// autodiff.hpp - reverse-mode differentiation for scalar expressions
//
// A Tape is a flat Wengert list: every Var is an index into it, nodes store
// at most two parents with precomputed local partials, and backward() is a
// single reverse sweep. Graphs are single-owner during construction and
// backward; independent tapes may run concurrently.
//
// Primitive set: +, -, *, /, exp, log, tanh, pow, sigmoid, log_sigmoid,
// clip01, relu, relu_pow, logit and a couple of guarded variants used by the
// loss networks. Subgradient conventions at kinks:
//   d/dx relu(x)   = 0 at x = 0
//   d/dx clip01(x) = 0 at and outside the boundaries
//   d/dx relu_pow(x, p<1) for 0 < x <= eps is the derivative evaluated at
//   eps (eps = 1e-8), keeping gradients bounded at the kink.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mpo {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
};

class Tape {
 public:
  struct Node {
    double value;
    double adjoint;
    double d0, d1;
    std::int32_t p0, p1;
  };

  Tape() { nodes_.reserve(1 << 12); }

  Var leaf(double value) { return {this, push(value, -1, 0.0, -1, 0.0)}; }

  std::vector<Var> leaves(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(leaf(v));
    return out;
  }

  std::int32_t push(double value, std::int32_t p0, double d0, std::int32_t p1,
                    double d1) {
    nodes_.push_back(Node{value, 0.0, d0, d1, p0, p1});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  double value(Var v) const { return nodes_[v.idx].value; }
  double adjoint(Var v) const { return nodes_[v.idx].adjoint; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(output)/d(node) into every node's adjoint.
  void backward(Var output) {
    assert(output.tape == this && output.idx >= 0);
    for (std::int32_t i = 0; i <= output.idx; ++i) nodes_[i].adjoint = 0.0;
    nodes_[output.idx].adjoint = 1.0;
    for (std::int32_t i = output.idx; i >= 0; --i) {
      const Node& n = nodes_[i];
      if (n.adjoint == 0.0) continue;
      if (n.p0 >= 0) nodes_[n.p0].adjoint += n.adjoint * n.d0;
      if (n.p1 >= 0) nodes_[n.p1].adjoint += n.adjoint * n.d1;
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {
inline Var unary(Var x, double value, double dx) {
  return {x.tape, x.tape->push(value, x.idx, dx, -1, 0.0)};
}
inline Var binary(Var a, Var b, double value, double da, double db) {
  assert(a.tape == b.tape);
  return {a.tape, a.tape->push(value, a.idx, da, b.idx, db)};
}
}  // namespace detail

inline double val(Var x) { return x.tape->value(x); }

// --- arithmetic ------------------------------------------------------------

inline Var operator+(Var a, Var b) {
  return detail::binary(a, b, val(a) + val(b), 1.0, 1.0);
}
inline Var operator-(Var a, Var b) {
  return detail::binary(a, b, val(a) - val(b), 1.0, -1.0);
}
inline Var operator*(Var a, Var b) {
  return detail::binary(a, b, val(a) * val(b), val(b), val(a));
}
inline Var operator/(Var a, Var b) {
  double vb = val(b);
  return detail::binary(a, b, val(a) / vb, 1.0 / vb, -val(a) / (vb * vb));
}
inline Var operator-(Var a) { return detail::unary(a, -val(a), -1.0); }

inline Var operator+(Var a, double c) { return detail::unary(a, val(a) + c, 1.0); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return detail::unary(a, val(a) - c, 1.0); }
inline Var operator-(double c, Var a) { return detail::unary(a, c - val(a), -1.0); }
inline Var operator*(Var a, double c) { return detail::unary(a, val(a) * c, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return detail::unary(a, val(a) / c, 1.0 / c); }
inline Var operator/(double c, Var a) {
  double va = val(a);
  return detail::unary(a, c / va, -c / (va * va));
}

// --- transcendental --------------------------------------------------------

inline Var exp(Var x) {
  double e = std::exp(val(x));
  return detail::unary(x, e, e);
}
inline Var log(Var x) { return detail::unary(x, std::log(val(x)), 1.0 / val(x)); }
inline Var tanh(Var x) {
  double t = std::tanh(val(x));
  return detail::unary(x, t, 1.0 - t * t);
}
inline Var pow(Var x, double p) {
  double v = val(x);
  return detail::unary(x, std::pow(v, p), p * std::pow(v, p - 1.0));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
inline Var sigmoid(Var x) {
  double s = sigmoid(val(x));
  return detail::unary(x, s, s * (1.0 - s));
}

// log(sigmoid(x)) = -softplus(-x), computed without overflow.
inline double log_sigmoid(double x) {
  return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::fabs(x))));
}
inline Var log_sigmoid(Var x) {
  return detail::unary(x, log_sigmoid(val(x)), sigmoid(-val(x)));
}

// --- clipped / guarded primitives -------------------------------------------

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(Var x) {
  double v = val(x);
  return detail::unary(x, relu(v), v > 0.0 ? 1.0 : 0.0);
}

inline double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }
inline Var clip01(Var x) {
  double v = val(x);
  return detail::unary(x, clip01(v), (v > 0.0 && v < 1.0) ? 1.0 : 0.0);
}

inline constexpr double kReluPowEps = 1e-8;

// (x)_+^p. For p < 1 the derivative is clamped to its value at kReluPowEps
// so gradients stay finite at the kink.
inline double relu_pow(double x, double p) {
  return x > 0.0 ? std::pow(x, p) : 0.0;
}
inline Var relu_pow(Var x, double p) {
  double v = val(x);
  double d = 0.0;
  if (v > 0.0) {
    double base = (p < 1.0 && v <= kReluPowEps) ? kReluPowEps : v;
    d = p * std::pow(base, p - 1.0);
  }
  return detail::unary(x, relu_pow(v, p), d);
}

// log(max(x, floor)); derivative 0 on the clamped branch.
inline double log_floor(double x, double floor_val) {
  return std::log(x > floor_val ? x : floor_val);
}
inline Var log_floor(Var x, double floor_val) {
  double v = val(x);
  return detail::unary(x, log_floor(v, floor_val),
                       v > floor_val ? 1.0 / v : 0.0);
}

// log(x) - log(1-x). Caller guarantees x in (0, 1).
inline double logit(double x) { return std::log(x) - std::log1p(-x); }
inline Var logit(Var x) {
  double v = val(x);
  return detail::unary(x, logit(v), 1.0 / (v * (1.0 - v)));
}

// logit(clamp(x, eps, 1-eps)); derivative 0 outside the interior band.
inline double logit_clipped(double x, double eps) {
  double c = x < eps ? eps : (x > 1.0 - eps ? 1.0 - eps : x);
  return logit(c);
}
inline Var logit_clipped(Var x, double eps) {
  double v = val(x);
  double d = (v > eps && v < 1.0 - eps) ? 1.0 / (v * (1.0 - v)) : 0.0;
  return detail::unary(x, logit_clipped(v, eps), d);
}

// min(x, cap); derivative 0 on the capped branch.
inline double min_cap(double x, double cap) { return x < cap ? x : cap; }
inline Var min_cap(Var x, double cap) {
  double v = val(x);
  return detail::unary(x, min_cap(v, cap), v < cap ? 1.0 : 0.0);
}

// clamp(x, lo, hi); derivative 0 at and outside the boundaries.
inline double clip_band(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}
inline Var clip_band(Var x, double lo, double hi) {
  double v = val(x);
  return detail::unary(x, clip_band(v, lo, hi),
                       (v > lo && v < hi) ? 1.0 : 0.0);
}

// --- convenience -----------------------------------------------------------

// Gradient of f(inputs) at the given point. f receives leaves on a fresh
// tape and returns the output Var.
template <class F>
std::vector<double> gradient(F&& f, std::span<const double> inputs) {
  Tape tape;
  std::vector<Var> vars = tape.leaves(inputs);
  Var out = f(tape, std::span<const Var>(vars));
  tape.backward(out);
  std::vector<double> g(inputs.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = tape.adjoint(vars[i]);
  return g;
}

}  // namespace mpo
