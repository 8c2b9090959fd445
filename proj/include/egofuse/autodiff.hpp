#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

// Reverse-mode tape over scalars. Loss code is templated on the scalar type;
// instantiated with Var it records the tape, with double it evaluates plainly
// (that instantiation is what the finite-difference oracle in the tests
// drives, so both sides of the gradient check share one definition).
//
// Constants never touch the tape: a Var with index -1 folds through every
// operator, which is what makes stage-masked optimization cheap — frozen
// parameters enter as constants and whole subgraphs collapse.

namespace egofuse::ad {

class Tape {
 public:
  struct Rec {
    int32_t a, b;
    double wa, wb;
  };

  void reset() {
    rec_.clear();
    val_.clear();
  }
  void reserve(size_t n) {
    rec_.reserve(n);
    val_.reserve(n);
  }
  size_t size() const { return val_.size(); }

  int32_t leaf(double v) {
    rec_.push_back({-1, -1, 0.0, 0.0});
    val_.push_back(v);
    return static_cast<int32_t>(val_.size() - 1);
  }
  int32_t node1(double v, int32_t a, double wa) {
    rec_.push_back({a, -1, wa, 0.0});
    val_.push_back(v);
    return static_cast<int32_t>(val_.size() - 1);
  }
  int32_t node2(double v, int32_t a, double wa, int32_t b, double wb) {
    rec_.push_back({a, b, wa, wb});
    val_.push_back(v);
    return static_cast<int32_t>(val_.size() - 1);
  }

  double value(int32_t i) const { return val_[i]; }

  // Accumulates d(root)/d(node) for every node into adj_.
  void backward(int32_t root) {
    adj_.assign(val_.size(), 0.0);
    if (root < 0) return;
    adj_[root] = 1.0;
    for (int32_t i = root; i >= 0; --i) {
      const double g = adj_[i];
      if (g == 0.0) continue;
      const Rec& r = rec_[i];
      if (r.a >= 0) adj_[r.a] += r.wa * g;
      if (r.b >= 0) adj_[r.b] += r.wb * g;
    }
  }

  double adjoint(int32_t i) const { return adj_[i]; }

 private:
  std::vector<Rec> rec_;
  std::vector<double> val_;
  std::vector<double> adj_;
};

Tape& tape();  // thread-local active tape

struct Var {
  double v = 0.0;
  int32_t i = -1;  // -1: constant

  Var() = default;
  Var(double c) : v(c) {}  // NOLINT: implicit constants are the point
  Var(double value, int32_t idx) : v(value), i(idx) {}

  static Var leaf(double value) { return {value, tape().leaf(value)}; }
  bool is_const() const { return i < 0; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

inline Var operator+(const Var& a, const Var& b) {
  const double v = a.v + b.v;
  if (a.is_const() && b.is_const()) return v;
  if (a.is_const()) return {v, tape().node1(v, b.i, 1.0)};
  if (b.is_const()) return {v, tape().node1(v, a.i, 1.0)};
  return {v, tape().node2(v, a.i, 1.0, b.i, 1.0)};
}
inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }

inline Var operator-(const Var& a, const Var& b) {
  const double v = a.v - b.v;
  if (a.is_const() && b.is_const()) return v;
  if (a.is_const()) return {v, tape().node1(v, b.i, -1.0)};
  if (b.is_const()) return {v, tape().node1(v, a.i, 1.0)};
  return {v, tape().node2(v, a.i, 1.0, b.i, -1.0)};
}
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator-(const Var& a) {
  if (a.is_const()) return -a.v;
  return {-a.v, tape().node1(-a.v, a.i, -1.0)};
}

inline Var operator*(const Var& a, const Var& b) {
  const double v = a.v * b.v;
  if (a.is_const() && b.is_const()) return v;
  if (a.is_const()) return {v, tape().node1(v, b.i, a.v)};
  if (b.is_const()) return {v, tape().node1(v, a.i, b.v)};
  return {v, tape().node2(v, a.i, b.v, b.i, a.v)};
}
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }

inline Var operator/(const Var& a, const Var& b) {
  const double v = a.v / b.v;
  if (a.is_const() && b.is_const()) return v;
  const double inv = 1.0 / b.v;
  if (a.is_const()) return {v, tape().node1(v, b.i, -v * inv)};
  if (b.is_const()) return {v, tape().node1(v, a.i, inv)};
  return {v, tape().node2(v, a.i, inv, b.i, -v * inv)};
}
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline double sqrt(double x) { return std::sqrt(x); }
inline Var sqrt(const Var& a) {
  const double v = std::sqrt(a.v);
  if (a.is_const()) return v;
  return {v, tape().node1(v, a.i, 0.5 / v)};
}

inline double sin(double x) { return std::sin(x); }
inline Var sin(const Var& a) {
  const double v = std::sin(a.v);
  if (a.is_const()) return v;
  return {v, tape().node1(v, a.i, std::cos(a.v))};
}

inline double cos(double x) { return std::cos(x); }
inline Var cos(const Var& a) {
  const double v = std::cos(a.v);
  if (a.is_const()) return v;
  return {v, tape().node1(v, a.i, -std::sin(a.v))};
}

// max(0, x); subgradient 0 at the kink.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline Var relu(const Var& a) {
  if (a.v > 0.0) return a;
  return Var(0.0);
}

// min(x, cap) for constant cap; subgradient follows the active branch.
inline double min_with(double x, double cap) { return x < cap ? x : cap; }
inline Var min_with(const Var& a, double cap) {
  if (a.v < cap) return a;
  return Var(cap);
}

}  // namespace egofuse::ad
