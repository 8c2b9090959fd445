#pragma once

#include <type_traits>

#include "egofuse/autodiff.hpp"
#include "egofuse/mathutil.hpp"

// Small fixed-size vector/matrix algebra templated on the scalar, shared by
// the tape (S = ad::Var) and plain (S = double) instantiations of kinematics
// and loss code. Eigen stays on the plain-double side of the fence.

namespace egofuse {

template <class S>
struct V3 {
  S x{}, y{}, z{};
};

template <class S>
struct M3 {
  S m[9];  // row-major
};

template <class S>
V3<S> v3(const S& x, const S& y, const S& z) {
  return {x, y, z};
}

inline V3<double> from_eigen(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline Vec3 to_eigen(const V3<double>& v) { return {v.x, v.y, v.z}; }

template <class S>
V3<S> operator+(const V3<S>& a, const V3<S>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class S>
V3<S> operator-(const V3<S>& a, const V3<S>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class S>
  requires(!std::is_same_v<S, double>)
V3<S> operator*(const S& s, const V3<S>& v) {
  return {s * v.x, s * v.y, s * v.z};
}
template <class S>
V3<S> operator*(double s, const V3<S>& v) {
  return {s * v.x, s * v.y, s * v.z};
}
template <class S>
S dot(const V3<S>& a, const V3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class S>
S sqnorm(const V3<S>& a) {
  return dot(a, a);
}
template <class S>
V3<S> cross(const V3<S>& a, const V3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class S>
V3<S> mat_apply(const M3<S>& R, const V3<S>& v) {
  return {R.m[0] * v.x + R.m[1] * v.y + R.m[2] * v.z,
          R.m[3] * v.x + R.m[4] * v.y + R.m[5] * v.z,
          R.m[6] * v.x + R.m[7] * v.y + R.m[8] * v.z};
}

template <class S>
M3<S> mat_mul(const M3<S>& A, const M3<S>& B) {
  M3<S> C;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      C.m[3 * r + c] = A.m[3 * r] * B.m[c] + A.m[3 * r + 1] * B.m[3 + c] +
                       A.m[3 * r + 2] * B.m[6 + c];
  return C;
}

template <class S>
M3<S> mat_identity() {
  M3<S> I;
  for (int k = 0; k < 9; ++k) I.m[k] = S(0.0);
  I.m[0] = I.m[4] = I.m[8] = S(1.0);
  return I;
}

inline M3<double> from_eigen(const Mat3& R) {
  M3<double> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[3 * i + j] = R(i, j);
  return r;
}
inline Mat3 to_eigen(const M3<double>& r) {
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = r.m[3 * i + j];
  return R;
}

// Rodrigues, same series threshold as the plain-double version so both
// instantiations branch identically.
template <class S>
M3<S> rodrigues(const V3<S>& aa) {
  using ad::value_of;
  using ad::sqrt;
  using ad::sin;
  using ad::cos;
  const S th2 = sqnorm(aa);
  S a, b;  // sin(th)/th, (1-cos(th))/th^2
  if (value_of(th2) < 1e-16) {
    a = 1.0 - th2 * (1.0 / 6.0);
    b = 0.5 - th2 * (1.0 / 24.0);
  } else {
    const S th = sqrt(th2);
    a = sin(th) / th;
    b = (1.0 - cos(th)) / th2;
  }
  const S& wx = aa.x;
  const S& wy = aa.y;
  const S& wz = aa.z;
  // I + a*K + b*K^2 with K = skew(aa)
  M3<S> R;
  R.m[0] = 1.0 + b * (-(wy * wy) - wz * wz);
  R.m[1] = b * (wx * wy) - a * wz;
  R.m[2] = b * (wx * wz) + a * wy;
  R.m[3] = b * (wx * wy) + a * wz;
  R.m[4] = 1.0 + b * (-(wx * wx) - wz * wz);
  R.m[5] = b * (wy * wz) - a * wx;
  R.m[6] = b * (wx * wz) - a * wy;
  R.m[7] = b * (wy * wz) + a * wx;
  R.m[8] = 1.0 + b * (-(wx * wx) - wy * wy);
  return R;
}

}  // namespace egofuse
