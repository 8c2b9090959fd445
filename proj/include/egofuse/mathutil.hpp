#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace egofuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = 3.14159265358979323846;

// Rigid transform p -> R*p + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  RigidTransform then(const RigidTransform& outer) const {
    // outer ∘ this
    return {outer.R * R, outer.R * t + outer.t};
  }
  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = R;
    m.block<3, 1>(0, 3) = t;
    return m;
  }
  static RigidTransform from_matrix(const Mat4& m) {
    return {m.block<3, 3>(0, 0), m.block<3, 1>(0, 3)};
  }
};

// Rodrigues. Series fallback below 1e-8 keeps the map smooth through zero.
inline Mat3 aa_to_matrix(const Vec3& aa) {
  const double th2 = aa.squaredNorm();
  const double th = std::sqrt(th2);
  double a, b;  // sin(th)/th, (1-cos(th))/th^2
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  Mat3 K;
  K << 0, -aa.z(), aa.y(), aa.z(), 0, -aa.x(), -aa.y(), aa.x(), 0;
  return Mat3::Identity() + a * K + b * (K * K);
}

inline Vec3 matrix_to_aa(const Mat3& R) {
  const double tr = R.trace();
  const double c = std::min(1.0, std::max(-1.0, (tr - 1.0) * 0.5));
  const double th = std::acos(c);
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (th < 1e-8) return 0.5 * w;  // first-order
  if (th > kPi - 1e-6) {
    // Near pi the off-diagonal difference vanishes; recover the axis from the
    // symmetric part instead.
    Mat3 S = 0.5 * (R + Mat3::Identity());
    Vec3 ax(std::sqrt(std::max(0.0, S(0, 0))), std::sqrt(std::max(0.0, S(1, 1))),
            std::sqrt(std::max(0.0, S(2, 2))));
    // Fix signs using the largest component.
    int k = 0;
    if (ax.y() > ax.x()) k = 1;
    if (ax.z() > ax[k]) k = 2;
    if (ax[k] < 1e-12) return Vec3::Zero();
    if (k == 0) {
      ax.y() = std::copysign(ax.y(), S(0, 1));
      ax.z() = std::copysign(ax.z(), S(0, 2));
    } else if (k == 1) {
      ax.x() = std::copysign(ax.x(), S(0, 1));
      ax.z() = std::copysign(ax.z(), S(1, 2));
    } else {
      ax.x() = std::copysign(ax.x(), S(0, 2));
      ax.y() = std::copysign(ax.y(), S(1, 2));
    }
    ax.normalize();
    return th * ax;
  }
  return (th / (2.0 * std::sin(th))) * w;
}

inline double wrap_angle(double x) {
  // to (-pi, pi]
  x = std::fmod(x, 2.0 * kPi);
  if (x <= -kPi) x += 2.0 * kPi;
  if (x > kPi) x -= 2.0 * kPi;
  return x;
}

// Axis-angle representative of `aa` closest to `ref` (same rotation, angle
// shifted by multiples of 2*pi). Keeps per-joint sequences free of 2*pi jumps.
inline Vec3 nearest_aa_representative(const Vec3& aa, const Vec3& ref) {
  const double th = aa.norm();
  if (th < 1e-12) return aa;
  const Vec3 ax = aa / th;
  Vec3 best = aa;
  double bestd = (aa - ref).squaredNorm();
  for (int k = -2; k <= 2; ++k) {
    if (k == 0) continue;
    const Vec3 cand = ax * (th + 2.0 * kPi * k);
    const double d = (cand - ref).squaredNorm();
    if (d < bestd) {
      bestd = d;
      best = cand;
    }
  }
  return best;
}

inline Vec3 slerp_aa(const Vec3& a, const Vec3& b, double t) {
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  Eigen::Quaterniond qa(aa_to_matrix(a)), qb(aa_to_matrix(b));
  return matrix_to_aa(qa.slerp(t, qb).toRotationMatrix());
}

inline bool is_rotation(const Mat3& R, double tol = 1e-9) {
  return (R * R.transpose() - Mat3::Identity()).norm() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

// Nearest rotation matrix in Frobenius norm (SVD projection, det corrected).
inline Mat3 project_to_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1.0;
    R = svd.matrixU() * D * svd.matrixV().transpose();
  }
  return R;
}

}  // namespace egofuse
