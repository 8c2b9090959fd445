#include <cmath>

#include "egofuse/simd_kernels.hpp"

// Reference kernels. Expression shapes (association order, no fused ops) are
// the contract the vector variants reproduce bitwise.

namespace egofuse::simd::detail {

MinHit min_sqdist_scalar(const double* xs, const double* ys, const double* zs,
                         int64_t n, double qx, double qy, double qz) {
  MinHit best{0.0, -1};
  double bd = 1.0 / 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    const double d2 = ((dx * dx) + (dy * dy)) + (dz * dz);
    if (d2 < bd) {
      bd = d2;
      best.idx = i;
    }
  }
  best.d2 = best.idx >= 0 ? bd : 0.0;
  return best;
}

void transform_points_scalar(const double R[9], const double t[3], const double* xs,
                             const double* ys, const double* zs, int64_t n, double* ox,
                             double* oy, double* oz) {
  for (int64_t i = 0; i < n; ++i) {
    const double x = xs[i], y = ys[i], z = zs[i];
    const double nx = ((R[0] * x) + (R[1] * y)) + ((R[2] * z) + t[0]);
    const double ny = ((R[3] * x) + (R[4] * y)) + ((R[5] * z) + t[1]);
    const double nz = ((R[6] * x) + (R[7] * y)) + ((R[8] * z) + t[2]);
    ox[i] = nx;
    oy[i] = ny;
    oz[i] = nz;
  }
}

void adam_update_scalar(double* p, const double* g, double* m, double* v, int64_t n,
                        double lr, double beta1, double beta2, double eps, double bc1,
                        double bc2) {
  const double om1 = 1.0 - beta1;
  const double om2 = 1.0 - beta2;
  for (int64_t i = 0; i < n; ++i) {
    const double gi = g[i];
    const double mi = (beta1 * m[i]) + (om1 * gi);
    const double vi = (beta2 * v[i]) + (om2 * (gi * gi));
    m[i] = mi;
    v[i] = vi;
    p[i] = p[i] - (lr * (mi * bc1)) / (std::sqrt(vi * bc2) + eps);
  }
}

void aabb_mask_scalar(const double* xs, const double* ys, const double* zs, int64_t n,
                      const double lo[3], const double hi[3], uint8_t* mask) {
  for (int64_t i = 0; i < n; ++i) {
    mask[i] = (xs[i] >= lo[0]) & (xs[i] <= hi[0]) & (ys[i] >= lo[1]) &
              (ys[i] <= hi[1]) & (zs[i] >= lo[2]) & (zs[i] <= hi[2]);
  }
}

}  // namespace egofuse::simd::detail
