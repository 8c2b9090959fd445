#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

#include "egofuse/simd_kernels.hpp"

// NEON float64x2 variants, same bitwise contract as the scalar reference.

namespace egofuse::simd::detail {

MinHit min_sqdist_neon(const double* xs, const double* ys, const double* zs,
                       int64_t n, double qx, double qy, double qz) {
  MinHit best{0.0, -1};
  const int64_t n2 = n & ~int64_t(1);
  double bd = 1.0 / 0.0;
  if (n2 >= 2) {
    const float64x2_t vqx = vdupq_n_f64(qx);
    const float64x2_t vqy = vdupq_n_f64(qy);
    const float64x2_t vqz = vdupq_n_f64(qz);
    float64x2_t vbest = vdupq_n_f64(1.0 / 0.0);
    int64x2_t vbidx = vdupq_n_s64(-1);
    int64x2_t vidx = {0, 1};
    const int64x2_t vinc = vdupq_n_s64(2);
    for (int64_t i = 0; i < n2; i += 2) {
      const float64x2_t dx = vsubq_f64(vld1q_f64(xs + i), vqx);
      const float64x2_t dy = vsubq_f64(vld1q_f64(ys + i), vqy);
      const float64x2_t dz = vsubq_f64(vld1q_f64(zs + i), vqz);
      const float64x2_t d2 =
          vaddq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)), vmulq_f64(dz, dz));
      const uint64x2_t lt = vcltq_f64(d2, vbest);
      vbest = vbslq_f64(lt, d2, vbest);
      vbidx = vbslq_s64(lt, vidx, vbidx);
      vidx = vaddq_s64(vidx, vinc);
    }
    double lane_d[2] = {vgetq_lane_f64(vbest, 0), vgetq_lane_f64(vbest, 1)};
    int64_t lane_i[2] = {vgetq_lane_s64(vbidx, 0), vgetq_lane_s64(vbidx, 1)};
    for (int l = 0; l < 2; ++l) {
      if (lane_i[l] < 0) continue;
      if (lane_d[l] < bd || (lane_d[l] == bd && lane_i[l] < best.idx)) {
        bd = lane_d[l];
        best.idx = lane_i[l];
      }
    }
  }
  for (int64_t i = n2; i < n; ++i) {
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

void transform_points_neon(const double R[9], const double t[3], const double* xs,
                           const double* ys, const double* zs, int64_t n, double* ox,
                           double* oy, double* oz) {
  const int64_t n2 = n & ~int64_t(1);
  for (int64_t i = 0; i < n2; i += 2) {
    const float64x2_t x = vld1q_f64(xs + i);
    const float64x2_t y = vld1q_f64(ys + i);
    const float64x2_t z = vld1q_f64(zs + i);
    const float64x2_t nx = vaddq_f64(
        vaddq_f64(vmulq_n_f64(x, R[0]), vmulq_n_f64(y, R[1])),
        vaddq_f64(vmulq_n_f64(z, R[2]), vdupq_n_f64(t[0])));
    const float64x2_t ny = vaddq_f64(
        vaddq_f64(vmulq_n_f64(x, R[3]), vmulq_n_f64(y, R[4])),
        vaddq_f64(vmulq_n_f64(z, R[5]), vdupq_n_f64(t[1])));
    const float64x2_t nz = vaddq_f64(
        vaddq_f64(vmulq_n_f64(x, R[6]), vmulq_n_f64(y, R[7])),
        vaddq_f64(vmulq_n_f64(z, R[8]), vdupq_n_f64(t[2])));
    vst1q_f64(ox + i, nx);
    vst1q_f64(oy + i, ny);
    vst1q_f64(oz + i, nz);
  }
  if (n2 < n)
    transform_points_scalar(R, t, xs + n2, ys + n2, zs + n2, n - n2, ox + n2, oy + n2,
                            oz + n2);
}

void adam_update_neon(double* p, const double* g, double* m, double* v, int64_t n,
                      double lr, double beta1, double beta2, double eps, double bc1,
                      double bc2) {
  const int64_t n2 = n & ~int64_t(1);
  for (int64_t i = 0; i < n2; i += 2) {
    const float64x2_t gi = vld1q_f64(g + i);
    const float64x2_t mi = vaddq_f64(vmulq_n_f64(vld1q_f64(m + i), beta1),
                                     vmulq_n_f64(gi, 1.0 - beta1));
    const float64x2_t vi = vaddq_f64(vmulq_n_f64(vld1q_f64(v + i), beta2),
                                     vmulq_n_f64(vmulq_f64(gi, gi), 1.0 - beta2));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t num = vmulq_n_f64(vmulq_n_f64(mi, bc1), lr);
    const float64x2_t den =
        vaddq_f64(vsqrtq_f64(vmulq_n_f64(vi, bc2)), vdupq_n_f64(eps));
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), vdivq_f64(num, den)));
  }
  if (n2 < n)
    adam_update_scalar(p + n2, g + n2, m + n2, v + n2, n - n2, lr, beta1, beta2, eps,
                       bc1, bc2);
}

void aabb_mask_neon(const double* xs, const double* ys, const double* zs, int64_t n,
                    const double lo[3], const double hi[3], uint8_t* mask) {
  aabb_mask_scalar(xs, ys, zs, n, lo, hi, mask);
}

}  // namespace egofuse::simd::detail

#endif
