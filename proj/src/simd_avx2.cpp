#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "egofuse/simd_kernels.hpp"

// AVX2 variants. No FMA anywhere: results must match the scalar reference
// bitwise. Built with -mavx2 in this TU only; the dispatcher guards use.

namespace egofuse::simd::detail {

MinHit min_sqdist_avx2(const double* xs, const double* ys, const double* zs,
                       int64_t n, double qx, double qy, double qz) {
  MinHit best{0.0, -1};
  const int64_t n4 = n & ~int64_t(3);
  double bd = 1.0 / 0.0;
  if (n4 >= 4) {
    const __m256d vqx = _mm256_set1_pd(qx);
    const __m256d vqy = _mm256_set1_pd(qy);
    const __m256d vqz = _mm256_set1_pd(qz);
    __m256d vbest = _mm256_set1_pd(1.0 / 0.0);
    __m256i vbidx = _mm256_set1_epi64x(-1);
    __m256i vidx = _mm256_setr_epi64x(0, 1, 2, 3);
    const __m256i vinc = _mm256_set1_epi64x(4);
    for (int64_t i = 0; i < n4; i += 4) {
      const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
      const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
      const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
      const __m256d d2 = _mm256_add_pd(
          _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
          _mm256_mul_pd(dz, dz));
      const __m256d lt = _mm256_cmp_pd(d2, vbest, _CMP_LT_OQ);
      vbest = _mm256_blendv_pd(vbest, d2, lt);
      vbidx = _mm256_castpd_si256(_mm256_blendv_pd(
          _mm256_castsi256_pd(vbidx), _mm256_castsi256_pd(vidx), lt));
      vidx = _mm256_add_epi64(vidx, vinc);
    }
    alignas(32) double lane_d[4];
    alignas(32) int64_t lane_i[4];
    _mm256_store_pd(lane_d, vbest);
    _mm256_store_si256(reinterpret_cast<__m256i*>(lane_i), vbidx);
    for (int l = 0; l < 4; ++l) {
      if (lane_i[l] < 0) continue;
      if (lane_d[l] < bd || (lane_d[l] == bd && lane_i[l] < best.idx)) {
        bd = lane_d[l];
        best.idx = lane_i[l];
      }
    }
  }
  for (int64_t i = n4; i < n; ++i) {
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

void transform_points_avx2(const double R[9], const double t[3], const double* xs,
                           const double* ys, const double* zs, int64_t n, double* ox,
                           double* oy, double* oz) {
  const int64_t n4 = n & ~int64_t(3);
  __m256d r[9], tv[3];
  for (int k = 0; k < 9; ++k) r[k] = _mm256_set1_pd(R[k]);
  for (int k = 0; k < 3; ++k) tv[k] = _mm256_set1_pd(t[k]);
  for (int64_t i = 0; i < n4; i += 4) {
    const __m256d x = _mm256_loadu_pd(xs + i);
    const __m256d y = _mm256_loadu_pd(ys + i);
    const __m256d z = _mm256_loadu_pd(zs + i);
    const __m256d nx =
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[0], x), _mm256_mul_pd(r[1], y)),
                      _mm256_add_pd(_mm256_mul_pd(r[2], z), tv[0]));
    const __m256d ny =
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[3], x), _mm256_mul_pd(r[4], y)),
                      _mm256_add_pd(_mm256_mul_pd(r[5], z), tv[1]));
    const __m256d nz =
        _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[6], x), _mm256_mul_pd(r[7], y)),
                      _mm256_add_pd(_mm256_mul_pd(r[8], z), tv[2]));
    _mm256_storeu_pd(ox + i, nx);
    _mm256_storeu_pd(oy + i, ny);
    _mm256_storeu_pd(oz + i, nz);
  }
  if (n4 < n)
    transform_points_scalar(R, t, xs + n4, ys + n4, zs + n4, n - n4, ox + n4, oy + n4,
                            oz + n4);
}

void adam_update_avx2(double* p, const double* g, double* m, double* v, int64_t n,
                      double lr, double beta1, double beta2, double eps, double bc1,
                      double bc2) {
  const int64_t n4 = n & ~int64_t(3);
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vo1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vo2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vc1 = _mm256_set1_pd(bc1);
  const __m256d vc2 = _mm256_set1_pd(bc2);
  for (int64_t i = 0; i < n4; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(vo1, gi));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(vo2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d num = _mm256_mul_pd(vlr, _mm256_mul_pd(mi, vc1));
    const __m256d den = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, vc2)), veps);
    _mm256_storeu_pd(p + i,
                     _mm256_sub_pd(_mm256_loadu_pd(p + i), _mm256_div_pd(num, den)));
  }
  if (n4 < n)
    adam_update_scalar(p + n4, g + n4, m + n4, v + n4, n - n4, lr, beta1, beta2, eps,
                       bc1, bc2);
}

void aabb_mask_avx2(const double* xs, const double* ys, const double* zs, int64_t n,
                    const double lo[3], const double hi[3], uint8_t* mask) {
  const int64_t n4 = n & ~int64_t(3);
  const __m256d lx = _mm256_set1_pd(lo[0]), hx = _mm256_set1_pd(hi[0]);
  const __m256d ly = _mm256_set1_pd(lo[1]), hy = _mm256_set1_pd(hi[1]);
  const __m256d lz = _mm256_set1_pd(lo[2]), hz = _mm256_set1_pd(hi[2]);
  for (int64_t i = 0; i < n4; i += 4) {
    const __m256d x = _mm256_loadu_pd(xs + i);
    const __m256d y = _mm256_loadu_pd(ys + i);
    const __m256d z = _mm256_loadu_pd(zs + i);
    __m256d in = _mm256_and_pd(_mm256_cmp_pd(x, lx, _CMP_GE_OQ),
                               _mm256_cmp_pd(x, hx, _CMP_LE_OQ));
    in = _mm256_and_pd(in, _mm256_and_pd(_mm256_cmp_pd(y, ly, _CMP_GE_OQ),
                                         _mm256_cmp_pd(y, hy, _CMP_LE_OQ)));
    in = _mm256_and_pd(in, _mm256_and_pd(_mm256_cmp_pd(z, lz, _CMP_GE_OQ),
                                         _mm256_cmp_pd(z, hz, _CMP_LE_OQ)));
    const int bits = _mm256_movemask_pd(in);
    mask[i] = (bits >> 0) & 1;
    mask[i + 1] = (bits >> 1) & 1;
    mask[i + 2] = (bits >> 2) & 1;
    mask[i + 3] = (bits >> 3) & 1;
  }
  if (n4 < n) aabb_mask_scalar(xs + n4, ys + n4, zs + n4, n - n4, lo, hi, mask + n4);
}

}  // namespace egofuse::simd::detail

#endif
