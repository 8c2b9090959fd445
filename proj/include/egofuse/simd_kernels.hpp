#pragma once

#include <cstdint>

// Hot inner loops used by the spatial index, the self-penetration loss, crop
// filtering and the optimizer step. Each kernel has a scalar reference and a
// vectorized variant selected once at startup; variants are required (and
// tested) to agree bitwise, so kernels avoid cross-lane float reductions (min
// is exact, everything else is elementwise) and the build disables FMA
// contraction.

namespace egofuse::simd {

enum class Variant { scalar, avx2, neon };

// Selected variant. Resolved from CPU features on first use; the environment
// variable EGOFUSE_SIMD (scalar|avx2|neon|auto) overrides.
Variant active_variant();
const char* variant_name(Variant v);
bool variant_available(Variant v);
void force_variant(Variant v);  // testing hook; caller must check availability

struct MinHit {
  double d2;
  int64_t idx;  // lowest index among ties; -1 when n == 0
};

// Nearest point to q among n SoA points.
MinHit min_sqdist(const double* xs, const double* ys, const double* zs, int64_t n,
                  double qx, double qy, double qz);

// out = R*p + t, row-major R. Output may alias input.
void transform_points(const double R[9], const double t[3], const double* xs,
                      const double* ys, const double* zs, int64_t n, double* ox,
                      double* oy, double* oz);

// One Adam step over a contiguous block. bc1/bc2 are the precomputed bias
// corrections 1/(1-beta^t).
void adam_update(double* p, const double* g, double* m, double* v, int64_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2);

// mask[i] = 1 if lo <= p_i <= hi componentwise.
void aabb_mask(const double* xs, const double* ys, const double* zs, int64_t n,
               const double lo[3], const double hi[3], uint8_t* mask);

namespace detail {
MinHit min_sqdist_scalar(const double*, const double*, const double*, int64_t, double,
                         double, double);
void transform_points_scalar(const double[9], const double[3], const double*,
                             const double*, const double*, int64_t, double*, double*,
                             double*);
void adam_update_scalar(double*, const double*, double*, double*, int64_t, double,
                        double, double, double, double, double);
void aabb_mask_scalar(const double*, const double*, const double*, int64_t,
                      const double[3], const double[3], uint8_t*);

#if defined(__x86_64__) || defined(_M_X64)
MinHit min_sqdist_avx2(const double*, const double*, const double*, int64_t, double,
                       double, double);
void transform_points_avx2(const double[9], const double[3], const double*,
                           const double*, const double*, int64_t, double*, double*,
                           double*);
void adam_update_avx2(double*, const double*, double*, double*, int64_t, double,
                      double, double, double, double, double);
void aabb_mask_avx2(const double*, const double*, const double*, int64_t,
                    const double[3], const double[3], uint8_t*);
#endif
#if defined(__aarch64__)
MinHit min_sqdist_neon(const double*, const double*, const double*, int64_t, double,
                       double, double);
void transform_points_neon(const double[9], const double[3], const double*,
                           const double*, const double*, int64_t, double*, double*,
                           double*);
void adam_update_neon(double*, const double*, double*, double*, int64_t, double,
                      double, double, double, double, double);
void aabb_mask_neon(const double*, const double*, const double*, int64_t,
                    const double[3], const double[3], uint8_t*);
#endif
}  // namespace detail

}  // namespace egofuse::simd
