#include <cstdlib>
#include <cstring>

#include "egofuse/simd_kernels.hpp"

namespace egofuse::simd {

namespace {

Variant detect() {
  const char* env = std::getenv("EGOFUSE_SIMD");
  if (env) {
    if (std::strcmp(env, "scalar") == 0) return Variant::scalar;
#if defined(__x86_64__) || defined(_M_X64)
    if (std::strcmp(env, "avx2") == 0 && __builtin_cpu_supports("avx2"))
      return Variant::avx2;
#endif
#if defined(__aarch64__)
    if (std::strcmp(env, "neon") == 0) return Variant::neon;
#endif
    // unknown or unavailable -> fall through to auto
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return Variant::avx2;
#endif
#if defined(__aarch64__)
  return Variant::neon;
#endif
  return Variant::scalar;
}

Variant g_variant = detect();

}  // namespace

Variant active_variant() { return g_variant; }

void force_variant(Variant v) { g_variant = v; }

bool variant_available(Variant v) {
  switch (v) {
    case Variant::scalar:
      return true;
    case Variant::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Variant::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::scalar:
      return "scalar";
    case Variant::avx2:
      return "avx2";
    case Variant::neon:
      return "neon";
  }
  return "?";
}

MinHit min_sqdist(const double* xs, const double* ys, const double* zs, int64_t n,
                  double qx, double qy, double qz) {
  switch (g_variant) {
#if defined(__x86_64__) || defined(_M_X64)
    case Variant::avx2:
      return detail::min_sqdist_avx2(xs, ys, zs, n, qx, qy, qz);
#endif
#if defined(__aarch64__)
    case Variant::neon:
      return detail::min_sqdist_neon(xs, ys, zs, n, qx, qy, qz);
#endif
    default:
      return detail::min_sqdist_scalar(xs, ys, zs, n, qx, qy, qz);
  }
}

void transform_points(const double R[9], const double t[3], const double* xs,
                      const double* ys, const double* zs, int64_t n, double* ox,
                      double* oy, double* oz) {
  switch (g_variant) {
#if defined(__x86_64__) || defined(_M_X64)
    case Variant::avx2:
      return detail::transform_points_avx2(R, t, xs, ys, zs, n, ox, oy, oz);
#endif
#if defined(__aarch64__)
    case Variant::neon:
      return detail::transform_points_neon(R, t, xs, ys, zs, n, ox, oy, oz);
#endif
    default:
      return detail::transform_points_scalar(R, t, xs, ys, zs, n, ox, oy, oz);
  }
}

void adam_update(double* p, const double* g, double* m, double* v, int64_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2) {
  switch (g_variant) {
#if defined(__x86_64__) || defined(_M_X64)
    case Variant::avx2:
      return detail::adam_update_avx2(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
#endif
#if defined(__aarch64__)
    case Variant::neon:
      return detail::adam_update_neon(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
#endif
    default:
      return detail::adam_update_scalar(p, g, m, v, n, lr, beta1, beta2, eps, bc1,
                                        bc2);
  }
}

void aabb_mask(const double* xs, const double* ys, const double* zs, int64_t n,
               const double lo[3], const double hi[3], uint8_t* mask) {
  switch (g_variant) {
#if defined(__x86_64__) || defined(_M_X64)
    case Variant::avx2:
      return detail::aabb_mask_avx2(xs, ys, zs, n, lo, hi, mask);
#endif
#if defined(__aarch64__)
    case Variant::neon:
      return detail::aabb_mask_neon(xs, ys, zs, n, lo, hi, mask);
#endif
    default:
      return detail::aabb_mask_scalar(xs, ys, zs, n, lo, hi, mask);
  }
}

}  // namespace egofuse::simd
