#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "egofuse/rng.hpp"
#include "egofuse/simd_kernels.hpp"

using namespace egofuse;
using simd::MinHit;
using simd::Variant;

namespace {

struct Cloud {
  std::vector<double> xs, ys, zs;
};

Cloud random_cloud(int n, uint64_t seed) {
  Rng rng(seed);
  Cloud c;
  c.xs.resize(n);
  c.ys.resize(n);
  c.zs.resize(n);
  for (int i = 0; i < n; ++i) {
    c.xs[i] = rng.uniform(-5, 5);
    c.ys[i] = rng.uniform(-5, 5);
    c.zs[i] = rng.uniform(-5, 5);
  }
  return c;
}

// Variants under test: scalar always, plus whatever the machine supports.
std::vector<Variant> testable_variants() {
  std::vector<Variant> v{Variant::scalar};
  if (simd::variant_available(Variant::avx2)) v.push_back(Variant::avx2);
  if (simd::variant_available(Variant::neon)) v.push_back(Variant::neon);
  return v;
}

struct VariantGuard {
  Variant saved;
  VariantGuard() : saved(simd::active_variant()) {}
  ~VariantGuard() { simd::force_variant(saved); }
};

}  // namespace

TEST_CASE("all variants return bitwise identical nearest hits") {
  VariantGuard guard;
  for (const int n : {0, 1, 3, 4, 5, 7, 8, 64, 257, 1000}) {
    const Cloud c = random_cloud(n, 100 + n);
    Rng qr(999 + n);
    for (int q = 0; q < 20; ++q) {
      const double qx = qr.uniform(-6, 6), qy = qr.uniform(-6, 6), qz = qr.uniform(-6, 6);
      const MinHit ref = simd::detail::min_sqdist_scalar(c.xs.data(), c.ys.data(),
                                                         c.zs.data(), n, qx, qy, qz);
      for (const Variant v : testable_variants()) {
        simd::force_variant(v);
        const MinHit got = simd::min_sqdist(c.xs.data(), c.ys.data(), c.zs.data(), n,
                                            qx, qy, qz);
        CHECK(got.idx == ref.idx);
        CHECK(got.d2 == ref.d2);
      }
    }
  }
}

TEST_CASE("nearest hit ties break to the lowest index in every variant") {
  VariantGuard guard;
  // Nine copies of the same point scattered through the array; indices 2..10.
  const int n = 64;
  Cloud c = random_cloud(n, 7);
  for (int i = 2; i <= 10; ++i) {
    c.xs[i] = 1.25;
    c.ys[i] = -0.5;
    c.zs[i] = 3.0;
  }
  for (const Variant v : testable_variants()) {
    simd::force_variant(v);
    const MinHit got =
        simd::min_sqdist(c.xs.data(), c.ys.data(), c.zs.data(), n, 1.25, -0.5, 3.0);
    CHECK(got.idx == 2);
    CHECK(got.d2 == 0.0);
  }
}

TEST_CASE("empty input reports no hit") {
  VariantGuard guard;
  for (const Variant v : testable_variants()) {
    simd::force_variant(v);
    const MinHit got = simd::min_sqdist(nullptr, nullptr, nullptr, 0, 1, 2, 3);
    CHECK(got.idx == -1);
  }
}

TEST_CASE("point transform agrees bitwise across variants and in place") {
  VariantGuard guard;
  const double R[9] = {0.36, 0.48, -0.8, -0.8, 0.6, 0.0, 0.48, 0.64, 0.6};
  const double t[3] = {0.1, -2.0, 0.7};
  for (const int n : {0, 1, 5, 8, 129}) {
    const Cloud c = random_cloud(n, 300 + n);
    std::vector<double> rx(n), ry(n), rz(n);
    simd::detail::transform_points_scalar(R, t, c.xs.data(), c.ys.data(), c.zs.data(),
                                          n, rx.data(), ry.data(), rz.data());
    for (const Variant v : testable_variants()) {
      simd::force_variant(v);
      std::vector<double> ox(n), oy(n), oz(n);
      simd::transform_points(R, t, c.xs.data(), c.ys.data(), c.zs.data(), n, ox.data(),
                             oy.data(), oz.data());
      CHECK(std::memcmp(ox.data(), rx.data(), n * 8) == 0);
      CHECK(std::memcmp(oy.data(), ry.data(), n * 8) == 0);
      CHECK(std::memcmp(oz.data(), rz.data(), n * 8) == 0);

      // Aliased output overwrites its own input safely.
      Cloud alias = c;
      simd::transform_points(R, t, alias.xs.data(), alias.ys.data(), alias.zs.data(), n,
                             alias.xs.data(), alias.ys.data(), alias.zs.data());
      CHECK(std::memcmp(alias.xs.data(), rx.data(), n * 8) == 0);
      CHECK(std::memcmp(alias.ys.data(), ry.data(), n * 8) == 0);
      CHECK(std::memcmp(alias.zs.data(), rz.data(), n * 8) == 0);
    }
  }
}

TEST_CASE("adam step agrees bitwise across variants") {
  VariantGuard guard;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (const int n : {1, 4, 7, 350}) {
    Rng rng(500 + n);
    std::vector<double> p(n), g(n), m(n), v(n);
    for (int i = 0; i < n; ++i) {
      p[i] = rng.normal();
      g[i] = rng.normal();
      m[i] = 0.1 * rng.normal();
      v[i] = std::abs(0.01 * rng.normal());
    }
    for (int step = 1; step <= 3; ++step) {
      const double bc1 = 1.0 / (1.0 - std::pow(b1, step));
      const double bc2 = 1.0 / (1.0 - std::pow(b2, step));
      auto rp = p, rm = m, rv = v;
      simd::detail::adam_update_scalar(rp.data(), g.data(), rm.data(), rv.data(), n, lr,
                                       b1, b2, eps, bc1, bc2);
      for (const Variant var : testable_variants()) {
        simd::force_variant(var);
        auto op = p, om = m, ov = v;
        simd::adam_update(op.data(), g.data(), om.data(), ov.data(), n, lr, b1, b2, eps,
                          bc1, bc2);
        CHECK(std::memcmp(op.data(), rp.data(), n * 8) == 0);
        CHECK(std::memcmp(om.data(), rm.data(), n * 8) == 0);
        CHECK(std::memcmp(ov.data(), rv.data(), n * 8) == 0);
      }
      p = rp;
      m = rm;
      v = rv;
    }
  }
}

TEST_CASE("adam step matches its closed form") {
  VariantGuard guard;
  simd::force_variant(Variant::scalar);
  double p = 2.0, g = 0.5, m = 0.0, v = 0.0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 / (1.0 - b1), bc2 = 1.0 / (1.0 - b2);
  simd::adam_update(&p, &g, &m, &v, 1, lr, b1, b2, eps, bc1, bc2);
  // First step with zero moments: mhat = g, vhat = g^2.
  CHECK(m == doctest::Approx(0.1 * g));
  CHECK(v == doctest::Approx(0.001 * g * g));
  CHECK(p == doctest::Approx(2.0 - lr * g / (std::sqrt(g * g) + eps)));
}

TEST_CASE("aabb mask agrees across variants") {
  VariantGuard guard;
  const double lo[3] = {-1.0, -0.5, 0.0};
  const double hi[3] = {1.0, 0.5, 2.0};
  for (const int n : {0, 1, 6, 333}) {
    const Cloud c = random_cloud(n, 700 + n);
    std::vector<uint8_t> ref(n), got(n);
    simd::detail::aabb_mask_scalar(c.xs.data(), c.ys.data(), c.zs.data(), n, lo, hi,
                                   ref.data());
    for (int i = 0; i < n; ++i) {
      const bool in = c.xs[i] >= lo[0] && c.xs[i] <= hi[0] && c.ys[i] >= lo[1] &&
                      c.ys[i] <= hi[1] && c.zs[i] >= lo[2] && c.zs[i] <= hi[2];
      CHECK(ref[i] == (in ? 1 : 0));
    }
    for (const Variant v : testable_variants()) {
      simd::force_variant(v);
      simd::aabb_mask(c.xs.data(), c.ys.data(), c.zs.data(), n, lo, hi, got.data());
      CHECK(std::memcmp(got.data(), ref.data(), n) == 0);
    }
  }
}

TEST_CASE("boundary points land inside the mask") {
  VariantGuard guard;
  const double lo[3] = {-1.0, -1.0, -1.0};
  const double hi[3] = {1.0, 1.0, 1.0};
  const double xs[3] = {-1.0, 1.0, 1.0 + 1e-15};
  const double ys[3] = {0.0, 1.0, 0.0};
  const double zs[3] = {0.0, -1.0, 0.0};
  for (const Variant v : testable_variants()) {
    simd::force_variant(v);
    uint8_t mask[3];
    simd::aabb_mask(xs, ys, zs, 3, lo, hi, mask);
    CHECK(mask[0] == 1);
    CHECK(mask[1] == 1);
    CHECK(mask[2] == 0);
  }
}

TEST_CASE("variant names and availability are sane") {
  CHECK(std::strcmp(simd::variant_name(Variant::scalar), "scalar") == 0);
  CHECK(simd::variant_available(Variant::scalar));
  // The active variant must be one the machine can actually run.
  CHECK(simd::variant_available(simd::active_variant()));
}
