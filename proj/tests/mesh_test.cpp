#include <doctest.h>

#include <cmath>

#include "egofuse/body_model.hpp"
#include "egofuse/geometry.hpp"
#include "egofuse/rng.hpp"

using namespace egofuse;
using namespace egofuse::geom;

namespace {

// Reference closest point by dense sampling of barycentric space.
Vec3 sampled_closest(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 best = a;
  double bd = (p - a).squaredNorm();
  const int n = 400;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n - i; ++j) {
      const double u = static_cast<double>(i) / n, v = static_cast<double>(j) / n;
      const Vec3 q = a + u * (b - a) + v * (c - a);
      const double d = (p - q).squaredNorm();
      if (d < bd) {
        bd = d;
        best = q;
      }
    }
  return best;
}

MeshDistanceIndex::Hit brute_closest(const std::vector<Vec3>& verts,
                                     const std::vector<std::array<int32_t, 3>>& faces,
                                     const Vec3& q) {
  MeshDistanceIndex::Hit best;
  for (size_t f = 0; f < faces.size(); ++f) {
    const Vec3 cp =
        closest_on_triangle(q, verts[faces[f][0]], verts[faces[f][1]], verts[faces[f][2]]);
    const double d2 = (cp - q).squaredNorm();
    if (d2 < best.d2) {
      best.d2 = d2;
      best.face = static_cast<int32_t>(f);
      best.closest = cp;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("closest point on triangle hits every voronoi region") {
  const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 3, 0);
  // Interior projection.
  CHECK((closest_on_triangle(Vec3(0.5, 0.5, 4), a, b, c) - Vec3(0.5, 0.5, 0)).norm() <
        1e-14);
  // Vertex regions.
  CHECK((closest_on_triangle(Vec3(-1, -1, 2), a, b, c) - a).norm() == 0.0);
  CHECK((closest_on_triangle(Vec3(4, -2, 0), a, b, c) - b).norm() == 0.0);
  CHECK((closest_on_triangle(Vec3(-0.5, 5, -1), a, b, c) - c).norm() == 0.0);
  // Edge regions.
  CHECK((closest_on_triangle(Vec3(1, -2, 0), a, b, c) - Vec3(1, 0, 0)).norm() < 1e-14);
  CHECK((closest_on_triangle(Vec3(-3, 1, 0), a, b, c) - Vec3(0, 1, 0)).norm() < 1e-14);
  // Point on the triangle: itself, up to barycentric roundoff.
  CHECK((closest_on_triangle(Vec3(0.2, 0.2, 0), a, b, c) - Vec3(0.2, 0.2, 0)).norm() <
        1e-14);
}

TEST_CASE("closest point on triangle matches dense barycentric sampling") {
  Rng rng(31);
  for (int it = 0; it < 40; ++it) {
    const Vec3 a(rng.normal(), rng.normal(), rng.normal());
    const Vec3 b(rng.normal(), rng.normal(), rng.normal());
    const Vec3 c(rng.normal(), rng.normal(), rng.normal());
    const Vec3 p(2 * rng.normal(), 2 * rng.normal(), 2 * rng.normal());
    const Vec3 exact = closest_on_triangle(p, a, b, c);
    const Vec3 approx = sampled_closest(p, a, b, c);
    // The sampled answer cannot beat the exact one by more than grid spacing.
    CHECK((p - exact).norm() <= (p - approx).norm() + 1e-12);
    CHECK((exact - approx).norm() < 0.02);
  }
}

TEST_CASE("mesh index equals brute force over all faces") {
  const auto body = body::make_test_body(0.5);
  const MeshDistanceIndex index(body.template_verts, body.faces);
  Rng rng(32);
  for (int it = 0; it < 150; ++it) {
    const Vec3 q(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.0));
    const auto ref = brute_closest(body.template_verts, body.faces, q);
    const auto got = index.closest(q);
    CHECK(got.d2 == ref.d2);
    CHECK((got.closest - ref.closest).norm() == 0.0);
  }
}

TEST_CASE("mesh index refit follows moved vertices") {
  const auto body = body::make_test_body(0.4);
  MeshDistanceIndex index(body.template_verts, body.faces);
  // Shift the whole mesh; distances must follow exactly.
  const Vec3 shift(10, -4, 2);
  std::vector<Vec3> moved = body.template_verts;
  for (auto& v : moved) v += shift;
  index.refit(moved);
  Rng rng(33);
  for (int it = 0; it < 60; ++it) {
    const Vec3 q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto ref = brute_closest(moved, body.faces, q + shift);
    const auto got = index.closest(q + shift);
    CHECK(got.d2 == ref.d2);
    CHECK(got.face == ref.face);
  }
}

TEST_CASE("face normals are unit and outward after refit") {
  const auto body = body::make_test_body(0.5);
  MeshDistanceIndex index(body.template_verts, body.faces);
  const auto& normals = index.face_normals();
  REQUIRE(normals.size() == body.faces.size());
  // Outward means a point slightly along the normal from the face centroid is
  // farther from the solid than the centroid itself.
  for (size_t f = 0; f < body.faces.size(); f += 7) {
    CHECK(normals[f].norm() == doctest::Approx(1.0));
    const Vec3 centroid = (body.template_verts[body.faces[f][0]] +
                           body.template_verts[body.faces[f][1]] +
                           body.template_verts[body.faces[f][2]]) /
                          3.0;
    const Vec3 outside = centroid + 0.003 * normals[f];
    CHECK(index.closest(outside).d2 > 0.0);
  }
}

TEST_CASE("raycast finds the first surface along the ray") {
  // Unit cube as two-triangle faces.
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                         {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  std::vector<std::array<int32_t, 3>> f = {
      {0, 2, 1}, {0, 3, 2},  // bottom
      {4, 5, 6}, {4, 6, 7},  // top
      {0, 1, 5}, {0, 5, 4},  // front
      {2, 3, 7}, {2, 7, 6},  // back
      {1, 2, 6}, {1, 6, 5},  // right
      {3, 0, 4}, {3, 4, 7},  // left
  };
  const MeshDistanceIndex cube(v, f);

  // Straight down onto the top face.
  auto hit = cube.raycast(Vec3(0.5, 0.5, 3), Vec3(0, 0, -1));
  CHECK(hit.face >= 2);
  CHECK(hit.face <= 3);
  CHECK(hit.t == doctest::Approx(2.0));

  // Through the cube: entry at the near surface, not the far one.
  hit = cube.raycast(Vec3(0.5, -2, 0.5), Vec3(0, 1, 0));
  CHECK(hit.t == doctest::Approx(2.0));
  CHECK((hit.face == 4 || hit.face == 5));

  // Miss.
  hit = cube.raycast(Vec3(5, 5, 5), Vec3(0, 0, 1));
  CHECK(hit.face == -1);

  // tmax clips hits beyond it.
  hit = cube.raycast(Vec3(0.5, 0.5, 3), Vec3(0, 0, -1), 1e-9, 1.0);
  CHECK(hit.face == -1);
}

TEST_CASE("raycast against the body matches brute force over faces") {
  const auto body = body::make_test_body(0.5);
  const MeshDistanceIndex index(body.template_verts, body.faces);
  Rng rng(34);
  int hits = 0;
  for (int it = 0; it < 120; ++it) {
    // Rays from a ring around the body aimed inward with jitter.
    const double az = rng.uniform(0, 2 * kPi);
    const Vec3 origin(3 * std::cos(az), 3 * std::sin(az), rng.uniform(-1.2, 0.9));
    const Vec3 at(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.9, 0.7));
    const Vec3 dir = (at - origin).normalized();

    const auto got = index.raycast(origin, dir);
    // Brute force reference.
    double bt = std::numeric_limits<double>::infinity();
    int32_t bf = -1;
    for (size_t fi = 0; fi < body.faces.size(); ++fi) {
      const auto& fc = body.faces[fi];
      const Vec3 a = body.template_verts[fc[0]], b = body.template_verts[fc[1]],
                 c = body.template_verts[fc[2]];
      // Reuse the index on a single-face mesh for an independent path.
      const MeshDistanceIndex one({a, b, c}, {{0, 1, 2}});
      const auto h = one.raycast(origin, dir);
      if (h.face >= 0 && (h.t < bt || (h.t == bt && static_cast<int32_t>(fi) < bf))) {
        bt = h.t;
        bf = static_cast<int32_t>(fi);
      }
    }
    CHECK(got.face == bf);
    if (bf >= 0) {
      CHECK(got.t == bt);
      hits++;
    }
  }
  // The limbs are thin, so plenty of rays miss; what matters above is that
  // every hit agreed with brute force. Just confirm the battery is not vacuous.
  CHECK(hits > 30);
}

TEST_CASE("clamped barycentrics reproduce the closest point") {
  Rng rng(73);
  for (int it = 0; it < 80; ++it) {
    const Vec3 a(rng.normal(), rng.normal(), rng.normal());
    const Vec3 b(rng.normal(), rng.normal(), rng.normal());
    const Vec3 c(rng.normal(), rng.normal(), rng.normal());
    const Vec3 p(2 * rng.normal(), 2 * rng.normal(), 2 * rng.normal());
    const Vec3 bc = barycentric_on_triangle(p, a, b, c);
    CHECK(bc.minCoeff() >= -1e-12);
    CHECK(bc.sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Vec3 combo = bc.x() * a + bc.y() * b + bc.z() * c;
    CHECK((combo - closest_on_triangle(p, a, b, c)).norm() < 1e-10);
  }
}

TEST_CASE("barycentrics of an on-triangle point are exact") {
  const Vec3 a(0.3, -1, 0.2), b(2, 0.4, -0.3), c(-0.5, 3, 1);
  const Vec3 p = 0.2 * a + 0.3 * b + 0.5 * c;
  const Vec3 bc = barycentric_on_triangle(p, a, b, c);
  CHECK((bc - Vec3(0.2, 0.3, 0.5)).norm() < 1e-12);
}

TEST_CASE("degenerate triangles yield a one-hot of the nearest corner") {
  const Vec3 a(1, 1, 1);
  CHECK((barycentric_on_triangle(Vec3(0, 0, 0), a, a, a) - Vec3(1, 0, 0)).norm() == 0.0);
  // Collinear corners, query past the far end.
  const Vec3 p(3.2, 0, 0);
  const Vec3 bc =
      barycentric_on_triangle(p, Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0));
  CHECK((bc - Vec3(0, 0, 1)).norm() == 0.0);
}
