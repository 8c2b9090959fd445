#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "doctest.h"
#include "egofuse/body_model.hpp"
#include "egofuse/geometry.hpp"
#include "egofuse/rng.hpp"
#include "egofuse/sensor.hpp"

using namespace egofuse;
using namespace egofuse::sensor;

namespace {

// Independent intersection: solve the barycentric system with a pivoted LU
// instead of the cross-product form used by the library.
double oracle_ray_tri(const Vec3& o, const Vec3& d, const Vec3& A, const Vec3& B,
                      const Vec3& C) {
  Mat3 M;
  M.col(0) = B - A;
  M.col(1) = C - A;
  M.col(2) = -d;
  if (std::abs(M.determinant()) < 1e-13) return std::numeric_limits<double>::infinity();
  const Vec3 s = M.fullPivLu().solve(o - A);
  if (s[0] < 0.0 || s[0] > 1.0 || s[1] < 0.0 || s[0] + s[1] > 1.0)
    return std::numeric_limits<double>::infinity();
  return s[2];
}

// Every grid ray against every face; nearest in-range hit per cell, lowest
// face on ties. Ordered by (el, az).
std::vector<Vec3> oracle_grid(const SensorSpec& spec, const std::vector<Vec3>& verts,
                              const std::vector<std::array<int32_t, 3>>& faces,
                              const std::vector<int32_t>& subset) {
  std::map<std::pair<int32_t, int32_t>, std::pair<double, int32_t>> best;
  std::vector<int32_t> order = subset;
  std::sort(order.begin(), order.end());
  for (int32_t el = 0; el < spec.beams; ++el) {
    for (int32_t az = 0; az < spec.columns; ++az) {
      const Vec3 dir = cell_direction(spec, {az, el});
      for (const int32_t f : order) {
        const double t = oracle_ray_tri(Vec3::Zero(), dir, verts[faces[f][0]],
                                        verts[faces[f][1]], verts[faces[f][2]]);
        if (t < spec.min_range || t > spec.max_range) continue;
        const auto key = std::make_pair(el, az);
        const auto it = best.find(key);
        if (it == best.end())
          best.emplace(key, std::make_pair(t, f));
        else if (t < it->second.first)
          it->second = {t, f};
      }
    }
  }
  std::vector<Vec3> out;
  for (const auto& [key, hit] : best)
    out.push_back(hit.first * cell_direction(spec, {key.second, key.first}));
  return out;
}

void check_same_points(const std::vector<Vec3>& got, const std::vector<Vec3>& want) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK((got[i] - want[i]).norm() < 1e-9);
}

}  // namespace

TEST_CASE("grid cells round trip through their center directions") {
  SensorSpec spec;
  spec.vertical_fov_deg = 30.0;
  spec.beams = 8;
  spec.columns = 16;
  for (int32_t el = 0; el < spec.beams; ++el)
    for (int32_t az = 0; az < spec.columns; ++az) {
      const GridCell cell{az, el};
      GridCell back;
      REQUIRE(cell_of(spec, 2.0 * cell_direction(spec, cell), &back));
      CHECK(back == cell);
    }
}

TEST_CASE("points outside the field of view or range have no cell") {
  SensorSpec spec;  // 45 degree fov: rows span elevation [-22.5, 22.5)
  GridCell cell;
  CHECK(cell_of(spec, Vec3(5, 0, 0), &cell));
  CHECK_FALSE(cell_of(spec, Vec3(5, 0, 5 * std::tan(0.5)), &cell));   // above
  CHECK_FALSE(cell_of(spec, Vec3(5, 0, -5 * std::tan(0.5)), &cell));  // below
  CHECK_FALSE(cell_of(spec, Vec3(0.1, 0, 0), &cell));                 // too close
  CHECK_FALSE(cell_of(spec, Vec3(100, 0, 0), &cell));                 // too far
  // Bottom edge inclusive, top exclusive.
  const double half = 0.5 * spec.vertical_fov_deg * kPi / 180.0;
  CHECK(cell_of(spec, 4.0 * Vec3(std::cos(-half + 1e-9), 0, std::sin(-half + 1e-9)), &cell));
  CHECK(cell.el == 0);
  CHECK_FALSE(cell_of(spec, 4.0 * Vec3(std::cos(half + 1e-9), 0, std::sin(half + 1e-9)), &cell));
  CHECK(cell_of(spec, 4.0 * Vec3(std::cos(half - 1e-9), 0, std::sin(half - 1e-9)), &cell));
  CHECK(cell.el == spec.beams - 1);
}

TEST_CASE("sensor spec validation rejects nonsense") {
  SensorSpec spec;
  CHECK_NOTHROW(spec.validate());
  SensorSpec bad = spec;
  bad.beams = 0;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.vertical_fov_deg = 0.0;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.min_range = 2.0;
  bad.max_range = 1.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("grid sampling of a body matches the exhaustive cast") {
  const body::BodyModel model = body::make_test_body(1.0);
  std::vector<Vec3> verts = model.template_verts;
  for (Vec3& v : verts) v += Vec3(3.0, 0.4, 0.2);

  SensorSpec spec;
  spec.vertical_fov_deg = 40.0;
  spec.beams = 32;
  spec.columns = 256;
  spec.min_range = 0.5;
  spec.max_range = 20.0;

  std::vector<int32_t> all(model.faces.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int32_t>(i);

  const auto got = sample_mesh_on_grid(spec, verts, model.faces);
  const auto want = oracle_grid(spec, verts, model.faces, all);
  CHECK(got.size() > 50);  // the battery is not vacuous
  check_same_points(got, want);
}

TEST_CASE("grid sampling handles the azimuth seam") {
  const std::vector<Vec3> verts = {{-2.0, -0.5, 0.1}, {-2.0, 0.5, 0.2}, {-2.5, 0.0, -0.2}};
  const std::vector<std::array<int32_t, 3>> faces = {{0, 1, 2}};
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 16;
  spec.columns = 128;
  spec.min_range = 0.3;
  spec.max_range = 10.0;
  const auto got = sample_mesh_on_grid(spec, verts, faces);
  const auto want = oracle_grid(spec, verts, faces, {0});
  CHECK(got.size() > 10);
  check_same_points(got, want);
}

TEST_CASE("grid sampling sees a huge ground plane under the sensor") {
  // Vertex elevations alone badly underestimate the footprint here; the
  // sweep fallback has to cover the dip below the sensor.
  const std::vector<Vec3> verts = {
      {-50.0, -50.0, -1.5}, {50.0, -50.0, -1.5}, {50.0, 50.0, -1.5}, {-50.0, 50.0, -1.5}};
  const std::vector<std::array<int32_t, 3>> faces = {{0, 1, 2}, {0, 2, 3}};
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 24;
  spec.columns = 96;
  spec.min_range = 0.3;
  spec.max_range = 60.0;
  const auto got = sample_mesh_on_grid(spec, verts, faces);
  const auto want = oracle_grid(spec, verts, faces, {0, 1});
  CHECK(got.size() > 500);
  check_same_points(got, want);
}

TEST_CASE("face subset order does not change the sampling") {
  const body::BodyModel model = body::make_test_body(0.6);
  std::vector<Vec3> verts = model.template_verts;
  for (Vec3& v : verts) v += Vec3(-2.5, 1.0, 0.0);
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 24;
  spec.columns = 128;

  std::vector<int32_t> fwd(model.faces.size());
  for (size_t i = 0; i < fwd.size(); ++i) fwd[i] = static_cast<int32_t>(i);
  std::vector<int32_t> rev(fwd.rbegin(), fwd.rend());
  Rng rng(3);
  std::vector<int32_t> shuffled = fwd;
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);

  const auto a = sample_faces_on_grid(spec, verts, model.faces, fwd);
  const auto b = sample_faces_on_grid(spec, verts, model.faces, rev);
  const auto c = sample_faces_on_grid(spec, verts, model.faces, shuffled);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == c.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i] - b[i]).norm() == 0.0);
    CHECK((a[i] - c[i]).norm() == 0.0);
  }
}

TEST_CASE("grid compatibility keeps one nearest point per cell") {
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 16;
  spec.columns = 64;

  const Vec3 d0 = cell_direction(spec, {10, 8});
  const Vec3 d1 = cell_direction(spec, {11, 8});
  const std::vector<Vec3> pts = {
      3.0 * d0,                  // 0: same cell as 1, farther
      2.0 * d0,                  // 1: survives
      5.0 * d1,                  // 2: own cell, survives
      Vec3(0.05, 0.0, 0.0),      // 3: below min range
      Vec3(5.0, 0.0, 4.0),       // 4: above the FOV
      2.0 * d0,                  // 5: exact tie with 1 -> lowest index wins
  };
  const auto kept = grid_compatible_subset(spec, pts);
  CHECK(kept == std::vector<int32_t>{1, 2});
}

TEST_CASE("grid compatibility is the identity for well separated points") {
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 16;
  spec.columns = 64;
  std::vector<Vec3> pts;
  for (int32_t el = 0; el < spec.beams; el += 2)
    for (int32_t az = 0; az < spec.columns; az += 4)
      pts.push_back(4.0 * cell_direction(spec, {az, el}));
  std::vector<int32_t> all(pts.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int32_t>(i);
  CHECK(grid_compatible_subset(spec, pts) == all);
}

TEST_CASE("detailed grid samples agree with the plain sampler") {
  SensorSpec spec;
  spec.vertical_fov_deg = 45.0;
  spec.beams = 48;
  spec.columns = 256;
  // Two quads at different ranges so some cells must pick the nearer face.
  const std::vector<Vec3> verts = {
      {3, -0.8, -0.6}, {3, 0.8, -0.6}, {3, 0.8, 0.6},  {3, -0.8, 0.6},
      {2, -0.3, -0.2}, {2, 0.3, -0.2}, {2, 0.3, 0.25}, {2, -0.3, 0.25},
  };
  const std::vector<std::array<int32_t, 3>> faces = {
      {0, 1, 2}, {0, 2, 3}, {4, 5, 6}, {4, 6, 7}};
  const std::vector<int32_t> subset = {0, 1, 2, 3};

  const auto pts = sample_faces_on_grid(spec, verts, faces, subset);
  const auto det = sample_faces_on_grid_detailed(spec, verts, faces, subset);
  REQUIRE(!det.empty());
  REQUIRE(det.size() == pts.size());
  bool near_face = false, far_face = false;
  for (size_t i = 0; i < det.size(); ++i) {
    CHECK((det[i].point - pts[i]).norm() == 0.0);
    CHECK(det[i].face >= 0);
    CHECK(det[i].face < 4);
    near_face |= det[i].face >= 2;
    far_face |= det[i].face < 2;
    // The point lies on the cell ray at range t and on the resolved face.
    const Vec3 dir = cell_direction(spec, det[i].cell);
    CHECK((det[i].point - det[i].t * dir).norm() < 1e-12);
    const auto& fc = faces[det[i].face];
    const Vec3 bc = geom::barycentric_on_triangle(det[i].point, verts[fc[0]],
                                                  verts[fc[1]], verts[fc[2]]);
    const Vec3 on = bc.x() * verts[fc[0]] + bc.y() * verts[fc[1]] + bc.z() * verts[fc[2]];
    CHECK((on - det[i].point).norm() < 1e-9);
  }
  CHECK(near_face);
  CHECK(far_face);

  // Restricting to the far quad must reuse the same rays and tie rules.
  const auto far_only = sample_faces_on_grid_detailed(spec, verts, faces, {0, 1});
  for (const auto& s : far_only) CHECK(s.face < 2);
  CHECK(far_only.size() >= det.size());
}
