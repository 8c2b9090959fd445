#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "egofuse/geometry.hpp"
#include "egofuse/mathutil.hpp"

namespace egofuse::geom {

// Environment geometry for contact and collision queries. Exactly one form
// is populated: a triangle mesh (normals derived per face), or a point set
// with unit normals. `ground` flags the walkable elements — faces for a
// mesh, points otherwise — and may be empty when no contact loss runs.
struct SceneMap {
  std::vector<Vec3> verts;
  std::vector<std::array<int32_t, 3>> faces;

  Cloud points;
  std::vector<Vec3> normals;  // unit, one per point

  std::vector<uint8_t> ground;

  bool is_mesh() const { return !faces.empty(); }
  size_t elements() const { return is_mesh() ? faces.size() : points.size(); }
  void validate() const;  // throws std::runtime_error
};

// Fills `normals` of a point-form scene from a plane fit through each
// point's k nearest neighbors. Each normal is oriented toward the nearest of
// `toward` (typically sensor positions, which always see the outside), or
// made upward-positive when no hints are given.
void estimate_scene_normals(SceneMap* map, int knn = 16,
                            const std::vector<Vec3>& toward = {});

struct SurfaceHit {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double d2 = std::numeric_limits<double>::infinity();
};

// Exact nearest-surface queries over a SceneMap, optionally restricted to
// the ground elements. Ties resolve to the lowest element index.
class SceneIndex {
 public:
  SceneIndex() = default;
  explicit SceneIndex(const SceneMap& map);  // validates

  bool has_ground() const { return has_ground_; }
  SurfaceHit closest(const Vec3& q) const;
  SurfaceHit closest_ground(const Vec3& q) const;  // requires has_ground()

 private:
  bool mesh_ = false;
  bool has_ground_ = false;

  MeshDistanceIndex mesh_all_, mesh_ground_;

  KdTree pts_all_, pts_ground_;
  Cloud points_;
  std::vector<Vec3> normals_;
  std::vector<int32_t> ground_ids_;  // ascending original point ids
};

}  // namespace egofuse::geom
