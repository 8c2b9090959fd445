#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "egofuse/geometry.hpp"
#include "egofuse/mathutil.hpp"

namespace egofuse::sensor {

// Spinning range sensor: full 360 degree azimuth sweep, a vertical fan of
// beams centered on the horizon. Cells are (column, row) bins of angular
// size azimuth_spacing x elevation_spacing with directions at bin centers.
struct SensorSpec {
  double vertical_fov_deg = 45.0;
  int beams = 128;     // elevation rows
  int columns = 1024;  // azimuth steps per revolution
  double min_range = 0.3;
  double max_range = 60.0;

  double elevation_spacing() const { return vertical_fov_deg * kPi / 180.0 / beams; }
  double azimuth_spacing() const { return 2.0 * kPi / columns; }

  void validate() const;
};

struct GridCell {
  int32_t az = 0;  // [0, columns)
  int32_t el = 0;  // [0, beams)

  friend bool operator==(const GridCell& a, const GridCell& b) {
    return a.az == b.az && a.el == b.el;
  }
};

// Unit direction of the cell center in the sensor frame: azimuth about +z
// from +x, elevation from the horizontal plane.
Vec3 cell_direction(const SensorSpec& spec, const GridCell& cell);

// Cell seeing the point; false when it falls outside the vertical FOV
// (bottom edge inclusive, top exclusive) or outside [min_range, max_range].
bool cell_of(const SensorSpec& spec, const Vec3& p, GridCell* out);

// One resolved grid return: the cell, the face it hit, the range along the
// cell ray and the resulting point (sensor frame).
struct GridSample {
  GridCell cell;
  int32_t face = -1;
  double t = 0.0;
  Vec3 point = Vec3::Zero();
};

// Casts the grid rays that could see the given faces and keeps the nearest
// in-range triangle hit per cell (lowest face index on exact ties). Points
// come back in the sensor frame ordered by (el, az) cell. This is what the
// sensor would return for that surface; only cells overlapping the faces
// are visited, so the cost scales with the surface's angular footprint.
std::vector<Vec3> sample_faces_on_grid(const SensorSpec& spec, const std::vector<Vec3>& verts,
                                       const std::vector<std::array<int32_t, 3>>& faces,
                                       const std::vector<int32_t>& face_subset);

// Same rays and tie rules, keeping which face each cell resolved to.
std::vector<GridSample> sample_faces_on_grid_detailed(
    const SensorSpec& spec, const std::vector<Vec3>& verts,
    const std::vector<std::array<int32_t, 3>>& faces,
    const std::vector<int32_t>& face_subset);

// All faces of the mesh.
std::vector<Vec3> sample_mesh_on_grid(const SensorSpec& spec, const std::vector<Vec3>& verts,
                                      const std::vector<std::array<int32_t, 3>>& faces);

// Indices (ascending) of the points the grid could actually have produced:
// out-of-FOV and out-of-range points are dropped, and of several points in
// one cell only the nearest survives (lowest index on exact ties).
std::vector<int32_t> grid_compatible_subset(const SensorSpec& spec,
                                            const std::vector<Vec3>& pts);

}  // namespace egofuse::sensor
