#include "egofuse/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace egofuse::sensor {

void SensorSpec::validate() const {
  if (!(vertical_fov_deg > 0.0) || vertical_fov_deg > 180.0)
    throw std::invalid_argument("sensor: vertical FOV out of (0, 180]");
  if (beams < 1 || columns < 1)
    throw std::invalid_argument("sensor: need at least one beam and one column");
  if (!(min_range >= 0.0) || !(max_range > min_range))
    throw std::invalid_argument("sensor: need 0 <= min_range < max_range");
}

Vec3 cell_direction(const SensorSpec& spec, const GridCell& cell) {
  const double az = -kPi + (cell.az + 0.5) * spec.azimuth_spacing();
  const double half = 0.5 * spec.vertical_fov_deg * kPi / 180.0;
  const double el = -half + (cell.el + 0.5) * spec.elevation_spacing();
  const double ce = std::cos(el);
  return {ce * std::cos(az), ce * std::sin(az), std::sin(el)};
}

bool cell_of(const SensorSpec& spec, const Vec3& p, GridCell* out) {
  const double r = p.norm();
  if (r < spec.min_range || r > spec.max_range) return false;
  const double half = 0.5 * spec.vertical_fov_deg * kPi / 180.0;
  const double el = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  const auto row = static_cast<int64_t>(std::floor((el + half) / spec.elevation_spacing()));
  if (row < 0 || row >= spec.beams) return false;
  const double az = std::atan2(p.y(), p.x());
  auto col = static_cast<int64_t>(std::floor((az + kPi) / spec.azimuth_spacing()));
  col = ((col % spec.columns) + spec.columns) % spec.columns;  // az == +pi wraps to 0
  out->az = static_cast<int32_t>(col);
  out->el = static_cast<int32_t>(row);
  return true;
}

namespace {

// Dense cell key ordered by (el, az).
int64_t cell_key(const SensorSpec& spec, int32_t az, int32_t el) {
  return static_cast<int64_t>(el) * spec.columns + az;
}

}  // namespace

std::vector<GridSample> sample_faces_on_grid_detailed(
    const SensorSpec& spec, const std::vector<Vec3>& verts,
    const std::vector<std::array<int32_t, 3>>& faces,
    const std::vector<int32_t>& face_subset) {
  spec.validate();
  const double half = 0.5 * spec.vertical_fov_deg * kPi / 180.0;
  const double el_step = spec.elevation_spacing();
  const double az_step = spec.azimuth_spacing();

  std::vector<int32_t> subset = face_subset;
  std::sort(subset.begin(), subset.end());

  std::unordered_map<int64_t, std::pair<double, int32_t>> best;  // cell -> (t, face)
  for (const int32_t f : subset) {
    const Vec3& a = verts[faces[f][0]];
    const Vec3& b = verts[faces[f][1]];
    const Vec3& c = verts[faces[f][2]];

    // Angular footprint. The central projection of the triangle is the
    // spherical triangle of its vertex directions, whose edges are great
    // arcs; an arc can bulge past its endpoints' azimuth/elevation box by
    // at most its sagitta, about (arc length)^2 / 8. Small faces therefore
    // get the vertex box padded by a cell plus a doubled sagitta bound;
    // anything wide (or wrapping, or touching the origin) falls back to
    // sweeping the whole dimension.
    constexpr double kSmallSpan = 0.35;  // radians
    double el_lo = kPi, el_hi = -kPi;
    bool wide = false;
    const Vec3 vs[3] = {a, b, c};
    Vec3 dirs[3];
    double azs[3];
    for (int i = 0; i < 3; ++i) {
      const double r = vs[i].norm();
      if (r < 1e-9) {
        wide = true;
        break;
      }
      dirs[i] = vs[i] / r;
      const double el = std::asin(std::clamp(dirs[i].z(), -1.0, 1.0));
      el_lo = std::min(el_lo, el);
      el_hi = std::max(el_hi, el);
      azs[i] = std::atan2(vs[i].y(), vs[i].x());
    }

    double diameter = 0.0;
    if (!wide) {
      for (int i = 0; i < 3; ++i) {
        const double d = dirs[i].dot(dirs[(i + 1) % 3]);
        diameter = std::max(diameter, std::acos(std::clamp(d, -1.0, 1.0)));
      }
      wide = diameter > kSmallSpan;
    }

    int64_t col_lo = 0, col_hi = spec.columns - 1;
    int64_t row_lo = 0, row_hi = spec.beams - 1;
    if (!wide) {
      const double pad = 0.25 * diameter * diameter;
      // Azimuth shrinks by cos(el), so the pad grows toward the FOV edge;
      // close to a pole the box is useless and the sweep takes over.
      const double el_reach = std::min(half, std::max(std::abs(el_lo), std::abs(el_hi)) + pad);
      const double squeeze = std::cos(el_reach);
      if (squeeze < 0.2) {
        wide = true;
      } else {
        const double az_pad = pad / squeeze;
        double lo = std::min({azs[0], azs[1], azs[2]});
        double hi = std::max({azs[0], azs[1], azs[2]});
        if (hi - lo > kPi) {
          // Straddles the seam: unwrap the negative side.
          lo = kPi;
          hi = -kPi;
          for (double az : azs) {
            if (az < 0.0) az += 2.0 * kPi;
            lo = std::min(lo, az);
            hi = std::max(hi, az);
          }
        }
        col_lo = static_cast<int64_t>(std::floor((lo - az_pad - az_step + kPi) / az_step));
        col_hi = static_cast<int64_t>(std::floor((hi + az_pad + az_step + kPi) / az_step));
        if (col_hi - col_lo >= spec.columns) {
          col_lo = 0;
          col_hi = spec.columns - 1;
        }
        row_lo = static_cast<int64_t>(std::floor((el_lo - pad - el_step + half) / el_step));
        row_hi = static_cast<int64_t>(std::floor((el_hi + pad + el_step + half) / el_step));
        row_lo = std::max<int64_t>(row_lo, 0);
        row_hi = std::min<int64_t>(row_hi, spec.beams - 1);
      }
    }

    for (int64_t row = row_lo; row <= row_hi; ++row) {
      for (int64_t ci = col_lo; ci <= col_hi; ++ci) {
        const auto col =
            static_cast<int32_t>(((ci % spec.columns) + spec.columns) % spec.columns);
        GridCell cell{col, static_cast<int32_t>(row)};
        const Vec3 dir = cell_direction(spec, cell);
        const double t = geom::ray_triangle(Vec3::Zero(), dir, a, b, c);
        if (t < spec.min_range || t > spec.max_range) continue;
        const int64_t key = cell_key(spec, cell.az, cell.el);
        const auto it = best.find(key);
        if (it == best.end()) {
          best.emplace(key, std::make_pair(t, f));
        } else if (t < it->second.first) {
          it->second = {t, f};  // ascending face order makes ties keep the
                                // lowest face
        }
      }
    }
  }

  std::vector<std::pair<int64_t, std::pair<double, int32_t>>> cells(best.begin(),
                                                                    best.end());
  std::sort(cells.begin(), cells.end());

  std::vector<GridSample> out;
  out.reserve(cells.size());
  for (const auto& [key, hit] : cells) {
    GridSample s;
    s.cell = {static_cast<int32_t>(key % spec.columns),
              static_cast<int32_t>(key / spec.columns)};
    s.face = hit.second;
    s.t = hit.first;
    s.point = hit.first * cell_direction(spec, s.cell);
    out.push_back(s);
  }
  return out;
}

std::vector<Vec3> sample_faces_on_grid(const SensorSpec& spec, const std::vector<Vec3>& verts,
                                       const std::vector<std::array<int32_t, 3>>& faces,
                                       const std::vector<int32_t>& face_subset) {
  const auto samples = sample_faces_on_grid_detailed(spec, verts, faces, face_subset);
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.point);
  return out;
}

std::vector<Vec3> sample_mesh_on_grid(const SensorSpec& spec, const std::vector<Vec3>& verts,
                                      const std::vector<std::array<int32_t, 3>>& faces) {
  std::vector<int32_t> all(faces.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int32_t>(i);
  return sample_faces_on_grid(spec, verts, faces, all);
}

std::vector<int32_t> grid_compatible_subset(const SensorSpec& spec,
                                            const std::vector<Vec3>& pts) {
  spec.validate();
  std::unordered_map<int64_t, std::pair<double, int32_t>> best;  // cell -> (r2, index)
  for (size_t i = 0; i < pts.size(); ++i) {
    GridCell cell;
    if (!cell_of(spec, pts[i], &cell)) continue;
    const double r2 = pts[i].squaredNorm();
    const int64_t key = cell_key(spec, cell.az, cell.el);
    const auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(key, std::make_pair(r2, static_cast<int32_t>(i)));
    } else if (r2 < it->second.first) {
      it->second = {r2, static_cast<int32_t>(i)};
    }
  }
  std::vector<int32_t> out;
  out.reserve(best.size());
  for (const auto& [key, hit] : best) out.push_back(hit.second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace egofuse::sensor
