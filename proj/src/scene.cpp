#include "egofuse/scene.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <string>

#include "egofuse/parallel.hpp"

namespace egofuse::geom {

void SceneMap::validate() const {
  const bool mesh = !faces.empty();
  const bool pts = !points.empty();
  if (mesh == pts)
    throw std::runtime_error("scene: need exactly one of mesh faces or points");
  if (mesh) {
    if (verts.empty()) throw std::runtime_error("scene: mesh without vertices");
    if (!normals.empty())
      throw std::runtime_error("scene: mesh normals are derived, not stored");
    const auto n = static_cast<int32_t>(verts.size());
    for (size_t f = 0; f < faces.size(); ++f) {
      for (const int32_t v : faces[f])
        if (v < 0 || v >= n)
          throw std::runtime_error("scene: face " + std::to_string(f) +
                                   " references vertex " + std::to_string(v));
      const Vec3 cr = (verts[faces[f][1]] - verts[faces[f][0]])
                          .cross(verts[faces[f][2]] - verts[faces[f][0]]);
      if (cr.norm() < 1e-20)
        throw std::runtime_error("scene: degenerate face " + std::to_string(f));
    }
    for (const Vec3& v : verts)
      if (!v.allFinite()) throw std::runtime_error("scene: non-finite vertex");
  } else {
    if (normals.size() != points.size())
      throw std::runtime_error("scene: point scene needs one normal per point");
    for (size_t i = 0; i < points.size(); ++i) {
      if (!points.get(i).allFinite() || !normals[i].allFinite())
        throw std::runtime_error("scene: non-finite point or normal");
      if (std::abs(normals[i].norm() - 1.0) > 1e-6)
        throw std::runtime_error("scene: normal " + std::to_string(i) +
                                 " is not unit length");
    }
  }
  if (!ground.empty() && ground.size() != elements())
    throw std::runtime_error("scene: ground mask must cover every element");
}

void estimate_scene_normals(SceneMap* map, int knn, const std::vector<Vec3>& toward) {
  if (map->is_mesh()) throw std::runtime_error("scene: mesh normals are derived");
  const size_t n = map->points.size();
  if (n == 0) throw std::runtime_error("scene: no points to estimate normals for");
  if (knn < 3) throw std::runtime_error("scene: normal estimation needs knn >= 3");

  const KdTree tree(map->points);
  map->normals.assign(n, Vec3::UnitZ());
  parallel_for(static_cast<int64_t>(n), [&](int64_t i) {
    const Vec3 q = map->points.get(i);
    const auto nbrs = tree.knn(q, knn);
    Vec3 mean = Vec3::Zero();
    for (const auto& h : nbrs) mean += map->points.get(h.idx);
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& h : nbrs) {
      const Vec3 d = map->points.get(h.idx) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 nrm = eig.eigenvectors().col(0);  // smallest-variance direction
    const double len = nrm.norm();
    nrm = len > 0.0 ? Vec3(nrm / len) : Vec3::UnitZ();

    if (!toward.empty()) {
      double best = std::numeric_limits<double>::infinity();
      Vec3 hint = toward.front();
      for (const Vec3& t : toward) {
        const double d = (t - q).squaredNorm();
        if (d < best) {
          best = d;
          hint = t;
        }
      }
      if (nrm.dot(hint - q) < 0.0) nrm = -nrm;
    } else {
      Plane pl{nrm, -nrm.dot(q)};
      orient_toward_point(&pl, q + Vec3::UnitZ());  // upward, lexicographic on ties
      nrm = pl.n;
    }
    map->normals[i] = nrm;
  });
}

SceneIndex::SceneIndex(const SceneMap& map) {
  map.validate();
  mesh_ = map.is_mesh();
  if (mesh_) {
    mesh_all_ = MeshDistanceIndex(map.verts, map.faces);
    std::vector<std::array<int32_t, 3>> gfaces;
    for (size_t f = 0; f < map.ground.size(); ++f)
      if (map.ground[f]) gfaces.push_back(map.faces[f]);
    if (!gfaces.empty()) {
      mesh_ground_ = MeshDistanceIndex(map.verts, std::move(gfaces));
      has_ground_ = true;
    }
  } else {
    points_ = map.points;
    normals_ = map.normals;
    pts_all_ = KdTree(points_);
    Cloud gpts;
    for (size_t i = 0; i < map.ground.size(); ++i) {
      if (map.ground[i]) {
        ground_ids_.push_back(static_cast<int32_t>(i));
        gpts.push(points_.get(i));
      }
    }
    if (!gpts.empty()) {
      pts_ground_ = KdTree(gpts);
      has_ground_ = true;
    }
  }
}

SurfaceHit SceneIndex::closest(const Vec3& q) const {
  SurfaceHit out;
  if (mesh_) {
    const auto hit = mesh_all_.closest(q);
    out.point = hit.closest;
    out.normal = mesh_all_.face_normals()[hit.face];
    out.d2 = hit.d2;
  } else {
    const auto hit = pts_all_.nearest(q);
    out.point = points_.get(hit.idx);
    out.normal = normals_[hit.idx];
    out.d2 = hit.d2;
  }
  return out;
}

SurfaceHit SceneIndex::closest_ground(const Vec3& q) const {
  if (!has_ground_) throw std::runtime_error("scene: no ground elements indexed");
  SurfaceHit out;
  if (mesh_) {
    const auto hit = mesh_ground_.closest(q);
    out.point = hit.closest;
    out.normal = mesh_ground_.face_normals()[hit.face];
    out.d2 = hit.d2;
  } else {
    const auto hit = pts_ground_.nearest(q);
    const int32_t orig = ground_ids_[hit.idx];
    out.point = points_.get(orig);
    out.normal = normals_[orig];
    out.d2 = hit.d2;
  }
  return out;
}

}  // namespace egofuse::geom
