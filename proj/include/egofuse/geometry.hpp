#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "egofuse/mathutil.hpp"
#include "egofuse/simd_kernels.hpp"

namespace egofuse::geom {

// Point cloud in structure-of-arrays layout; the SIMD kernels scan it without
// gathering.
struct Cloud {
  std::vector<double> xs, ys, zs;

  size_t size() const { return xs.size(); }
  bool empty() const { return xs.empty(); }
  void reserve(size_t n) {
    xs.reserve(n);
    ys.reserve(n);
    zs.reserve(n);
  }
  void push(const Vec3& p) {
    xs.push_back(p.x());
    ys.push_back(p.y());
    zs.push_back(p.z());
  }
  Vec3 get(size_t i) const { return {xs[i], ys[i], zs[i]}; }
  void set(size_t i, const Vec3& p) {
    xs[i] = p.x();
    ys[i] = p.y();
    zs[i] = p.z();
  }
  static Cloud from(const std::vector<Vec3>& pts) {
    Cloud c;
    c.reserve(pts.size());
    for (const auto& p : pts) c.push(p);
    return c;
  }
  std::vector<Vec3> to_vectors() const {
    std::vector<Vec3> out(size());
    for (size_t i = 0; i < size(); ++i) out[i] = get(i);
    return out;
  }
};

// Exact nearest neighbor: always returns what a brute-force scan over the
// original array would, including the lowest-index rule among exact ties.
// Leaves are scanned with the SIMD kernel; each leaf holds its points in
// ascending original-index order so in-leaf ties resolve correctly.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Cloud& pts);

  size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  // d2 and the original point index; idx == -1 when the tree is empty.
  simd::MinHit nearest(const Vec3& q) const;
  double nearest_dist(const Vec3& q) const;

  // The k nearest points, ascending by (d2, original index) — the exact
  // brute-force ranking. Returns fewer than k when the tree is smaller.
  std::vector<simd::MinHit> knn(const Vec3& q, int k) const;

 private:
  struct Node {
    int32_t axis = -1;  // -1: leaf
    double split = 0.0;
    int32_t right = -1;        // index of right child (left child is self+1)
    int32_t begin = 0, end = 0;  // leaf range into the reordered arrays
  };
  int32_t build(int32_t begin, int32_t end);

  std::vector<Node> nodes_;
  std::vector<double> xs_, ys_, zs_;  // reordered
  std::vector<int32_t> order_;        // reordered slot -> original index
};

// Mean nearest-neighbor distance (and squared variant) from every point of
// `from` to the tree. 0 for an empty `from`; requires a non-empty tree.
double mean_nn_dist(const Cloud& from, const KdTree& to);
double mean_nn_sqdist(const Cloud& from, const KdTree& to);

// Exact closest point on a triangle.
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Barycentric coordinates of p's projection onto the triangle's plane,
// clamped to the simplex; exact for p already on the triangle. A degenerate
// triangle yields the weights of its nearest vertex.
Vec3 barycentric_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Distance and ray queries against a triangle mesh through an axis-aligned
// bounding volume tree. The topology is fixed at construction; refit() moves
// the vertices (cheap, done per optimizer iteration for the body mesh) and
// recomputes boxes and face normals. All queries are deterministic: exact
// ties resolve to the lowest face index.
class MeshDistanceIndex {
 public:
  struct Hit {
    double d2 = std::numeric_limits<double>::infinity();
    int32_t face = -1;
    Vec3 closest = Vec3::Zero();
  };
  struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    int32_t face = -1;
  };

  MeshDistanceIndex() = default;
  MeshDistanceIndex(std::vector<Vec3> verts, std::vector<std::array<int32_t, 3>> faces);

  void refit(const std::vector<Vec3>& verts);  // same topology, new positions

  Hit closest(const Vec3& q) const;
  RayHit raycast(const Vec3& origin, const Vec3& dir, double tmin = 1e-9,
                 double tmax = std::numeric_limits<double>::infinity()) const;

  const std::vector<Vec3>& face_normals() const { return face_normals_; }  // unit
  const std::vector<Vec3>& verts() const { return verts_; }
  const std::vector<std::array<int32_t, 3>>& faces() const { return faces_; }
  bool empty() const { return faces_.empty(); }

 private:
  struct Node {
    Vec3 lo, hi;
    int32_t right = -1;          // inner: right child (left is self+1)
    int32_t begin = 0, end = 0;  // leaf: range into face_order_
    bool leaf() const { return right < 0; }
  };
  int32_t build(int32_t begin, int32_t end, std::vector<Vec3>* centroids);
  void refit_boxes(int32_t node);

  std::vector<Vec3> verts_;
  std::vector<std::array<int32_t, 3>> faces_;
  std::vector<Vec3> face_normals_;
  std::vector<Node> nodes_;
  std::vector<int32_t> face_order_;
};

// Faces of the 3D convex hull, wound outward. Empty result means the input is
// degenerate: fewer than four points in general position.
std::vector<std::array<int32_t, 3>> convex_hull(const std::vector<Vec3>& pts);

// Indices of the points visible from `viewpoint`, decided by spherical
// flipping: points are reflected about a sphere of radius max_dist * 10^gamma
// and the visible set is what lands on the convex hull of the flipped cloud
// plus the viewpoint. Degenerate clouds (hull fails) count as fully visible.
std::vector<int32_t> hidden_point_removal(const std::vector<Vec3>& pts,
                                          const Vec3& viewpoint, double gamma = 2.0);

// Axis-aligned box, inclusive on both faces.
struct AlignedBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return lo.x() <= p.x() && p.x() <= hi.x() && lo.y() <= p.y() && p.y() <= hi.y() &&
           lo.z() <= p.z() && p.z() <= hi.z();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

// Original indices of the points inside the box, ascending.
std::vector<int32_t> crop_indices(const Cloud& pts, const AlignedBox& box);

// Plane n.x + d = 0 with unit n.
struct Plane {
  Vec3 n = Vec3::UnitZ();
  double d = 0.0;
  double signed_distance(const Vec3& p) const { return n.dot(p) + d; }
};

inline void orient_toward(Plane* pl, const Vec3& hint) {
  if (pl->n.dot(hint) < 0.0) {
    pl->n = -pl->n;
    pl->d = -pl->d;
  }
}

// Flips the plane so `p` lies on its positive side. A point within `eps` of
// the plane gives no signal; then the normal is made lexicographically
// positive (z, then y, then x) so the result is still deterministic.
void orient_toward_point(Plane* pl, const Vec3& p, double eps = 1e-9);

struct PlaneFit {
  Plane plane;
  std::vector<int32_t> inliers;
};

// Seeded plane fit: fixed iteration budget of random minimal samples, best
// inlier count wins (first found on ties), then a least-squares refit over
// the inliers and one final inlier recount. Deterministic for a given seed.
PlaneFit ransac_plane(const std::vector<Vec3>& pts, double inlier_dist, uint64_t seed,
                      int iters = 256);

// Ray/triangle intersection parameter (no backface culling); +infinity when
// the ray misses or runs parallel. Negative values mean the hit is behind
// the origin; callers clamp to their own range.
double ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                    const Vec3& c);

// Rotation minimizing sum ||R (a_i - mean(a)) - (b_i - mean(b))||^2.
Mat3 procrustes_rotation(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Angle of the rotation about unit axis `u` closest (Frobenius) to R.
double rotation_angle_about(const Mat3& R, const Vec3& u);

struct IcpOptions {
  int max_iters = 30;
  double max_corr_dist = 0.5;  // pairs farther than this are dropped
  bool translation_only = false;
  double tol = 1e-6;  // rms improvement below this counts as converged
};

struct IcpResult {
  RigidTransform transform;  // maps source into target
  double rms = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
  bool diverged = false;  // result is the best state seen, not the last
};

// Point-to-point alignment of `source` onto `target` starting from `init`;
// `target_tree` must be built over `target`. Tracks the best rms seen; if the
// error grows instead of settling the best state is returned with `diverged`
// set.
IcpResult icp_point(const Cloud& source, const Cloud& target, const KdTree& target_tree,
                    const RigidTransform& init, const IcpOptions& opts);

}  // namespace egofuse::geom
