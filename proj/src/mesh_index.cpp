#include <algorithm>
#include <numeric>

#include "egofuse/geometry.hpp"

namespace egofuse::geom {

namespace {
constexpr int32_t kLeafFaces = 8;
}

// Voronoi-region closest point (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  return a + (vb * denom) * ab + (vc * denom) * ac;
}

Vec3 barycentric_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = b - a, v1 = c - a, v2 = p - a;
  const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
  const double d20 = v2.dot(v0), d21 = v2.dot(v1);
  const double denom = d00 * d11 - d01 * d01;
  if (denom <= 1e-30) {
    // Degenerate: weight the nearest vertex fully.
    const double da = (p - a).squaredNorm(), db = (p - b).squaredNorm(),
                 dc = (p - c).squaredNorm();
    if (da <= db && da <= dc) return {1.0, 0.0, 0.0};
    if (db <= dc) return {0.0, 1.0, 0.0};
    return {0.0, 0.0, 1.0};
  }
  double v = (d11 * d20 - d01 * d21) / denom;
  double w = (d00 * d21 - d01 * d20) / denom;
  double u = 1.0 - v - w;
  if (u >= 0.0 && v >= 0.0 && w >= 0.0) return {u, v, w};
  // Outside: coordinates of the closest surface point, which lie inside up
  // to roundoff.
  const Vec3 q = closest_on_triangle(p, a, b, c) - a;
  const double q0 = q.dot(v0), q1 = q.dot(v1);
  v = std::max((d11 * q0 - d01 * q1) / denom, 0.0);
  w = std::max((d00 * q1 - d01 * q0) / denom, 0.0);
  u = std::max(1.0 - v - w, 0.0);
  const double s = u + v + w;
  return {u / s, v / s, w / s};
}

MeshDistanceIndex::MeshDistanceIndex(std::vector<Vec3> verts,
                                     std::vector<std::array<int32_t, 3>> faces)
    : verts_(std::move(verts)), faces_(std::move(faces)) {
  const int32_t nf = static_cast<int32_t>(faces_.size());
  if (nf == 0) return;
  face_order_.resize(nf);
  std::iota(face_order_.begin(), face_order_.end(), 0);
  std::vector<Vec3> centroids(nf);
  for (int32_t f = 0; f < nf; ++f)
    centroids[f] = (verts_[faces_[f][0]] + verts_[faces_[f][1]] + verts_[faces_[f][2]]) / 3.0;
  nodes_.reserve(2 * (nf / kLeafFaces + 1));
  build(0, nf, &centroids);
  refit(verts_);
}

int32_t MeshDistanceIndex::build(int32_t begin, int32_t end,
                                 std::vector<Vec3>* centroids) {
  const int32_t me = static_cast<int32_t>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafFaces) {
    // Lowest original face index first, so equal-distance scans resolve
    // deterministically without extra comparisons.
    std::sort(face_order_.begin() + begin, face_order_.begin() + end);
    nodes_[me].begin = begin;
    nodes_[me].end = end;
    return me;
  }
  Vec3 lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
  for (int32_t i = begin; i < end; ++i) {
    const Vec3& c = (*centroids)[face_order_[i]];
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  int axis = 0;
  const Vec3 ext = hi - lo;
  if (ext.y() > ext.x()) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  const int32_t mid = begin + (end - begin) / 2;
  std::nth_element(
      face_order_.begin() + begin, face_order_.begin() + mid, face_order_.begin() + end,
      [&](int32_t a, int32_t b) { return (*centroids)[a][axis] < (*centroids)[b][axis]; });
  nodes_[me].begin = begin;  // kept for refit traversal of inner nodes
  nodes_[me].end = end;
  build(begin, mid, centroids);
  nodes_[me].right = build(mid, end, centroids);
  return me;
}

void MeshDistanceIndex::refit(const std::vector<Vec3>& verts) {
  verts_ = verts;
  face_normals_.resize(faces_.size());
  for (size_t f = 0; f < faces_.size(); ++f) {
    const Vec3 n = (verts_[faces_[f][1]] - verts_[faces_[f][0]])
                       .cross(verts_[faces_[f][2]] - verts_[faces_[f][0]]);
    const double len = n.norm();
    face_normals_[f] = len > 1e-20 ? Vec3(n / len) : Vec3::Zero();
  }
  if (!nodes_.empty()) refit_boxes(0);
}

void MeshDistanceIndex::refit_boxes(int32_t node) {
  Node& nd = nodes_[node];
  if (nd.leaf()) {
    Vec3 lo(1e300, 1e300, 1e300), hi(-1e300, -1e300, -1e300);
    for (int32_t i = nd.begin; i < nd.end; ++i) {
      const auto& f = faces_[face_order_[i]];
      for (int c = 0; c < 3; ++c) {
        lo = lo.cwiseMin(verts_[f[c]]);
        hi = hi.cwiseMax(verts_[f[c]]);
      }
    }
    nd.lo = lo;
    nd.hi = hi;
    return;
  }
  refit_boxes(node + 1);
  refit_boxes(nd.right);
  nd.lo = nodes_[node + 1].lo.cwiseMin(nodes_[nd.right].lo);
  nd.hi = nodes_[node + 1].hi.cwiseMax(nodes_[nd.right].hi);
}

namespace {

double box_sqdist(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double v = q[k] < lo[k] ? lo[k] - q[k] : (q[k] > hi[k] ? q[k] - hi[k] : 0.0);
    d2 += v * v;
  }
  return d2;
}

// Slab test; returns entry t or infinity on miss.
double box_ray_enter(const Vec3& o, const Vec3& inv_d, const Vec3& lo, const Vec3& hi,
                     double tmin, double tmax) {
  double t0 = tmin, t1 = tmax;
  for (int k = 0; k < 3; ++k) {
    double a = (lo[k] - o[k]) * inv_d[k];
    double b = (hi[k] - o[k]) * inv_d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

}  // namespace

// Moller-Trumbore, no backface culling.
double ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                    const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::numeric_limits<double>::infinity();
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
  return e2.dot(qv) * inv;
}

MeshDistanceIndex::Hit MeshDistanceIndex::closest(const Vec3& q) const {
  Hit best;
  if (nodes_.empty()) return best;
  int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const int32_t ni = stack[--top];
    const Node& nd = nodes_[ni];
    if (box_sqdist(q, nd.lo, nd.hi) > best.d2) continue;
    if (nd.leaf()) {
      for (int32_t i = nd.begin; i < nd.end; ++i) {
        const int32_t f = face_order_[i];
        const Vec3 cp = closest_on_triangle(q, verts_[faces_[f][0]], verts_[faces_[f][1]],
                                            verts_[faces_[f][2]]);
        const double d2 = (cp - q).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && f < best.face)) {
          best.d2 = d2;
          best.face = f;
          best.closest = cp;
        }
      }
      continue;
    }
    // Nearer child on top of the stack.
    const int32_t l = ni + 1, r = nd.right;
    const double dl = box_sqdist(q, nodes_[l].lo, nodes_[l].hi);
    const double dr = box_sqdist(q, nodes_[r].lo, nodes_[r].hi);
    if (dl <= dr) {
      stack[top++] = r;
      stack[top++] = l;
    } else {
      stack[top++] = l;
      stack[top++] = r;
    }
  }
  return best;
}

MeshDistanceIndex::RayHit MeshDistanceIndex::raycast(const Vec3& origin, const Vec3& dir,
                                                     double tmin, double tmax) const {
  RayHit best;
  if (nodes_.empty()) return best;
  const Vec3 inv_d(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const int32_t ni = stack[--top];
    const Node& nd = nodes_[ni];
    const double enter =
        box_ray_enter(origin, inv_d, nd.lo, nd.hi, tmin, std::min(tmax, best.t));
    if (!(enter <= best.t)) continue;
    if (nd.leaf()) {
      for (int32_t i = nd.begin; i < nd.end; ++i) {
        const int32_t f = face_order_[i];
        const double t = ray_triangle(origin, dir, verts_[faces_[f][0]],
                                      verts_[faces_[f][1]], verts_[faces_[f][2]]);
        if (t < tmin || t > tmax) continue;
        if (t < best.t || (t == best.t && f < best.face)) {
          best.t = t;
          best.face = f;
        }
      }
      continue;
    }
    const int32_t l = ni + 1, r = nd.right;
    const double el = box_ray_enter(origin, inv_d, nodes_[l].lo, nodes_[l].hi, tmin,
                                    std::min(tmax, best.t));
    const double er = box_ray_enter(origin, inv_d, nodes_[r].lo, nodes_[r].hi, tmin,
                                    std::min(tmax, best.t));
    // Push the farther child first so the nearer one is processed next.
    if (el <= er) {
      if (er <= best.t) stack[top++] = r;
      if (el <= best.t) stack[top++] = l;
    } else {
      if (el <= best.t) stack[top++] = l;
      if (er <= best.t) stack[top++] = r;
    }
  }
  return best;
}

}  // namespace egofuse::geom
