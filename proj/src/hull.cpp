#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "egofuse/geometry.hpp"

namespace egofuse::geom {

namespace {

struct HullFace {
  int32_t v[3];
  int32_t nb[3];  // neighbor across edge (v[k], v[k+1])
  Vec3 n;         // unit outward normal
  double d;       // n.dot(x) + d = 0
  std::vector<int32_t> outside;
  int32_t far = -1;
  double far_d = 0.0;
  bool dead = false;
};

struct HullBuilder {
  const std::vector<Vec3>& pts;
  double eps;
  std::vector<HullFace> faces;
  std::vector<int32_t> pending;  // faces that may still have outside points

  explicit HullBuilder(const std::vector<Vec3>& p, double e) : pts(p), eps(e) {}

  double sd(int32_t f, int32_t p) const { return faces[f].n.dot(pts[p]) + faces[f].d; }

  int32_t add_face(int32_t a, int32_t b, int32_t c) {
    HullFace f;
    f.v[0] = a;
    f.v[1] = b;
    f.v[2] = c;
    f.nb[0] = f.nb[1] = f.nb[2] = -1;
    const Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    const double len = n.norm();
    f.n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    f.d = -f.n.dot(pts[a]);
    faces.push_back(std::move(f));
    return static_cast<int32_t>(faces.size() - 1);
  }

  void link(int32_t f, int k, int32_t g) {
    faces[f].nb[k] = g;
    const int32_t a = faces[f].v[k], b = faces[f].v[(k + 1) % 3];
    for (int j = 0; j < 3; ++j)
      if (faces[g].v[j] == b && faces[g].v[(j + 1) % 3] == a) {
        faces[g].nb[j] = f;
        return;
      }
  }

  void claim(int32_t p, const std::vector<int32_t>& candidates) {
    for (const int32_t f : candidates) {
      if (faces[f].dead) continue;
      const double s = sd(f, p);
      if (s > eps) {
        faces[f].outside.push_back(p);
        if (s > faces[f].far_d) {
          faces[f].far_d = s;
          faces[f].far = p;
        }
        return;
      }
    }
  }
};

uint64_t edge_key(int32_t a, int32_t b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
         static_cast<uint32_t>(b);
}

}  // namespace

std::vector<std::array<int32_t, 3>> convex_hull(const std::vector<Vec3>& pts) {
  const int32_t n = static_cast<int32_t>(pts.size());
  if (n < 4) return {};

  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  if (diag <= 0.0) return {};
  const double eps = 1e-9 * diag;

  // Initial tetrahedron: widest pair among the six axis extremes, then the
  // farthest point from their line, then the farthest from their plane.
  int32_t ext[6] = {0, 0, 0, 0, 0, 0};
  for (int32_t i = 1; i < n; ++i)
    for (int k = 0; k < 3; ++k) {
      if (pts[i][k] < pts[ext[2 * k]][k]) ext[2 * k] = i;
      if (pts[i][k] > pts[ext[2 * k + 1]][k]) ext[2 * k + 1] = i;
    }
  int32_t i0 = 0, i1 = 0;
  double best = -1.0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      const double d = (pts[ext[a]] - pts[ext[b]]).squaredNorm();
      if (d > best) {
        best = d;
        i0 = ext[a];
        i1 = ext[b];
      }
    }
  if (best <= eps * eps) return {};

  const Vec3 dir = (pts[i1] - pts[i0]).normalized();
  int32_t i2 = -1;
  best = eps;
  for (int32_t i = 0; i < n; ++i) {
    const Vec3 r = pts[i] - pts[i0];
    const double d = (r - r.dot(dir) * dir).norm();
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (i2 < 0) return {};

  Vec3 pn = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
  int32_t i3 = -1;
  best = eps;
  for (int32_t i = 0; i < n; ++i) {
    const double d = std::abs(pn.dot(pts[i] - pts[i0]));
    if (d > best) {
      best = d;
      i3 = i;
    }
  }
  if (i3 < 0) return {};
  if (pn.dot(pts[i3] - pts[i0]) > 0.0) std::swap(i1, i2);  // keep i3 below (i0,i1,i2)

  HullBuilder hb(pts, eps);
  const int32_t f0 = hb.add_face(i0, i1, i2);
  const int32_t f1 = hb.add_face(i0, i3, i1);
  const int32_t f2 = hb.add_face(i1, i3, i2);
  const int32_t f3 = hb.add_face(i2, i3, i0);
  hb.link(f0, 0, f1);
  hb.link(f0, 1, f2);
  hb.link(f0, 2, f3);
  hb.link(f1, 1, f2);
  hb.link(f2, 1, f3);
  hb.link(f3, 1, f1);

  const std::vector<int32_t> tetra{f0, f1, f2, f3};
  for (int32_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    hb.claim(p, tetra);
  }
  for (const int32_t f : tetra)
    if (!hb.faces[f].outside.empty()) hb.pending.push_back(f);

  std::vector<int32_t> visible, horizon_face;
  std::vector<std::pair<int32_t, int32_t>> horizon;
  while (!hb.pending.empty()) {
    const int32_t f = hb.pending.back();
    hb.pending.pop_back();
    if (hb.faces[f].dead || hb.faces[f].outside.empty()) continue;
    const int32_t apex = hb.faces[f].far;

    // Flood the faces the apex can see; collect the horizon in winding order.
    visible.assign(1, f);
    hb.faces[f].dead = true;
    horizon.clear();
    horizon_face.clear();
    for (size_t q = 0; q < visible.size(); ++q) {
      const int32_t vf = visible[q];
      for (int k = 0; k < 3; ++k) {
        const int32_t g = hb.faces[vf].nb[k];
        if (g < 0 || hb.faces[g].dead) continue;
        if (hb.sd(g, apex) > hb.eps) {
          hb.faces[g].dead = true;
          visible.push_back(g);
        } else {
          horizon.emplace_back(hb.faces[vf].v[k], hb.faces[vf].v[(k + 1) % 3]);
          horizon_face.push_back(g);
        }
      }
    }

    // Cone of new faces over the horizon.
    std::unordered_map<uint64_t, std::pair<int32_t, int>> open_edges;
    std::vector<int32_t> created;
    created.reserve(horizon.size());
    for (size_t h = 0; h < horizon.size(); ++h) {
      const auto [a, b] = horizon[h];
      const int32_t nf = hb.add_face(a, b, apex);
      created.push_back(nf);
      hb.link(nf, 0, horizon_face[h]);
      // Edges (b, apex) and (apex, a) pair with adjacent cone faces.
      for (const int k : {1, 2}) {
        const int32_t ea = hb.faces[nf].v[k], eb = hb.faces[nf].v[(k + 1) % 3];
        const auto it = open_edges.find(edge_key(eb, ea));
        if (it != open_edges.end()) {
          hb.link(nf, k, it->second.first);
          open_edges.erase(it);
        } else {
          open_edges.emplace(edge_key(ea, eb), std::make_pair(nf, k));
        }
      }
    }

    for (const int32_t vf : visible)
      for (const int32_t p : hb.faces[vf].outside) {
        if (p == apex) continue;
        hb.claim(p, created);
      }
    for (const int32_t vf : visible) {
      hb.faces[vf].outside.clear();
      hb.faces[vf].outside.shrink_to_fit();
    }
    for (const int32_t nf : created)
      if (!hb.faces[nf].outside.empty()) hb.pending.push_back(nf);
  }

  std::vector<std::array<int32_t, 3>> out;
  for (const auto& f : hb.faces)
    if (!f.dead) out.push_back({f.v[0], f.v[1], f.v[2]});
  return out;
}

std::vector<int32_t> hidden_point_removal(const std::vector<Vec3>& pts,
                                          const Vec3& viewpoint, double gamma) {
  const int32_t n = static_cast<int32_t>(pts.size());
  if (n == 0) return {};

  std::vector<Vec3> flipped;
  flipped.reserve(n + 1);
  std::vector<int32_t> direct;  // points at the viewpoint are trivially visible
  std::vector<int32_t> map;     // flipped slot -> original index
  double max_norm = 0.0;
  std::vector<Vec3> rel(n);
  for (int32_t i = 0; i < n; ++i) {
    rel[i] = pts[i] - viewpoint;
    max_norm = std::max(max_norm, rel[i].norm());
  }
  const double R = max_norm * std::pow(10.0, gamma);
  for (int32_t i = 0; i < n; ++i) {
    const double len = rel[i].norm();
    if (len < 1e-12) {
      direct.push_back(i);
      continue;
    }
    flipped.push_back(rel[i] + 2.0 * (R - len) * (rel[i] / len));
    map.push_back(i);
  }
  flipped.push_back(Vec3::Zero());  // the viewpoint itself

  const auto hull = convex_hull(flipped);
  if (hull.empty()) {
    // Degenerate cloud: nothing can occlude anything.
    std::vector<int32_t> all(n);
    for (int32_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }

  std::vector<char> on_hull(flipped.size(), 0);
  for (const auto& f : hull)
    for (const int32_t v : f) on_hull[v] = 1;
  std::vector<int32_t> out = direct;
  for (size_t s = 0; s < map.size(); ++s)
    if (on_hull[s]) out.push_back(map[s]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace egofuse::geom
