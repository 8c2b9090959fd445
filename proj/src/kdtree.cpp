#include <algorithm>
#include <numeric>

#include "egofuse/geometry.hpp"
#include "egofuse/parallel.hpp"

namespace egofuse::geom {

namespace {
constexpr int32_t kLeafSize = 32;
}

KdTree::KdTree(const Cloud& pts) {
  const int32_t n = static_cast<int32_t>(pts.size());
  if (n == 0) return;
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  xs_ = pts.xs;  // original order during build
  ys_ = pts.ys;
  zs_ = pts.zs;
  nodes_.reserve(2 * (n / kLeafSize + 1));
  build(0, n);
  // Reorder the coordinate arrays so every leaf is a contiguous SoA slice.
  std::vector<double> rx(n), ry(n), rz(n);
  for (int32_t i = 0; i < n; ++i) {
    const int32_t o = order_[i];
    rx[i] = xs_[o];
    ry[i] = ys_[o];
    rz[i] = zs_[o];
  }
  xs_ = std::move(rx);
  ys_ = std::move(ry);
  zs_ = std::move(rz);
}

// Partitions order_[begin, end) in place; coordinates are still addressed by
// original index at this stage. Returns the node index.
int32_t KdTree::build(int32_t begin, int32_t end) {
  const int32_t me = static_cast<int32_t>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    // Ascending original index inside a leaf makes the SIMD scan's
    // lowest-slot tie rule coincide with the lowest-original-index rule.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_[me].axis = -1;
    nodes_[me].begin = begin;
    nodes_[me].end = end;
    return me;
  }

  // Median split on the widest axis.
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (int32_t i = begin; i < end; ++i) {
    const int32_t o = order_[i];
    const double c[3] = {xs_[o], ys_[o], zs_[o]};
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], c[k]);
      hi[k] = std::max(hi[k], c[k]);
    }
  }
  int axis = 0;
  for (int k = 1; k < 3; ++k)
    if (hi[k] - lo[k] > hi[axis] - lo[axis]) axis = k;
  const std::vector<double>& coord = axis == 0 ? xs_ : axis == 1 ? ys_ : zs_;

  const int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int32_t a, int32_t b) { return coord[a] < coord[b]; });
  nodes_[me].axis = axis;
  nodes_[me].split = coord[order_[mid]];
  build(begin, mid);
  nodes_[me].right = build(mid, end);
  return me;
}

simd::MinHit KdTree::nearest(const Vec3& q) const {
  simd::MinHit best{std::numeric_limits<double>::infinity(), -1};
  if (order_.empty()) return best;

  // Depth-first, near side first. The far side is visited whenever the
  // splitting plane is not strictly farther than the current best, which
  // keeps equal-distance candidates reachable for the tie rule.
  int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    int32_t ni = stack[--top];
    while (true) {
      const Node& nd = nodes_[ni];
      if (nd.axis < 0) {
        const simd::MinHit leaf =
            simd::min_sqdist(xs_.data() + nd.begin, ys_.data() + nd.begin,
                             zs_.data() + nd.begin, nd.end - nd.begin, q.x(), q.y(),
                             q.z());
        if (leaf.idx >= 0) {
          const int32_t orig = order_[nd.begin + leaf.idx];
          if (leaf.d2 < best.d2 || (leaf.d2 == best.d2 && orig < best.idx)) {
            best.d2 = leaf.d2;
            best.idx = orig;
          }
        }
        break;
      }
      const double qc = nd.axis == 0 ? q.x() : nd.axis == 1 ? q.y() : q.z();
      const double delta = qc - nd.split;
      const int32_t near = delta < 0.0 ? ni + 1 : nd.right;
      const int32_t far = delta < 0.0 ? nd.right : ni + 1;
      if (delta * delta <= best.d2) stack[top++] = far;
      ni = near;
    }
  }
  return best;
}

double KdTree::nearest_dist(const Vec3& q) const { return std::sqrt(nearest(q).d2); }

std::vector<simd::MinHit> KdTree::knn(const Vec3& q, int k) const {
  std::vector<simd::MinHit> best;
  if (order_.empty() || k <= 0) return best;
  best.reserve(static_cast<size_t>(k) + 1);

  auto worse = [](const simd::MinHit& a, const simd::MinHit& b) {
    return a.d2 < b.d2 || (a.d2 == b.d2 && a.idx < b.idx);
  };
  auto offer = [&](double d2, int32_t orig) {
    const simd::MinHit cand{d2, orig};
    if (best.size() == static_cast<size_t>(k) && !worse(cand, best.back())) return;
    best.insert(std::upper_bound(best.begin(), best.end(), cand, worse), cand);
    if (best.size() > static_cast<size_t>(k)) best.pop_back();
  };
  // Prune with the kth distance only once k candidates are held; <= keeps
  // equal-distance candidates reachable so the index tie rule stays exact.
  auto bound = [&] {
    return best.size() == static_cast<size_t>(k)
               ? best.back().d2
               : std::numeric_limits<double>::infinity();
  };

  int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    int32_t ni = stack[--top];
    while (true) {
      const Node& nd = nodes_[ni];
      if (nd.axis < 0) {
        for (int32_t i = nd.begin; i < nd.end; ++i) {
          const double dx = xs_[i] - q.x();
          const double dy = ys_[i] - q.y();
          const double dz = zs_[i] - q.z();
          offer(dx * dx + dy * dy + dz * dz, order_[i]);
        }
        break;
      }
      const double qc = nd.axis == 0 ? q.x() : nd.axis == 1 ? q.y() : q.z();
      const double delta = qc - nd.split;
      const int32_t near = delta < 0.0 ? ni + 1 : nd.right;
      const int32_t far = delta < 0.0 ? nd.right : ni + 1;
      if (delta * delta <= bound()) stack[top++] = far;
      ni = near;
    }
  }
  return best;
}

double mean_nn_dist(const Cloud& from, const KdTree& to) {
  const size_t n = from.size();
  if (n == 0) return 0.0;
  std::vector<double> d(n);
  parallel_for(static_cast<int64_t>(n),
               [&](int64_t i) { d[i] = std::sqrt(to.nearest(from.get(i)).d2); });
  double s = 0.0;
  for (const double v : d) s += v;
  return s / static_cast<double>(n);
}

double mean_nn_sqdist(const Cloud& from, const KdTree& to) {
  const size_t n = from.size();
  if (n == 0) return 0.0;
  std::vector<double> d(n);
  parallel_for(static_cast<int64_t>(n),
               [&](int64_t i) { d[i] = to.nearest(from.get(i)).d2; });
  double s = 0.0;
  for (const double v : d) s += v;
  return s / static_cast<double>(n);
}

}  // namespace egofuse::geom
