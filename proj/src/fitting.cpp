#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "egofuse/geometry.hpp"
#include "egofuse/rng.hpp"

namespace egofuse::geom {

namespace {

Plane plane_from_points(const Vec3& a, const Vec3& b, const Vec3& c, bool* ok) {
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  *ok = len > 1e-12;
  if (!*ok) return {};
  Plane p;
  p.n = n / len;
  p.d = -p.n.dot(a);
  return p;
}

// Least-squares plane: centroid plus the smallest principal direction.
Plane fit_plane_lsq(const std::vector<Vec3>& pts, const std::vector<int32_t>& idx) {
  Vec3 c = Vec3::Zero();
  for (const int32_t i : idx) c += pts[i];
  c /= static_cast<double>(idx.size());
  Mat3 cov = Mat3::Zero();
  for (const int32_t i : idx) {
    const Vec3 r = pts[i] - c;
    cov += r * r.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Plane p;
  p.n = es.eigenvectors().col(0);  // ascending eigenvalues
  const double len = p.n.norm();
  p.n /= len;
  p.d = -p.n.dot(c);
  return p;
}

}  // namespace

std::vector<int32_t> crop_indices(const Cloud& pts, const AlignedBox& box) {
  std::vector<uint8_t> mask(pts.size());
  const double lo[3] = {box.lo.x(), box.lo.y(), box.lo.z()};
  const double hi[3] = {box.hi.x(), box.hi.y(), box.hi.z()};
  simd::aabb_mask(pts.xs.data(), pts.ys.data(), pts.zs.data(),
                  static_cast<int64_t>(pts.size()), lo, hi, mask.data());
  std::vector<int32_t> out;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int32_t>(i));
  return out;
}

void orient_toward_point(Plane* pl, const Vec3& p, double eps) {
  const double s = pl->signed_distance(p);
  if (s < -eps) {
    pl->n = -pl->n;
    pl->d = -pl->d;
    return;
  }
  if (s > eps) return;
  const Vec3& n = pl->n;
  const bool flip = n.z() < 0.0 || (n.z() == 0.0 && (n.y() < 0.0 || (n.y() == 0.0 && n.x() < 0.0)));
  if (flip) {
    pl->n = -pl->n;
    pl->d = -pl->d;
  }
}

PlaneFit ransac_plane(const std::vector<Vec3>& pts, double inlier_dist, uint64_t seed,
                      int iters) {
  PlaneFit out;
  const int32_t n = static_cast<int32_t>(pts.size());
  if (n < 3) return out;

  Rng rng(seed);
  Plane best;
  int best_count = -1;
  for (int it = 0; it < iters; ++it) {
    int32_t i = static_cast<int32_t>(rng.uniform_index(n));
    int32_t j = static_cast<int32_t>(rng.uniform_index(n));
    int32_t k = static_cast<int32_t>(rng.uniform_index(n));
    if (i == j || j == k || i == k) continue;
    bool ok = false;
    const Plane cand = plane_from_points(pts[i], pts[j], pts[k], &ok);
    if (!ok) continue;
    int count = 0;
    for (int32_t p = 0; p < n; ++p)
      count += std::abs(cand.signed_distance(pts[p])) <= inlier_dist;
    if (count > best_count) {
      best_count = count;
      best = cand;
    }
  }
  if (best_count < 3) return out;

  std::vector<int32_t> inliers;
  for (int32_t p = 0; p < n; ++p)
    if (std::abs(best.signed_distance(pts[p])) <= inlier_dist) inliers.push_back(p);
  Plane refined = fit_plane_lsq(pts, inliers);
  // Keep the consensus orientation so callers' hints behave predictably.
  if (refined.n.dot(best.n) < 0.0) {
    refined.n = -refined.n;
    refined.d = -refined.d;
  }
  out.plane = refined;
  out.inliers.clear();
  for (int32_t p = 0; p < n; ++p)
    if (std::abs(refined.signed_distance(pts[p])) <= inlier_dist)
      out.inliers.push_back(p);
  return out;
}

Mat3 procrustes_rotation(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  const double n = static_cast<double>(a.size());
  for (const auto& p : a) ca += p;
  for (const auto& p : b) cb += p;
  ca /= n;
  cb /= n;
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < a.size(); ++i) H += (a[i] - ca) * (b[i] - cb).transpose();
  // Minimizer of sum |R a - b|^2 is V U^T from svd(H) = U S V^T, det-corrected.
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixV() * svd.matrixU().transpose();
  if (R.determinant() < 0.0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1.0;
    R = svd.matrixV() * D * svd.matrixU().transpose();
  }
  return R;
}

double rotation_angle_about(const Mat3& R, const Vec3& u) {
  // Orthonormal completion of u, smallest component first for stability.
  int k = 0;
  if (std::abs(u.y()) < std::abs(u.x())) k = 1;
  if (std::abs(u.z()) < std::abs(u[k])) k = 2;
  Vec3 w = Vec3::Zero();
  w[k] = 1.0;
  const Vec3 e1 = (w - w.dot(u) * u).normalized();
  const Vec3 e2 = u.cross(e1);
  Mat3 B;
  B.col(0) = e1;
  B.col(1) = e2;
  B.col(2) = u;
  const Mat3 Rp = B.transpose() * R * B;
  // Frobenius-closest rotation about the third basis axis.
  return std::atan2(Rp(1, 0) - Rp(0, 1), Rp(0, 0) + Rp(1, 1));
}

IcpResult icp_point(const Cloud& source, const Cloud& target, const KdTree& target_tree,
                    const RigidTransform& init, const IcpOptions& opts) {
  IcpResult res;
  res.transform = init;
  if (source.empty() || target_tree.empty()) {
    res.diverged = true;
    return res;
  }

  RigidTransform best = init;
  double best_rms = std::numeric_limits<double>::infinity();
  double prev_rms = std::numeric_limits<double>::infinity();
  int worse_streak = 0;
  const double max_d2 = opts.max_corr_dist * opts.max_corr_dist;
  const size_t min_pairs = opts.translation_only ? 1 : 3;

  std::vector<Vec3> ms, mt;
  for (int it = 0; it < opts.max_iters; ++it) {
    ms.clear();
    mt.clear();
    double sum2 = 0.0;
    for (size_t i = 0; i < source.size(); ++i) {
      const Vec3 p = res.transform.apply(source.get(i));
      const simd::MinHit hit = target_tree.nearest(p);
      if (hit.d2 > max_d2) continue;
      ms.push_back(p);
      mt.push_back(target.get(hit.idx));
      sum2 += hit.d2;
    }
    res.iters = it + 1;
    if (ms.size() < min_pairs) {
      res.diverged = true;
      break;
    }
    const double rms = std::sqrt(sum2 / static_cast<double>(ms.size()));
    res.rms = rms;
    if (rms < best_rms) {
      best_rms = rms;
      best = res.transform;
    }
    // A plateau is convergence; only an rms held meaningfully above the best
    // for several measurements counts as divergence.
    if (std::abs(prev_rms - rms) < opts.tol) {
      res.converged = true;
      break;
    }
    if (rms > best_rms + opts.tol) {
      if (++worse_streak >= 3) {
        res.diverged = true;
        break;
      }
    } else {
      worse_streak = 0;
    }
    prev_rms = rms;

    if (opts.translation_only) {
      Vec3 delta = Vec3::Zero();
      for (size_t i = 0; i < ms.size(); ++i) delta += mt[i] - ms[i];
      delta /= static_cast<double>(ms.size());
      res.transform.t += delta;
    } else {
      const Mat3 dR = procrustes_rotation(ms, mt);
      Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
      for (size_t i = 0; i < ms.size(); ++i) {
        cs += ms[i];
        ct += mt[i];
      }
      cs /= static_cast<double>(ms.size());
      ct /= static_cast<double>(ms.size());
      const RigidTransform inc{dR, ct - dR * cs};
      res.transform = res.transform.then(inc);
    }
  }

  // The last update is never measured, so the best measured state is the
  // honest answer on every exit path.
  res.transform = best;
  res.rms = best_rms;
  return res;
}

}  // namespace egofuse::geom
