#include "egofuse/localization.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "egofuse/parallel.hpp"
#include "egofuse/simd_kernels.hpp"

namespace egofuse::loc {

bool box_contains(const Box& b, const Vec3& p) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 d = p - b.center;
  const double qx = c * d.x() + s * d.y();
  const double qy = -s * d.x() + c * d.y();
  return std::abs(qx) <= 0.5 * b.size.x() && std::abs(qy) <= 0.5 * b.size.y() &&
         std::abs(d.z()) <= 0.5 * b.size.z();
}

geom::Cloud crop_box(const geom::Cloud& pts, const Box& b) {
  geom::Cloud out;
  const int64_t n = static_cast<int64_t>(pts.size());
  if (n == 0) return out;
  // Padded enclosing aabb prefilter; the oriented test decides.
  const double c = std::abs(std::cos(b.yaw)), s = std::abs(std::sin(b.yaw));
  const double hx = 0.5 * (c * b.size.x() + s * b.size.y()) + 1e-9;
  const double hy = 0.5 * (s * b.size.x() + c * b.size.y()) + 1e-9;
  const double hz = 0.5 * b.size.z() + 1e-9;
  const double lo[3] = {b.center.x() - hx, b.center.y() - hy, b.center.z() - hz};
  const double hi[3] = {b.center.x() + hx, b.center.y() + hy, b.center.z() + hz};
  std::vector<uint8_t> mask(pts.size());
  simd::aabb_mask(pts.xs.data(), pts.ys.data(), pts.zs.data(), n, lo, hi, mask.data());
  for (int64_t i = 0; i < n; ++i) {
    if (mask[i] && box_contains(b, pts.get(i))) out.push(pts.get(i));
  }
  return out;
}

void BoxTrack::validate() const {
  for (size_t i = 0; i < frames.size(); ++i) {
    for (size_t j = 0; j < frames[i].size(); ++j) {
      const Box& b = frames[i][j];
      const bool finite = b.center.allFinite() && b.size.allFinite() &&
                          std::isfinite(b.yaw) && std::isfinite(b.score);
      if (!finite || b.size.minCoeff() <= 0.0) {
        throw std::runtime_error("box track: bad box at frame " + std::to_string(i) +
                                 " index " + std::to_string(j));
      }
    }
  }
}

BoxTrack parse_box_track(std::istream& in, size_t frame_count) {
  BoxTrack track;
  track.frames.resize(frame_count);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first) || first[0] == '#') continue;
    const auto fail = [lineno](const char* what) {
      throw std::runtime_error("box track line " + std::to_string(lineno) + ": " + what);
    };
    long long id = -1;
    try {
      size_t used = 0;
      id = std::stoll(first, &used);
      if (used != first.size()) fail("bad frame id");
    } catch (const std::logic_error&) {
      fail("bad frame id");
    }
    if (id < 0) fail("negative frame id");
    Box b;
    double f[8];
    for (double& v : f) {
      if (!(ls >> v)) fail("expected 9 fields");
    }
    std::string extra;
    if (ls >> extra) fail("trailing fields");
    b.center = Vec3(f[0], f[1], f[2]);
    b.size = Vec3(f[3], f[4], f[5]);
    b.yaw = f[6];
    b.score = f[7];
    if (!b.center.allFinite() || !b.size.allFinite() || !std::isfinite(b.yaw) ||
        !std::isfinite(b.score)) {
      fail("non-finite value");
    }
    if (b.size.minCoeff() <= 0.0) fail("non-positive size");
    const size_t fid = static_cast<size_t>(id);
    if (frame_count > 0 && fid >= frame_count) fail("frame id out of range");
    if (fid >= track.frames.size()) track.frames.resize(fid + 1);
    track.frames[fid].push_back(b);
  }
  return track;
}

void format_box_track(const BoxTrack& track, std::ostream& out) {
  out << std::setprecision(17);
  for (size_t i = 0; i < track.frames.size(); ++i) {
    for (const Box& b : track.frames[i]) {
      out << i << ' ' << b.center.x() << ' ' << b.center.y() << ' ' << b.center.z()
          << ' ' << b.size.x() << ' ' << b.size.y() << ' ' << b.size.z() << ' ' << b.yaw
          << ' ' << b.score << '\n';
    }
  }
}

MotionSequence imu_to_world(const MotionSequence& imu, const Mat3& R_WI) {
  MotionSequence out = imu;
  out.frame_tag = 'W';
  if ((R_WI - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0) return out;
  for (auto& f : out.frames) {
    f.T = R_WI * f.T;
    f.R = matrix_to_aa(R_WI * aa_to_matrix(f.R));
  }
  return out;
}

LidarHeadOffset estimate_t_hl(const ShapedBody& body, const MotionSequence& imu_world,
                              const Trajectory& lidar, double window) {
  if (imu_world.frames.empty() || lidar.empty()) {
    throw std::runtime_error("offset estimate: empty stream");
  }
  const size_t n = std::min(imu_world.frames.size(), lidar.size());
  const double t0 = imu_world.frames[0].time;

  LidarHeadOffset out;
  Vec3 sum = Vec3::Zero();
  Vec3 prev_head = Vec3::Zero();
  size_t used = 0;
  for (size_t i = 0; i < n; ++i) {
    const body::PoseFrame& f = imu_world.frames[i];
    if (f.time - t0 > window) break;
    const body::FkJoints<double> fk = body::forward_joints(body, f);
    const int h = body.model->head_joint;
    const Vec3 head = to_eigen(fk.pos[h]) + f.T;
    sum += to_eigen(fk.rot[h]).transpose() * (head - lidar.poses[i].t);
    if (used > 0) {
      const double speed = (head - prev_head).norm() * imu_world.fps;
      out.max_head_speed = std::max(out.max_head_speed, speed);
    }
    prev_head = head;
    ++used;
  }
  if (used == 0) throw std::runtime_error("offset estimate: no frames in window");
  out.t_hl = sum / static_cast<double>(used);
  out.motion_warning = out.max_head_speed > 0.05;
  if (out.t_hl.norm() >= 0.5) {
    throw std::runtime_error("offset estimate: implausible sensor-to-head offset " +
                             std::to_string(out.t_hl.norm()) + " m");
  }
  return out;
}

std::vector<Vec3> first_person_pelvis(const ShapedBody& body,
                                      const MotionSequence& imu_world,
                                      const Trajectory& lidar, const Vec3& t_hl) {
  if (imu_world.frames.size() != lidar.size()) {
    throw std::runtime_error("pelvis track: motion has " +
                             std::to_string(imu_world.frames.size()) +
                             " frames, trajectory " + std::to_string(lidar.size()));
  }
  std::vector<Vec3> out(imu_world.frames.size());
  parallel_for(static_cast<int64_t>(out.size()), [&](int64_t i) {
    const body::PoseFrame& f = imu_world.frames[i];
    out[i] = body::pelvis_head_offset(body, f) +
             body::head_rotation(*body.model, f) * t_hl + lidar.poses[i].t;
  });
  return out;
}

namespace {

// Smallest/largest centered singular values; collinear or degenerate spreads
// cannot pin down a heading.
bool spread_constrains_yaw(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd M(3, static_cast<int>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) M.col(static_cast<int>(i)) = pts[i] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  return s(0) > 1e-12 && s(1) > 1e-3 * s(0);
}

}  // namespace

YawRefinement refine_world_rotation(const std::vector<Vec3>& imu_track,
                                    const std::vector<Vec3>& target_track,
                                    const Mat3& R_prev) {
  if (imu_track.size() != target_track.size()) {
    throw std::runtime_error("yaw refinement: track lengths differ");
  }
  if (imu_track.size() < 3) {
    throw std::runtime_error("yaw refinement: need at least 3 frames");
  }
  YawRefinement out;
  out.R = R_prev;
  if (!spread_constrains_yaw(imu_track) || !spread_constrains_yaw(target_track)) {
    out.skipped = true;
    return out;
  }
  const Mat3 dR = geom::procrustes_rotation(imu_track, target_track);
  out.yaw = geom::rotation_angle_about(dR, Vec3::UnitZ());
  out.R = aa_to_matrix(out.yaw * Vec3::UnitZ()) * R_prev;
  return out;
}

RigidTransform refine_world_rotation(const std::vector<Vec3>& imu_track,
                                     const std::vector<Vec3>& target_track,
                                     const RigidTransform& X_prev, bool* skipped) {
  const YawRefinement r = refine_world_rotation(imu_track, target_track, X_prev.R);
  if (skipped) *skipped = r.skipped;
  if (r.skipped) return X_prev;
  const Mat3 yawM = aa_to_matrix(r.yaw * Vec3::UnitZ());
  return {yawM * X_prev.R, yawM * X_prev.t};
}

SecondPersonTrack second_person_track(const BoxTrack& boxes,
                                      const MotionSequence& imu_world,
                                      const std::vector<geom::Cloud>& clouds,
                                      const ShapedBody& body, const Trajectory& lidar,
                                      const SecondPersonOptions& opts) {
  const size_t n = imu_world.frames.size();
  if (n == 0) throw std::runtime_error("second person: empty motion");
  if (boxes.size() != n || clouds.size() != n || lidar.size() != n) {
    throw std::runtime_error("second person: stream lengths disagree");
  }
  boxes.validate();

  SecondPersonTrack out;
  out.track.resize(n);
  out.crops.resize(n);
  out.visible.assign(n, 0);
  out.selected_box.assign(n, -1);

  // Gate boxes against the running estimate: frame 0 bootstraps from the
  // inertial translation, later frames advance the previous estimate by the
  // inertial delta. Ties on distance keep the lowest box index.
  std::vector<Vec3> centers(n, Vec3::Zero());
  Vec3 est = imu_world.frames[0].T;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) est += imu_world.frames[i].T - imu_world.frames[i - 1].T;
    int best = -1;
    double best_d = opts.gate_radius;
    const auto& cand = boxes.frames[i];
    for (size_t j = 0; j < cand.size(); ++j) {
      const double d = (cand[j].center - est).norm();
      if (d <= opts.gate_radius && (best < 0 || d < best_d)) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    if (best >= 0) {
      geom::Cloud crop = crop_box(clouds[i], cand[best]);
      if (static_cast<int>(crop.size()) >= opts.min_crop_points) {
        out.visible[i] = 1;
        out.selected_box[i] = best;
        out.crops[i] = std::move(crop);
        centers[i] = cand[best].center;
        est = centers[i];
      }
    }
  }

  bool any = false;
  for (size_t i = 0; i < n; ++i) any = any || out.visible[i];
  if (!any) throw std::runtime_error("second person: no visible frame");

  // Per visible frame: body posed at the box center, vertices facing the
  // sensor registered onto the crop. Frames are independent.
  geom::IcpOptions icp = opts.icp;
  icp.translation_only = true;
  std::vector<Vec3> corr(n, Vec3::Zero());
  parallel_for(static_cast<int64_t>(n), [&](int64_t i) {
    if (!out.visible[i]) return;
    body::PoseFrame f = imu_world.frames[i];
    f.T = centers[i];
    const body::Posed posed = body::forward(body, f);
    const std::vector<int32_t> vis =
        geom::hidden_point_removal(posed.verts, lidar.poses[i].t, opts.hpr_gamma);
    if (vis.size() < 3) return;
    geom::Cloud src;
    src.reserve(vis.size());
    for (int32_t v : vis) src.push(posed.verts[v]);
    const geom::KdTree tree(out.crops[i]);
    const geom::IcpResult res = geom::icp_point(src, out.crops[i], tree, {}, icp);
    if (std::isfinite(res.rms)) corr[i] = res.transform.t;
  });

  // Re-propagate invisible stretches from the corrected anchors.
  for (size_t i = 0; i < n; ++i) {
    if (out.visible[i]) {
      out.track[i] = centers[i] + corr[i];
    } else if (i > 0) {
      out.track[i] = out.track[i - 1] + (imu_world.frames[i].T - imu_world.frames[i - 1].T);
    } else {
      out.track[i] = imu_world.frames[0].T;
    }
  }

  std::vector<Vec3> imu_track(n);
  for (size_t i = 0; i < n; ++i) imu_track[i] = imu_world.frames[i].T;
  if (n >= 3) {
    out.yaw = refine_world_rotation(imu_track, out.track, Mat3::Identity());
  } else {
    out.yaw.skipped = true;
  }
  return out;
}

}  // namespace egofuse::loc
