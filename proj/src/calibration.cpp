#include "egofuse/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace egofuse::calib {

Mat3 imu_axis_convention() {
  Mat3 m;
  // clang-format off
  m << -1.0, 0.0, 0.0,
        0.0, 0.0, 1.0,
        0.0, 1.0, 0.0;
  // clang-format on
  return m;
}

void Calibration::validate() const {
  if (!is_rotation(lidar_to_world.R, 1e-6))
    throw std::runtime_error("calibration: lidar rotation block not orthonormal");
  if ((imu_to_world - imu_axis_convention()).norm() != 0.0)
    throw std::runtime_error("calibration: unexpected imu axis convention");
  if (!(subject_height > 0.0))
    throw std::runtime_error("calibration: subject height must be positive");
}

namespace {

std::vector<Vec3> gather(const geom::Cloud& c, const std::vector<int32_t>& idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (const int32_t i : idx) out.push_back(c.get(i));
  return out;
}

}  // namespace

Calibration calibrate_first_frame(const geom::Cloud& first_frame, const PlaneHints& hints,
                                  double subject_height) {
  if (!(subject_height > 0.0))
    throw std::invalid_argument("calibration: subject height must be positive");
  const auto ground_pts = gather(first_frame, geom::crop_indices(first_frame, hints.ground));
  const auto marker_pts = gather(first_frame, geom::crop_indices(first_frame, hints.marker));

  geom::PlaneFit ground =
      geom::ransac_plane(ground_pts, hints.inlier_dist, hints.seed, hints.ransac_iters);
  geom::PlaneFit marker =
      geom::ransac_plane(marker_pts, hints.inlier_dist, hints.seed + 1, hints.ransac_iters);
  if (ground.inliers.size() < 3)
    throw std::runtime_error("calibration: no ground plane in the hinted crop");
  if (marker.inliers.size() < 3)
    throw std::runtime_error("calibration: no marker plane in the hinted crop");

  // Up is whichever side of the ground holds the scene; the marker normal
  // points toward the ground crop, i.e. into the room where the wearer
  // stands.
  Vec3 centroid = Vec3::Zero();
  for (size_t i = 0; i < first_frame.size(); ++i) centroid += first_frame.get(i);
  centroid /= static_cast<double>(first_frame.size());
  geom::orient_toward_point(&ground.plane, centroid);
  geom::orient_toward_point(&marker.plane, hints.ground.center());

  const Vec3 g = ground.plane.n;
  const Vec3 m = marker.plane.n;
  if (std::abs(g.dot(m)) > std::cos(10.0 * kPi / 180.0))
    throw std::runtime_error("calibration: ground and marker planes nearly parallel");

  Mat3 rows;
  rows.row(0) = m.cross(g).normalized();
  rows.row(1) = m;
  rows.row(2) = g;

  Calibration out;
  out.lidar_to_world.R = project_to_rotation(rows);
  out.lidar_to_world.t = Vec3(0.0, out.marker_offset, subject_height);
  out.imu_to_world = imu_axis_convention();
  out.subject_height = subject_height;
  return out;
}

namespace {

// Window residuals against the parabola with apex at tp; the apex height is
// free, so the optimal one is the median and the cost is the L1 spread.
double apex_energy(const std::vector<double>& ts, const std::vector<double>& zs,
                   double tp) {
  std::vector<double> r(ts.size());
  for (size_t i = 0; i < ts.size(); ++i) {
    const double dt = ts[i] - tp;
    r[i] = 0.5 * kGravity * dt * dt + zs[i];
  }
  std::vector<double> sorted = r;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double c =
      (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double e = 0.0;
  for (const double v : r) e += std::abs(v - c);
  return e;
}

}  // namespace

double jump_apex_time(const TimedScalarTrack& track, double window) {
  const size_t n = track.time.size();
  if (n != track.value.size())
    throw std::invalid_argument("jump apex: time and value counts differ");
  for (size_t i = 1; i < n; ++i)
    if (!(track.time[i] > track.time[i - 1]))
      throw std::invalid_argument("jump apex: timestamps not strictly increasing");
  if (n < 3) throw std::runtime_error("jump apex: track too short");

  size_t k = 0;
  for (size_t i = 1; i < n; ++i)
    if (track.value[i] > track.value[k]) k = i;
  if (k == 0 || k + 1 == n)
    throw std::runtime_error("jump apex: maximum sits on the track boundary");

  // Work relative to the discrete maximum: squaring raw timestamps would
  // cancel away the curvature signal for long recordings, and the shift
  // also makes the estimate translation-equivariant by construction.
  std::vector<double> orig, ts, zs;
  for (size_t i = 0; i < n; ++i) {
    if (std::abs(track.time[i] - track.time[k]) <= window) {
      orig.push_back(track.time[i]);
      ts.push_back(track.time[i] - track.time[k]);
      zs.push_back(track.value[i] - track.value[k]);
    }
  }
  if (ts.size() < 5) throw std::runtime_error("jump apex: too few samples near the maximum");

  // Closed-form seed: on the parabola, z + 0.5 g t^2 is linear in t with
  // slope g * t_apex, so a least-squares line gives the apex directly.
  double st = 0.0, stt = 0.0, sy = 0.0, sty = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    const double y = zs[i] + 0.5 * kGravity * ts[i] * ts[i];
    st += ts[i];
    stt += ts[i] * ts[i];
    sy += y;
    sty += ts[i] * y;
  }
  const double cnt = static_cast<double>(ts.size());
  const double det = cnt * stt - st * st;
  double seed = 0.0;
  if (det > 1e-12) seed = std::clamp((cnt * sty - st * sy) / det / kGravity, -window, window);

  // Golden-section refinement of the L1 objective over the window.
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -window, hi = window;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = apex_energy(ts, zs, x1), f2 = apex_energy(ts, zs, x2);
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = apex_energy(ts, zs, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = apex_energy(ts, zs, x2);
    }
  }
  const double golden = 0.5 * (lo + hi);

  double best_t = seed, best_e = apex_energy(ts, zs, seed);
  const double eg = apex_energy(ts, zs, golden);
  if (eg < best_e) {
    best_t = golden;
    best_e = eg;
  }

  // An apex that lands on a sample instant should come back as exactly that
  // instant, so the nearest instant wins whenever it explains the window
  // just as well.
  size_t near = 0;
  for (size_t i = 1; i < ts.size(); ++i)
    if (std::abs(ts[i] - best_t) < std::abs(ts[near] - best_t)) near = i;
  const double es = apex_energy(ts, zs, ts[near]);
  if (es <= best_e + 1e-9 * (1.0 + best_e)) return orig[near];
  return track.time[k] + best_t;
}

ClockMap clock_map_from_peaks(const std::vector<std::pair<double, double>>& peaks) {
  if (peaks.empty()) throw std::invalid_argument("clock map: no apex pairs");
  if (peaks.size() == 1) return {1.0, peaks[0].second - peaks[0].first};
  double si = 0.0, sii = 0.0, sl = 0.0, sil = 0.0;
  for (const auto& [ti, tl] : peaks) {
    si += ti;
    sii += ti * ti;
    sl += tl;
    sil += ti * tl;
  }
  const double cnt = static_cast<double>(peaks.size());
  const double det = cnt * sii - si * si;
  if (det <= 1e-12) throw std::invalid_argument("clock map: apex pairs share one imu time");
  const double scale = (cnt * sil - si * sl) / det;
  if (!(scale > 0.0)) throw std::runtime_error("clock map: non-positive clock rate");
  return {scale, (sl - scale * si) / cnt};
}

ResampledMotion resample_motion(const body::MotionSequence& imu,
                                const std::vector<double>& lidar_times,
                                const ClockMap& clock) {
  const auto& fr = imu.frames;
  if (fr.empty()) throw std::runtime_error("resample: empty source motion");
  for (size_t i = 1; i < fr.size(); ++i) {
    if (!(fr[i].time > fr[i - 1].time))
      throw std::runtime_error("resample: source timestamps not strictly increasing");
    if (fr[i].theta.size() != fr[0].theta.size())
      throw std::runtime_error("resample: inconsistent joint counts");
  }

  const size_t n = lidar_times.size();
  for (size_t i = 1; i < n; ++i)
    if (!(lidar_times[i] > lidar_times[i - 1]))
      throw std::runtime_error("resample: target timestamps not strictly increasing");

  ResampledMotion out;
  out.motion.frame_tag = imu.frame_tag;
  out.motion.beta = imu.beta;
  out.motion.fps = n >= 2 ? (static_cast<double>(n) - 1.0) / (lidar_times.back() - lidar_times.front())
                          : imu.fps;
  out.motion.frames.reserve(n);
  out.covered.assign(n, 1);

  for (size_t i = 0; i < n; ++i) {
    const double tl = lidar_times[i];
    const double ti = clock.lidar_to_imu(tl);
    const auto it = std::lower_bound(
        fr.begin(), fr.end(), ti,
        [](const body::PoseFrame& f, double t) { return f.time < t; });
    body::PoseFrame f;
    if (it != fr.end() && it->time == ti) {
      f = *it;  // exact hit: pure decimation, no arithmetic
    } else if (it == fr.begin()) {
      f = fr.front();
      out.covered[i] = 0;
    } else if (it == fr.end()) {
      f = fr.back();
      out.covered[i] = 0;
    } else {
      const body::PoseFrame& a = *(it - 1);
      const body::PoseFrame& b = *it;
      const double u = (ti - a.time) / (b.time - a.time);
      f.T = (1.0 - u) * a.T + u * b.T;
      f.R = slerp_aa(a.R, b.R, u);
      f.theta.resize(a.theta.size());
      for (size_t j = 0; j < a.theta.size(); ++j)
        f.theta[j] = slerp_aa(a.theta[j], b.theta[j], u);
    }
    f.time = tl;
    out.motion.frames.push_back(std::move(f));
  }
  return out;
}

ResampledMotion resample_motion(const body::MotionSequence& imu, const Trajectory& lidar,
                                const ClockMap& clock) {
  std::vector<double> times;
  times.reserve(lidar.poses.size());
  for (const auto& p : lidar.poses) times.push_back(p.time);
  return resample_motion(imu, times, clock);
}

}  // namespace egofuse::calib
