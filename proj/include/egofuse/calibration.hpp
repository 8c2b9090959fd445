#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "egofuse/body_model.hpp"
#include "egofuse/geometry.hpp"
#include "egofuse/trajectory.hpp"

namespace egofuse::calib {

inline constexpr double kGravity = 9.8;  // m/s^2

// Fixed axis permutation from the inertial capture convention into the world
// convention (x right, y forward, z up). It encodes a handedness choice, not
// a measurement, so it is a compile-time constant.
Mat3 imu_axis_convention();

struct Calibration {
  RigidTransform lidar_to_world;  // first lidar frame -> world
  Mat3 imu_to_world = Mat3::Identity();
  double subject_height = 0.0;  // meters
  double marker_offset = 0.2;   // meters, forward offset of the marker board

  // Orthonormal rotation blocks; imu_to_world equal to the fixed convention.
  void validate() const;
};

struct PlaneHints {
  geom::AlignedBox ground;  // crop holding mostly ground points
  geom::AlignedBox marker;  // crop holding mostly marker-board points
  double inlier_dist = 0.02;
  uint64_t seed = 11;
  int ransac_iters = 256;
};

// Builds the lidar->world transform from the first frame. The ground-plane
// normal (oriented toward the cloud centroid, i.e. up) becomes world z, the
// marker-board normal (oriented toward the ground crop's center, i.e. into
// the room) becomes world y, and their cross product world x; the rotation
// is the nearest orthonormal matrix to those rows. The translation places
// the sensor at (0, marker_offset, subject_height): the wearer stands
// marker_offset in front of the board when the first frame is taken.
// Throws when either plane cannot be fit or the two are within 10 degrees
// of parallel.
Calibration calibrate_first_frame(const geom::Cloud& first_frame, const PlaneHints& hints,
                                  double subject_height);

struct TimedScalarTrack {
  std::vector<double> time;   // seconds, strictly increasing
  std::vector<double> value;  // meters
};

// Continuous apex time of a jump. Samples within `window` seconds of the
// discrete maximum are matched to the free-fall parabola: with heights
// measured downward from the apex, sum_i | 0.5 g (t_i - t)^2 - h_i | is
// minimized over t, the unknown apex height handled as an inner median.
// Seeded by a closed-form least-squares fit, refined by a golden-section
// line search, and snapped to the nearest sample instant when that instant
// explains the window equally well. Throws when the maximum sits on the
// track boundary or fewer than 5 samples fall inside the window.
double jump_apex_time(const TimedScalarTrack& track, double window = 0.15);

// Affine map from the imu clock onto the lidar clock.
struct ClockMap {
  double scale = 1.0;
  double offset = 0.0;

  double imu_to_lidar(double t) const { return scale * t + offset; }
  double lidar_to_imu(double t) const { return (t - offset) / scale; }
};

// One (t_imu, t_lidar) apex pair gives a pure offset; two or more also fit
// the clock-rate ratio (least squares, exact for two). Throws on an empty
// list or coincident imu times.
ClockMap clock_map_from_peaks(const std::vector<std::pair<double, double>>& peaks);

struct ResampledMotion {
  body::MotionSequence motion;   // one frame per target timestamp
  std::vector<uint8_t> covered;  // 0: outside the mapped source span; the
                                 // frame holds the nearest endpoint pose
};

// Resamples an inertial motion stream at the lidar timestamps through the
// clock map: translations interpolate linearly, the root and per-joint
// axis-angles spherically. A timestamp landing exactly on a source sample
// instant returns that frame unchanged (bitwise), so an aligned integer
// rate ratio is pure decimation.
ResampledMotion resample_motion(const body::MotionSequence& imu,
                                const std::vector<double>& lidar_times,
                                const ClockMap& clock);
ResampledMotion resample_motion(const body::MotionSequence& imu, const Trajectory& lidar,
                                const ClockMap& clock);

}  // namespace egofuse::calib
