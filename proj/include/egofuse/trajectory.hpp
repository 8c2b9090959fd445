#pragma once

#include <string>
#include <vector>

#include "egofuse/mathutil.hpp"

namespace egofuse {

struct TrajectorySample {
  double time = 0.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

// Timed rigid poses of one sensor. frame_tag follows MotionSequence: 'L'
// lidar odometry frame, 'W' world.
struct Trajectory {
  char frame_tag = 'L';
  std::vector<TrajectorySample> poses;

  size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }

  // Strictly increasing timestamps, orthonormal rotations.
  void validate() const;
};

}  // namespace egofuse
