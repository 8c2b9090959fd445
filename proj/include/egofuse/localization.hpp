#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "egofuse/body_model.hpp"
#include "egofuse/geometry.hpp"
#include "egofuse/trajectory.hpp"

namespace egofuse::loc {

using body::MotionSequence;
using body::ShapedBody;

// --- candidate detection boxes ------------------------------------------------

// Upright detection box: full extents `size`, rotated by `yaw` about world +z.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
  double score = 0.0;
};

// Inclusive on all faces.
bool box_contains(const Box& b, const Vec3& p);

// Points of `pts` inside the box, original order.
geom::Cloud crop_box(const geom::Cloud& pts, const Box& b);

// Per-frame candidate boxes from an external detector.
struct BoxTrack {
  std::vector<std::vector<Box>> frames;

  size_t size() const { return frames.size(); }
  // All sizes strictly positive and every field finite.
  void validate() const;
};

// Line records "frame_id cx cy cz sx sy sz yaw score"; blank lines and lines
// starting with '#' are skipped. frame_count 0 sizes the track to the largest
// id seen + 1; otherwise ids must be < frame_count.
BoxTrack parse_box_track(std::istream& in, size_t frame_count = 0);
void format_box_track(const BoxTrack& track, std::ostream& out);

// --- world-frame initialization -----------------------------------------------

// Premultiplies every frame's T and root R by R_WI; theta and beta are
// untouched. Root axis-angle comes back canonical (angle in [0, pi]). The
// exact-identity R_WI copies frames bitwise.
MotionSequence imu_to_world(const MotionSequence& imu, const Mat3& R_WI);

// Constant sensor-to-head-joint offset, expressed with zero head rotation.
struct LidarHeadOffset {
  Vec3 t_hl = Vec3::Zero();
  bool motion_warning = false;  // head moved faster than 0.05 m/s in the window
  double max_head_speed = 0.0;  // m/s over the averaging window
};

// Averages R_H(theta_i)^T (head_world_i - T_lidar_i) over motion frames within
// `window` seconds of the first one, paired with lidar poses by index. The
// wearer is expected still during this window; faster head motion only sets
// motion_warning. Throws if either stream is empty or the averaged offset
// reaches 0.5 m (not a head-mounted rig).
LidarHeadOffset estimate_t_hl(const ShapedBody& body, const MotionSequence& imu_world,
                              const Trajectory& lidar, double window = 1.0);

// Per frame: pelvis_head_offset(f) + head_rotation(f) * t_hl + lidar t. The
// motion supplies the pose, the trajectory the sensor position; counts must
// match. Both inputs world frame.
std::vector<Vec3> first_person_pelvis(const ShapedBody& body,
                                      const MotionSequence& imu_world,
                                      const Trajectory& lidar, const Vec3& t_hl);

struct YawRefinement {
  Mat3 R = Mat3::Identity();  // yaw(dR) * R_prev; R_prev itself when skipped
  double yaw = 0.0;           // radians about world +z
  bool skipped = false;       // tracks too collinear to constrain heading
};

// dR = procrustes rotation mapping the centered imu track onto the centered
// target track; only its yaw about world up is kept. The caller re-derives the
// world motion with the result and iterates (at most 5 rounds, stop below
// 0.1 deg). Tracks must have equal length >= 3; a track whose centered spread
// is a point or a single line cannot pin down yaw, so refinement is skipped.
YawRefinement refine_world_rotation(const std::vector<Vec3>& imu_track,
                                    const std::vector<Vec3>& target_track,
                                    const Mat3& R_prev);

// Same update applied to a full transform: the yaw rotation left-multiplies
// both the rotation and the translation columns.
RigidTransform refine_world_rotation(const std::vector<Vec3>& imu_track,
                                     const std::vector<Vec3>& target_track,
                                     const RigidTransform& X_prev, bool* skipped = nullptr);

// --- second-person fusion -------------------------------------------------------

struct SecondPersonOptions {
  double gate_radius = 1.0;   // candidate boxes farther from the estimate are ignored
  int min_crop_points = 20;   // smaller crops count as invisible
  double hpr_gamma = 2.0;
  geom::IcpOptions icp{};     // translation_only is forced on
};

struct SecondPersonTrack {
  std::vector<Vec3> track;            // fused pelvis translation per frame
  std::vector<geom::Cloud> crops;     // world-frame human points; empty when invisible
  std::vector<uint8_t> visible;
  std::vector<int32_t> selected_box;  // index into boxes.frames[i], -1 when none
  YawRefinement yaw;                  // heading correction vs identity for the
                                      // caller's imu-to-world rotation
};

// Fuses detector boxes with the inertial motion of the non-wearer. Sequential
// pass: gate candidate boxes against the running estimate (bootstrapped from
// the frame-0 inertial translation, advanced by inertial deltas), take the
// nearest gated box, crop the frame's cloud to it. Parallel pass per visible
// frame: pose the body at the estimate, keep vertices visible from the lidar
// position, register them onto the crop with translation-only icp. Final pass
// re-propagates invisible stretches from the corrected anchors, then a single
// yaw refinement runs against the fused track. Streams are index-aligned;
// clouds and trajectory are world frame. Throws when counts disagree or no
// frame ends up visible.
SecondPersonTrack second_person_track(const BoxTrack& boxes,
                                      const MotionSequence& imu_world,
                                      const std::vector<geom::Cloud>& clouds,
                                      const ShapedBody& body, const Trajectory& lidar,
                                      const SecondPersonOptions& opts = {});

}  // namespace egofuse::loc
