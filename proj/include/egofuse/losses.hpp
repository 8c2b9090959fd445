#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "egofuse/body_model.hpp"
#include "egofuse/geometry.hpp"
#include "egofuse/mathutil.hpp"
#include "egofuse/scene.hpp"
#include "egofuse/sensor.hpp"

// Windowed motion objective: twelve differentiable terms over a window of
// body poses, grouped into four families (smoothness, self consistency,
// scene consistency, sensor consistency). Nearest-neighbor correspondences,
// penetration pairs, contact anchors and the visible-surface resample are
// frozen into a Bindings snapshot at the current iterate; gradients flow
// through the distances only. The optimizer refreshes bindings once per
// iteration; finite-difference checks reuse one snapshot on both sides.

namespace egofuse::loss {

// Term weights; a zero weight disables the term entirely (no binding work,
// no error checks for its inputs). Defaults are the engine's standard
// profile; the pipeline config can override each one.
struct LossWeights {
  double trans_accel = 4.0;     // translation second difference
  double rot_delta = 1.0;       // root orientation first difference
  double pose_delta = 4.0;      // joint-angle first difference
  double joint_accel = 4.0;     // pelvis-relative joint second difference
  double foot_slide = 1.0;      // stable-foot centroid drift
  double pose_prior = 1.0;      // pull toward the inertial pose, decays with iter
  double self_pen = 1.0;        // between-region self penetration
  double ground_contact = 1.0;  // stable-foot squared distance to ground
  double scene_pen = 2.0;       // body-scene penetration
  double head_anchor = 1.0;     // head joint vs sensor trajectory (wearer only)
  double cloud_fit = 1.0;       // visible-surface resample to crop (other person)
  double mesh_fit = 1.0;        // crop to body surface, capped (other person)

  double mesh_fit_cap = 0.15;  // cap on the squared crop-to-surface distance, m^2

  void validate() const;  // throws std::runtime_error
};

// Unweighted values of the individual terms from one evaluation. Terms not
// requested or not applicable stay zero.
struct TermValues {
  double trans_accel = 0.0, rot_delta = 0.0, pose_delta = 0.0, joint_accel = 0.0;
  double foot_slide = 0.0, pose_prior = 0.0, self_pen = 0.0;
  double ground_contact = 0.0, scene_pen = 0.0;
  double head_anchor = 0.0, cloud_fit = 0.0, mesh_fit = 0.0;

  double smoothness(const LossWeights& w) const;
  double self_consistency(const LossWeights& w) const;
  double scene_consistency(const LossWeights& w) const;
  double sensor_consistency(const LossWeights& w) const;
  double total(const LossWeights& w) const;  // sum of the four families

  std::array<double, 12> as_array() const;  // term-index order below
};

// Stable term indexing for traces and breakdown records.
inline constexpr int kTermCount = 12;
const char* term_name(int term);           // e.g. "trans_accel"
uint32_t term_group(int term);             // family bit of the term

// Family selection bits.
inline constexpr uint32_t kSmoothnessTerms = 1u << 0;
inline constexpr uint32_t kSelfTerms = 1u << 1;
inline constexpr uint32_t kSceneTerms = 1u << 2;
inline constexpr uint32_t kSensorTerms = 1u << 3;
inline constexpr uint32_t kAllTerms = 0xFu;

// Which variable blocks the current stage optimizes. Frozen blocks enter the
// evaluation as constants: their gradients are exactly zero and the posed
// geometry they determine is precomputed once at bind time.
struct StageMask {
  bool trans = true;
  bool rot = false;
  bool pose = false;
};

// One optimization window over k consecutive frames of one person.
// Non-owning except for the variables: every pointer must outlive the
// evaluation. Crops, the sensor trajectory and the scene live in the world
// frame; head_offset is the sensor mount point in the head frame.
struct WindowContext {
  const body::ShapedBody* body = nullptr;
  std::vector<body::PoseFrame> vars;  // k frames; `time` is ignored here

  const geom::SceneIndex* scene = nullptr;
  const std::vector<geom::Cloud>* crops = nullptr;        // per frame
  const std::vector<geom::KdTree>* crop_trees = nullptr;  // optional, over crops
  std::vector<uint8_t> visible;                           // size k

  std::vector<Vec3> lidar_pos;  // sensor position per frame, empty when unused
  std::vector<Mat3> lidar_rot;  // sensor orientation per frame
  Vec3 head_offset = Vec3::Zero();
  std::vector<std::vector<Vec3>> theta_prior;  // per frame, J-1 rows

  sensor::SensorSpec sensor;
  int iter = 1;               // global iteration count across stages, >= 1
  bool lidar_wearer = false;  // wearer gets the head term, the other person
                              // the cloud/mesh terms

  size_t frames() const { return vars.size(); }
  void validate() const;  // throws std::runtime_error
};

// --- frozen correspondence snapshot -----------------------------------------

// Two body vertices of distinct regions in penetration at bind time; `a`/`b`
// are slots into the frame's needed-vertex list, `normal` the area-weighted
// outward vertex normal at b, frozen.
struct RegionPair {
  int32_t a = -1, b = -1;
  Vec3 normal = Vec3::Zero();
};

// Body vertex behind a scene surface at bind time; the surface point and its
// outward normal are frozen.
struct SceneAnchor {
  int32_t slot = -1;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

// Stable-foot vertex and its nearest ground point at bind time.
struct ContactAnchor {
  int32_t slot = -1;
  Vec3 point = Vec3::Zero();
};

// A point tied to a body face: the tape-side point is the barycentric
// combination of the three corner slots, the target is a fixed world point.
// Cloud fit: resampled surface point vs its nearest crop point. Mesh fit:
// nearest surface point vs the crop point itself.
struct FacePair {
  std::array<int32_t, 3> corner = {-1, -1, -1};
  Vec3 bary = Vec3::Zero();
  Vec3 target = Vec3::Zero();
};

// Stable-foot vertex slots of the two frames of one consecutive pair; empty
// when the pair has no stable foot.
struct SlidePair {
  std::vector<int32_t> a;  // slots in frame i
  std::vector<int32_t> b;  // slots in frame i+1
};

struct FrameBindings {
  std::vector<int32_t> needed;  // sorted unique vertex ids posed on the tape

  // Reduced-mode constants, valid while the frozen blocks keep their
  // bind-time values. Translation-only: world vertex/joint minus T and the
  // world head rotation. Translation+rotation: root-relative skin points,
  // root-relative joint offsets and the root-relative head rotation.
  std::vector<Vec3> vert_const;   // per needed slot
  std::vector<Vec3> joint_const;  // per joint
  Mat3 head_rot_const = Mat3::Identity();

  std::vector<ContactAnchor> contact;
  std::vector<RegionPair> self_pairs;
  std::vector<SceneAnchor> scene_pairs;
  std::vector<FacePair> cloud_pairs;
  std::vector<FacePair> mesh_pairs;
};

// Everything term evaluation needs beyond the variables, frozen at one
// iterate. Values computed against a snapshot are exact at that iterate and
// stay finite-difference-consistent under perturbations of the active blocks.
struct Bindings {
  StageMask mask;
  LossWeights weights;
  uint32_t groups = 0;
  std::array<bool, 12> active = {};  // term enabled and applicable

  std::vector<FrameBindings> frame;   // k
  std::vector<SlidePair> slide;       // k-1
  std::vector<body::Foot> stable;     // k-1, per consecutive pair
};

// Gradient with respect to the window variables, frame-major with layout
// [T xyz, root R xyz, theta rows xyz...]. Masked-off blocks stay zero.
struct WindowGrad {
  int frames = 0;
  int joints = 0;
  std::vector<double> data;

  int stride() const { return 6 + 3 * (joints - 1); }
  double* frame(int f) { return data.data() + static_cast<size_t>(f) * stride(); }
  const double* frame(int f) const {
    return data.data() + static_cast<size_t>(f) * stride();
  }
  void reset(int frames_, int joints_);
};

// Builds the correspondence snapshot for every term enabled by `groups`, the
// weights and the person role, at the current ctx.vars. Validates the
// context and that each enabled term has the inputs it needs.
Bindings bind_window(const WindowContext& ctx, const LossWeights& w,
                     const StageMask& mask, uint32_t groups = kAllTerms);

// Evaluates the requested families at ctx.vars under a snapshot built for a
// superset of `groups` (std::logic_error otherwise). Returns the weighted
// sum; fills unweighted per-term values and, when grad is non-null, the
// gradient of the weighted sum for the active blocks. Throws
// std::runtime_error naming the term if any value comes out non-finite.
double eval_window(const WindowContext& ctx, const Bindings& bind, uint32_t groups,
                   TermValues* terms = nullptr, WindowGrad* grad = nullptr);

// Standalone family evaluations and the full objective. Each builds a fresh
// snapshot at the current variables with every block active; the optimizer
// uses bind_window/eval_window directly to reuse snapshots across terms.
double smoothness_loss(const WindowContext& ctx, const LossWeights& w,
                       TermValues* terms = nullptr, WindowGrad* grad = nullptr);
double self_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                             TermValues* terms = nullptr, WindowGrad* grad = nullptr);
double scene_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                              TermValues* terms = nullptr, WindowGrad* grad = nullptr);
double sensor_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                               TermValues* terms = nullptr, WindowGrad* grad = nullptr);
double total_loss(const WindowContext& ctx, const LossWeights& w,
                  TermValues* terms = nullptr, WindowGrad* grad = nullptr);

}  // namespace egofuse::loss
