#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "egofuse/scalar_geom.hpp"

namespace egofuse::body {

// Skinned articulated body: kinematic tree, linear-blend skinning, a linear
// joint regressor and a linear shape basis. Parents are topologically ordered
// (parents[j] < j, parents[0] == -1). Pose parameters are per-joint axis-angle
// vectors: the root's goes in PoseFrame::R, the remaining J-1 in theta.
struct BodyModel {
  int joints = 0;
  int vertices = 0;
  int shape_basis = 0;  // 0 when the body has no shape blendshapes

  std::vector<int> parents;                    // J
  std::vector<Vec3> template_verts;            // N
  std::vector<double> shape_dirs;              // N*3*B, [v][xyz][b], empty if B==0
  std::vector<double> joint_regressor;         // J*N row-major, rows sum to 1
  std::vector<std::array<int32_t, 4>> skin_j;  // per vertex, -1 padded
  std::vector<std::array<double, 4>> skin_w;   // nonneg, sums to 1

  std::vector<std::string> region_names;
  std::vector<uint8_t> region;  // N, index into region_names

  std::vector<int32_t> left_foot;   // sole vertex indices, disjoint from right
  std::vector<int32_t> right_foot;

  std::vector<std::array<int32_t, 3>> faces;

  // Joint ids the engine needs by role.
  int pelvis_joint = 0;
  int head_joint = 0;

  // Chain from root to head (inclusive), derived from parents.
  std::vector<int> head_chain;

  void finalize();                      // derives head_chain, checks structure
  std::string validate() const;         // empty string when well-formed
};

struct PoseFrame {
  double time = 0.0;
  Vec3 T = Vec3::Zero();
  Vec3 R = Vec3::Zero();            // root axis-angle
  std::vector<Vec3> theta;          // J-1 axis-angle
};

// frame_tag: 'I' inertial-capture frame, 'W' world, 'L' lidar.
struct MotionSequence {
  double fps = 0.0;
  char frame_tag = 'W';
  Eigen::VectorXd beta;             // may be size 0
  std::vector<PoseFrame> frames;
};

// Template vertices and rest joints after applying the shape vector; the
// per-frame pose path never touches beta again.
struct ShapedBody {
  const BodyModel* model = nullptr;
  std::vector<Vec3> verts0;
  std::vector<Vec3> joints0;
};

ShapedBody shape_body(const BodyModel& m, const Eigen::VectorXd& beta);

// --- forward kinematics, templated over scalar ------------------------------

template <class S>
struct FkJoints {
  std::vector<M3<S>> rot;  // global rotation per joint
  std::vector<V3<S>> pos;  // global joint position, excluding the root T
};

template <class S>
void forward_kinematics(const std::vector<int>& parents, const std::vector<Vec3>& joints0,
                        const V3<S>& rootR, std::span<const V3<S>> theta,
                        FkJoints<S>* out) {
  const int J = static_cast<int>(parents.size());
  out->rot.resize(J);
  out->pos.resize(J);
  out->rot[0] = rodrigues(rootR);
  out->pos[0] = v3<S>(S(joints0[0].x()), S(joints0[0].y()), S(joints0[0].z()));
  for (int j = 1; j < J; ++j) {
    const int p = parents[j];
    const M3<S> local = rodrigues(theta[j - 1]);
    out->rot[j] = mat_mul(out->rot[p], local);
    const Vec3 off = joints0[j] - joints0[p];
    const V3<S> offs = v3<S>(S(off.x()), S(off.y()), S(off.z()));
    out->pos[j] = mat_apply(out->rot[p], offs) + out->pos[p];
  }
}

// Linear-blend skin of one vertex; add the frame translation afterwards.
template <class S>
V3<S> skin_vertex(const BodyModel& m, const std::vector<Vec3>& verts0,
                  const std::vector<Vec3>& joints0, const FkJoints<S>& fk, int v) {
  V3<S> acc = v3<S>(S(0.0), S(0.0), S(0.0));
  const auto& js = m.skin_j[v];
  const auto& ws = m.skin_w[v];
  for (int k = 0; k < 4; ++k) {
    const int j = js[k];
    if (j < 0) break;
    const Vec3 rel = verts0[v] - joints0[j];
    const V3<S> rels = v3<S>(S(rel.x()), S(rel.y()), S(rel.z()));
    const V3<S> part = mat_apply(fk.rot[j], rels) + fk.pos[j];
    acc = acc + S(ws[k]) * part;
  }
  return acc;
}

// --- plain-double conveniences ----------------------------------------------

struct Posed {
  std::vector<Vec3> verts;
  std::vector<Vec3> joints;
};

// Full pose: world vertices and joints (T applied).
Posed forward(const ShapedBody& body, const PoseFrame& f);

// FK only (no skinning); positions exclude T.
FkJoints<double> forward_joints(const ShapedBody& body, const PoseFrame& f);

// Rotation of the head joint: ordered product of the axis-angle rotations
// along the chain root..head. Equals the FK global rotation of the head.
Mat3 head_rotation(const BodyModel& m, const PoseFrame& f);

// Posed pelvis joint minus posed head joint. The global T cancels.
Vec3 pelvis_head_offset(const ShapedBody& body, const PoseFrame& f);

enum class Foot : uint8_t { none = 0, left = 1, right = 2 };

// One decision per consecutive frame pair: the foot whose mean vertex
// displacement is below 0.02 m and smaller than the other foot's. Ties break
// to left; Foot::none when neither qualifies.
std::vector<Foot> stable_feet(const ShapedBody& body, const MotionSequence& seq);

// Same rule, driven by externally supplied per-frame foot vertex positions
// (the optimizer refreshes stability from current iterates).
Foot stable_foot_pair(const std::vector<Vec3>& left_a, const std::vector<Vec3>& left_b,
                      const std::vector<Vec3>& right_a,
                      const std::vector<Vec3>& right_b);

// Area-weighted outward vertex normals for the given posed vertices.
std::vector<Vec3> vertex_normals(const BodyModel& m, const std::vector<Vec3>& verts);

// --- bundled procedural body --------------------------------------------------

// Capsule-limb body: 24 joints, ~600 vertices at density 1, labeled regions
// {torso, head, left_arm, right_arm, left_hand, right_hand, left_leg,
// right_leg} and exact sole vertex sets (soles lie in z = -1 in the template;
// standing height ~1.8). density < 1 thins rings for cheap test bodies.
BodyModel make_test_body(double density = 1.0);

// --- archive io ---------------------------------------------------------------

void save_model(const BodyModel& m, const std::string& path);
BodyModel load_model(const std::string& path);

// Converts a JSON parameter dump with SMPL-layout fields (v_template,
// J_regressor, kintree_table/parents, weights, f, optional shapedirs) into a
// BodyModel; regions/feet are derived from dominant skin joints.
BodyModel from_smpl_json(const std::string& json_path);

}  // namespace egofuse::body
