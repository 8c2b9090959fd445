#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "egofuse/body_model.hpp"
#include "egofuse/mathutil.hpp"
#include "egofuse/rng.hpp"

using namespace egofuse;
using namespace egofuse::body;

namespace {

PoseFrame random_pose(const BodyModel& m, uint64_t seed, double scale = 0.4) {
  Rng rng(seed);
  PoseFrame f;
  f.T = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 2));
  f.R = scale * Vec3(rng.normal(), rng.normal(), rng.normal());
  f.theta.resize(m.joints - 1);
  for (auto& th : f.theta) th = scale * Vec3(rng.normal(), rng.normal(), rng.normal());
  return f;
}

// Dense homogeneous-matrix forward kinematics, the straightforward textbook
// form; the production version must agree with it everywhere.
struct DenseFk {
  std::vector<Mat4> G;  // world transform per joint (T excluded)
};

DenseFk dense_fk(const BodyModel& m, const std::vector<Vec3>& joints0,
                 const PoseFrame& f) {
  DenseFk out;
  out.G.resize(m.joints);
  for (int j = 0; j < m.joints; ++j) {
    const Vec3 aa = (j == 0) ? f.R : f.theta[j - 1];
    Mat4 local = Mat4::Identity();
    local.block<3, 3>(0, 0) = aa_to_matrix(aa);
    local.block<3, 1>(0, 3) =
        (j == 0) ? joints0[0] : Vec3(joints0[j] - joints0[m.parents[j]]);
    out.G[j] = (j == 0) ? local : Mat4(out.G[m.parents[j]] * local);
  }
  return out;
}

}  // namespace

TEST_CASE("bundled body is structurally valid") {
  const BodyModel m = make_test_body();
  CHECK(m.validate().empty());
  CHECK(m.joints == 24);
  CHECK(m.vertices > 500);
  CHECK(!m.head_chain.empty());
  CHECK(m.head_chain.front() == 0);
  CHECK(m.head_chain.back() == m.head_joint);
  for (size_t i = 1; i < m.head_chain.size(); ++i)
    CHECK(m.parents[m.head_chain[i]] == m.head_chain[i - 1]);

  // Sole vertices sit exactly on the template ground plane.
  for (const int32_t v : m.left_foot) CHECK(m.template_verts[v].z() == -1.0);
  for (const int32_t v : m.right_foot) CHECK(m.template_verts[v].z() == -1.0);
  // Left/right sides by x sign.
  for (const int32_t v : m.left_foot) CHECK(m.template_verts[v].x() < 0.0);
  for (const int32_t v : m.right_foot) CHECK(m.template_verts[v].x() > 0.0);

  // The mesh is closed and wound outward: positive volume by divergence.
  double vol6 = 0.0;
  for (const auto& f : m.faces)
    vol6 += m.template_verts[f[0]].dot(
        m.template_verts[f[1]].cross(m.template_verts[f[2]]));
  CHECK(vol6 > 0.0);

  // Every edge is shared by exactly two faces (watertight).
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : m.faces)
    for (int c = 0; c < 3; ++c) {
      int a = f[c], b = f[(c + 1) % 3];
      edges[{std::min(a, b), std::max(a, b)}]++;
    }
  for (const auto& [e, cnt] : edges) CHECK(cnt == 2);
}

TEST_CASE("regressor reproduces the rest joints the parts were built around") {
  const BodyModel m = make_test_body();
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  // Rest FK with identity pose puts every joint at its regressed position.
  PoseFrame rest;
  rest.theta.assign(m.joints - 1, Vec3::Zero());
  const Posed p = forward(body, rest);
  for (int j = 0; j < m.joints; ++j)
    CHECK((p.joints[j] - body.joints0[j]).norm() < 1e-12);
  // And the skin at rest is the template itself.
  for (int v = 0; v < m.vertices; ++v)
    CHECK((p.verts[v] - m.template_verts[v]).norm() < 1e-12);

  // Anatomical sanity of the derived joints.
  CHECK(body.joints0[m.head_joint].z() > 0.55);
  CHECK(body.joints0[m.pelvis_joint].norm() < 0.15);
}

TEST_CASE("forward kinematics agrees with the dense-matrix reference") {
  const BodyModel m = make_test_body(0.5);
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const PoseFrame f = random_pose(m, seed);
    const FkJoints<double> fk = forward_joints(body, f);
    const DenseFk ref = dense_fk(m, body.joints0, f);
    for (int j = 0; j < m.joints; ++j) {
      const Mat3 R = to_eigen(fk.rot[j]);
      const Vec3 p = to_eigen(fk.pos[j]);
      CHECK((R - ref.G[j].block<3, 3>(0, 0)).norm() < 1e-12);
      CHECK((p - ref.G[j].block<3, 1>(0, 3)).norm() < 1e-12);
    }
  }
}

TEST_CASE("skinning agrees with the dense-matrix reference") {
  const BodyModel m = make_test_body(0.5);
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  const PoseFrame f = random_pose(m, 17);
  const Posed posed = forward(body, f);
  const DenseFk ref = dense_fk(m, body.joints0, f);
  for (int v = 0; v < m.vertices; ++v) {
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
      const int j = m.skin_j[v][k];
      if (j < 0) break;
      const Vec3 rest = body.verts0[v] - body.joints0[j];
      const Mat4& A = ref.G[j];
      acc += m.skin_w[v][k] * Vec3(A.block<3, 3>(0, 0) * rest + A.block<3, 1>(0, 3));
    }
    CHECK((acc + f.T - posed.verts[v]).norm() < 1e-12);
  }
}

TEST_CASE("head rotation equals the chain product and the FK block") {
  const BodyModel m = make_test_body(0.5);
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  const PoseFrame f = random_pose(m, 23);
  const Mat3 Rh = head_rotation(m, f);
  const FkJoints<double> fk = forward_joints(body, f);
  CHECK((Rh - to_eigen(fk.rot[m.head_joint])).norm() < 1e-12);

  // Explicit product along the chain.
  Mat3 prod = Mat3::Identity();
  for (const int j : m.head_chain)
    prod = prod * aa_to_matrix(j == 0 ? f.R : f.theta[j - 1]);
  CHECK((Rh - prod).norm() == 0.0);
}

TEST_CASE("pelvis-head offset is translation invariant") {
  const BodyModel m = make_test_body(0.5);
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  PoseFrame f = random_pose(m, 31);
  const Vec3 off = pelvis_head_offset(body, f);
  const Posed posed = forward(body, f);
  CHECK((off - (posed.joints[m.pelvis_joint] - posed.joints[m.head_joint])).norm() <
        1e-12);
  f.T += Vec3(10, -3, 7);
  CHECK((pelvis_head_offset(body, f) - off).norm() == 0.0);
}

TEST_CASE("stable foot selection follows displacement and tie rules") {
  using V = std::vector<Vec3>;
  const V still{{0, 0, 0}, {0.1, 0, 0}};
  const V still_b = still;
  V moved = still;
  for (auto& p : moved) p += Vec3(0.05, 0, 0);
  V slight = still;
  for (auto& p : slight) p += Vec3(0.019, 0, 0);
  V at_threshold = still;
  for (auto& p : at_threshold) p += Vec3(0.02, 0, 0);

  // Left still, right swings.
  CHECK(stable_foot_pair(still, still_b, still, moved) == Foot::left);
  // Right still, left swings.
  CHECK(stable_foot_pair(still, moved, still, still_b) == Foot::right);
  // Both below threshold: smaller displacement wins.
  CHECK(stable_foot_pair(still, slight, still, still_b) == Foot::right);
  // Exact tie goes left.
  CHECK(stable_foot_pair(still, still_b, still, still_b) == Foot::left);
  // Displacement exactly at the threshold is not stable.
  CHECK(stable_foot_pair(still, at_threshold, still, at_threshold) == Foot::none);
  // Both moving fast: none.
  CHECK(stable_foot_pair(still, moved, still, moved) == Foot::none);
}

TEST_CASE("per-sequence stability marks stance and flight correctly") {
  const BodyModel m = make_test_body(0.5);
  const ShapedBody body = shape_body(m, Eigen::VectorXd());
  MotionSequence seq;
  seq.fps = 20.0;
  PoseFrame f;
  f.theta.assign(m.joints - 1, Vec3::Zero());
  f.T = Vec3(0, 0, 1.0);
  seq.frames.push_back(f);      // rest
  seq.frames.push_back(f);      // identical: tie, left
  f.T.y() += 0.5;
  seq.frames.push_back(f);      // whole body jumps forward: none
  const auto feet = stable_feet(body, seq);
  REQUIRE(feet.size() == 2);
  CHECK(feet[0] == Foot::left);
  CHECK(feet[1] == Foot::none);
}

TEST_CASE("vertex normals point outward on the rest body") {
  const BodyModel m = make_test_body();
  const auto normals = vertex_normals(m, m.template_verts);
  for (int v = 0; v < m.vertices; ++v)
    CHECK(normals[v].norm() == doctest::Approx(1.0));

  // Each body part is roughly star-shaped around its own centroid, so the
  // direction away from the part centroid agrees with the normal almost
  // everywhere (a handful of junction-facing vertices may disagree). A global
  // centroid would not work: inner arm and thigh surfaces legitimately face
  // the body center.
  const size_t nr = m.region_names.size();
  std::vector<Vec3> centroid(nr, Vec3::Zero());
  std::vector<int> count(nr, 0);
  for (int v = 0; v < m.vertices; ++v) {
    centroid[m.region[v]] += m.template_verts[v];
    count[m.region[v]]++;
  }
  for (size_t r = 0; r < nr; ++r)
    if (count[r] > 0) centroid[r] /= count[r];
  int outward = 0;
  for (int v = 0; v < m.vertices; ++v)
    outward += (normals[v].dot(m.template_verts[v] - centroid[m.region[v]]) > 0.0);
  CHECK(outward > m.vertices * 90 / 100);

  // Sole vertices face straight down; the top of the head faces up.
  for (const int32_t v : m.left_foot) CHECK(normals[v].z() < -0.7);
  for (const int32_t v : m.right_foot) CHECK(normals[v].z() < -0.7);
  int top = 0;
  for (int v = 1; v < m.vertices; ++v)
    if (m.template_verts[v].z() > m.template_verts[top].z()) top = v;
  CHECK(normals[top].z() > 0.7);
}

TEST_CASE("archive round-trips every field") {
  const BodyModel m = make_test_body(0.6);
  const std::string path = "/tmp/egofuse_model_rt.efbm";
  save_model(m, path);
  const BodyModel r = load_model(path);
  std::filesystem::remove(path);

  CHECK(r.joints == m.joints);
  CHECK(r.vertices == m.vertices);
  CHECK(r.shape_basis == m.shape_basis);
  CHECK(r.parents == m.parents);
  CHECK(r.pelvis_joint == m.pelvis_joint);
  CHECK(r.head_joint == m.head_joint);
  CHECK(r.head_chain == m.head_chain);
  for (int v = 0; v < m.vertices; ++v) {
    CHECK(r.template_verts[v] == m.template_verts[v]);
    CHECK(r.skin_j[v] == m.skin_j[v]);
    CHECK(r.skin_w[v] == m.skin_w[v]);
  }
  CHECK(r.shape_dirs == m.shape_dirs);
  CHECK(r.joint_regressor == m.joint_regressor);
  CHECK(r.region_names == m.region_names);
  CHECK(r.region == m.region);
  CHECK(r.left_foot == m.left_foot);
  CHECK(r.right_foot == m.right_foot);
  CHECK(r.faces == m.faces);
}

TEST_CASE("validation rejects corrupted models") {
  const BodyModel good = make_test_body(0.5);

  BodyModel bad = good;
  bad.parents[5] = 7;  // forward reference
  CHECK(!bad.validate().empty());

  bad = good;
  bad.joint_regressor[3] += 0.5;  // row sum off
  CHECK(!bad.validate().empty());

  bad = good;
  bad.skin_w[0][0] += 0.1;  // weight sum off
  CHECK(!bad.validate().empty());

  bad = good;
  bad.left_foot.push_back(good.right_foot[0]);  // overlap
  CHECK(!bad.validate().empty());

  bad = good;
  bad.region[2] = 200;  // out of range
  CHECK(!bad.validate().empty());

  bad = good;
  bad.head_joint = 99;
  CHECK(!bad.validate().empty());
}

TEST_CASE("density scaling produces smaller valid bodies") {
  const BodyModel full = make_test_body(1.0);
  const BodyModel slim = make_test_body(0.35);
  CHECK(slim.validate().empty());
  CHECK(slim.vertices < full.vertices);
  CHECK(slim.joints == full.joints);
  CHECK(!slim.left_foot.empty());
  CHECK(!slim.right_foot.empty());
}
