#include "egofuse/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace egofuse::body {

void BodyModel::finalize() {
  const std::string err = validate();
  if (!err.empty()) throw std::runtime_error("body model: " + err);
  head_chain.clear();
  for (int j = head_joint; j >= 0; j = parents[j]) head_chain.push_back(j);
  std::reverse(head_chain.begin(), head_chain.end());
}

std::string BodyModel::validate() const {
  if (joints <= 0 || vertices <= 0) return "empty model";
  if (static_cast<int>(parents.size()) != joints) return "parents size";
  if (parents[0] != -1) return "root parent must be -1";
  for (int j = 1; j < joints; ++j)
    if (parents[j] < 0 || parents[j] >= j) return "parents must be topologically ordered";
  if (static_cast<int>(template_verts.size()) != vertices) return "template size";
  if (shape_basis > 0 &&
      static_cast<int>(shape_dirs.size()) != vertices * 3 * shape_basis)
    return "shape_dirs size";
  if (static_cast<int>(joint_regressor.size()) != joints * vertices)
    return "regressor size";
  for (int j = 0; j < joints; ++j) {
    double s = 0.0;
    for (int v = 0; v < vertices; ++v) s += joint_regressor[j * vertices + v];
    if (std::abs(s - 1.0) > 1e-9) return "regressor row must sum to 1";
  }
  if (static_cast<int>(skin_j.size()) != vertices ||
      static_cast<int>(skin_w.size()) != vertices)
    return "skin size";
  for (int v = 0; v < vertices; ++v) {
    double s = 0.0;
    bool ended = false;
    for (int k = 0; k < 4; ++k) {
      if (skin_j[v][k] < 0) {
        ended = true;
        continue;
      }
      if (ended) return "skin joints must be front-packed";
      if (skin_j[v][k] >= joints) return "skin joint out of range";
      if (skin_w[v][k] < -1e-12) return "negative skin weight";
      s += skin_w[v][k];
    }
    if (std::abs(s - 1.0) > 1e-9) return "skin weights must sum to 1";
  }
  if (static_cast<int>(region.size()) != vertices) return "region size";
  for (const uint8_t r : region)
    if (r >= region_names.size()) return "region id out of range";
  if (left_foot.empty() || right_foot.empty()) return "foot sets must be non-empty";
  for (const int32_t v : left_foot)
    for (const int32_t w : right_foot)
      if (v == w) return "foot sets must be disjoint";
  if (pelvis_joint < 0 || pelvis_joint >= joints || head_joint < 0 ||
      head_joint >= joints)
    return "pelvis/head joint out of range";
  return {};
}

ShapedBody shape_body(const BodyModel& m, const Eigen::VectorXd& beta) {
  ShapedBody out;
  out.model = &m;
  out.verts0 = m.template_verts;
  const int B = std::min<int>(m.shape_basis, static_cast<int>(beta.size()));
  for (int b = 0; b < B; ++b) {
    const double coef = beta[b];
    if (coef == 0.0) continue;
    for (int v = 0; v < m.vertices; ++v) {
      const double* d = &m.shape_dirs[(v * 3) * m.shape_basis + b];
      out.verts0[v].x() += coef * d[0];
      out.verts0[v].y() += coef * d[m.shape_basis];
      out.verts0[v].z() += coef * d[2 * m.shape_basis];
    }
  }
  out.joints0.assign(m.joints, Vec3::Zero());
  for (int j = 0; j < m.joints; ++j) {
    Vec3 acc = Vec3::Zero();
    const double* row = &m.joint_regressor[static_cast<size_t>(j) * m.vertices];
    for (int v = 0; v < m.vertices; ++v) acc += row[v] * out.verts0[v];
    out.joints0[j] = acc;
  }
  return out;
}

FkJoints<double> forward_joints(const ShapedBody& body, const PoseFrame& f) {
  FkJoints<double> fk;
  std::vector<V3<double>> theta(f.theta.size());
  for (size_t k = 0; k < f.theta.size(); ++k) theta[k] = from_eigen(f.theta[k]);
  forward_kinematics(body.model->parents, body.joints0, from_eigen(f.R),
                     std::span<const V3<double>>(theta), &fk);
  return fk;
}

Posed forward(const ShapedBody& body, const PoseFrame& f) {
  const BodyModel& m = *body.model;
  const FkJoints<double> fk = forward_joints(body, f);
  Posed out;
  out.joints.resize(m.joints);
  for (int j = 0; j < m.joints; ++j) out.joints[j] = to_eigen(fk.pos[j]) + f.T;
  out.verts.resize(m.vertices);
  for (int v = 0; v < m.vertices; ++v)
    out.verts[v] = to_eigen(skin_vertex(m, body.verts0, body.joints0, fk, v)) + f.T;
  return out;
}

Mat3 head_rotation(const BodyModel& m, const PoseFrame& f) {
  Mat3 R = Mat3::Identity();
  for (const int j : m.head_chain) {
    const Vec3 aa = (j == 0) ? f.R : f.theta[j - 1];
    R = R * aa_to_matrix(aa);
  }
  return R;
}

Vec3 pelvis_head_offset(const ShapedBody& body, const PoseFrame& f) {
  const FkJoints<double> fk = forward_joints(body, f);
  return to_eigen(fk.pos[body.model->pelvis_joint]) -
         to_eigen(fk.pos[body.model->head_joint]);
}

namespace {

std::vector<Vec3> foot_positions(const ShapedBody& body, const FkJoints<double>& fk,
                                 const Vec3& T, const std::vector<int32_t>& set) {
  std::vector<Vec3> out(set.size());
  for (size_t i = 0; i < set.size(); ++i)
    out[i] =
        to_eigen(skin_vertex(*body.model, body.verts0, body.joints0, fk, set[i])) + T;
  return out;
}

double mean_displacement(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).norm();
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

}  // namespace

Foot stable_foot_pair(const std::vector<Vec3>& left_a, const std::vector<Vec3>& left_b,
                      const std::vector<Vec3>& right_a,
                      const std::vector<Vec3>& right_b) {
  constexpr double kStill = 0.02;
  const double dl = mean_displacement(left_a, left_b);
  const double dr = mean_displacement(right_a, right_b);
  if (dl < kStill && dl <= dr) return Foot::left;
  if (dr < kStill && dr < dl) return Foot::right;
  return Foot::none;
}

std::vector<Foot> stable_feet(const ShapedBody& body, const MotionSequence& seq) {
  const size_t n = seq.frames.size();
  std::vector<Foot> out(n > 0 ? n - 1 : 0, Foot::none);
  if (n < 2) return out;
  const BodyModel& m = *body.model;
  FkJoints<double> fk = forward_joints(body, seq.frames[0]);
  std::vector<Vec3> la = foot_positions(body, fk, seq.frames[0].T, m.left_foot);
  std::vector<Vec3> ra = foot_positions(body, fk, seq.frames[0].T, m.right_foot);
  for (size_t i = 1; i < n; ++i) {
    fk = forward_joints(body, seq.frames[i]);
    std::vector<Vec3> lb = foot_positions(body, fk, seq.frames[i].T, m.left_foot);
    std::vector<Vec3> rb = foot_positions(body, fk, seq.frames[i].T, m.right_foot);
    out[i - 1] = stable_foot_pair(la, lb, ra, rb);
    la = std::move(lb);
    ra = std::move(rb);
  }
  return out;
}

std::vector<Vec3> vertex_normals(const BodyModel& m, const std::vector<Vec3>& verts) {
  std::vector<Vec3> normals(verts.size(), Vec3::Zero());
  for (const auto& f : m.faces) {
    const Vec3 e1 = verts[f[1]] - verts[f[0]];
    const Vec3 e2 = verts[f[2]] - verts[f[0]];
    const Vec3 an = e1.cross(e2);  // 2*area-weighted
    normals[f[0]] += an;
    normals[f[1]] += an;
    normals[f[2]] += an;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    if (len > 1e-20) n /= len;
  }
  return normals;
}

}  // namespace egofuse::body
