#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "egofuse/body_model.hpp"
#include "egofuse/io_util.hpp"

// Body model archive. Layout is documented in docs/model_format.md; bump the
// version whenever a field changes meaning or order.

namespace egofuse::body {

static constexpr char kModelMagic[4] = {'E', 'F', 'B', 'M'};
static constexpr uint32_t kModelVersion = 1;

void save_model(const BodyModel& m, const std::string& path) {
  io::BinWriter w(path);
  w.magic(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<uint32_t>(m.joints));
  w.u32(static_cast<uint32_t>(m.vertices));
  w.u32(static_cast<uint32_t>(m.faces.size()));
  w.u32(static_cast<uint32_t>(m.shape_basis));
  for (int p : m.parents) w.i32(p);
  w.u32(static_cast<uint32_t>(m.pelvis_joint));
  w.u32(static_cast<uint32_t>(m.head_joint));
  for (const auto& v : m.template_verts) w.f64s(v.data(), 3);
  w.f64s(m.shape_dirs.data(), m.shape_dirs.size());
  w.f64s(m.joint_regressor.data(), m.joint_regressor.size());
  for (int v = 0; v < m.vertices; ++v) {
    for (int k = 0; k < 4; ++k) w.i32(m.skin_j[v][k]);
    w.f64s(m.skin_w[v].data(), 4);
  }
  w.u32(static_cast<uint32_t>(m.region_names.size()));
  for (const auto& name : m.region_names) w.str(name);
  for (uint8_t r : m.region) w.u8(r);
  w.u32(static_cast<uint32_t>(m.left_foot.size()));
  for (int32_t v : m.left_foot) w.i32(v);
  w.u32(static_cast<uint32_t>(m.right_foot.size()));
  for (int32_t v : m.right_foot) w.i32(v);
  for (const auto& f : m.faces)
    for (int c = 0; c < 3; ++c) w.i32(f[c]);
  w.close();
}

BodyModel load_model(const std::string& path) {
  io::BinReader r(path);
  r.expect_magic(kModelMagic);
  const uint32_t ver = r.u32();
  if (ver != kModelVersion)
    throw std::runtime_error(path + ": unsupported model version " + std::to_string(ver));
  BodyModel m;
  m.joints = static_cast<int>(r.u32());
  m.vertices = static_cast<int>(r.u32());
  const uint32_t nfaces = r.u32();
  m.shape_basis = static_cast<int>(r.u32());
  if (m.joints <= 0 || m.joints > 256 || m.vertices <= 0 || m.vertices > (1 << 22))
    throw std::runtime_error(path + ": implausible model dimensions");
  m.parents.resize(m.joints);
  for (int j = 0; j < m.joints; ++j) m.parents[j] = r.i32();
  m.pelvis_joint = static_cast<int>(r.u32());
  m.head_joint = static_cast<int>(r.u32());
  m.template_verts.resize(m.vertices);
  for (auto& v : m.template_verts) r.f64s(v.data(), 3);
  m.shape_dirs.resize(static_cast<size_t>(m.vertices) * 3 * m.shape_basis);
  r.f64s(m.shape_dirs.data(), m.shape_dirs.size());
  m.joint_regressor.resize(static_cast<size_t>(m.joints) * m.vertices);
  r.f64s(m.joint_regressor.data(), m.joint_regressor.size());
  m.skin_j.resize(m.vertices);
  m.skin_w.resize(m.vertices);
  for (int v = 0; v < m.vertices; ++v) {
    for (int k = 0; k < 4; ++k) m.skin_j[v][k] = r.i32();
    r.f64s(m.skin_w[v].data(), 4);
  }
  const uint32_t nregions = r.u32();
  if (nregions > 255) throw std::runtime_error(path + ": too many regions");
  m.region_names.resize(nregions);
  for (auto& name : m.region_names) name = r.str();
  m.region.resize(m.vertices);
  for (int v = 0; v < m.vertices; ++v) m.region[v] = r.u8();
  m.left_foot.resize(r.u32());
  for (auto& v : m.left_foot) v = r.i32();
  m.right_foot.resize(r.u32());
  for (auto& v : m.right_foot) v = r.i32();
  m.faces.resize(nfaces);
  for (auto& f : m.faces)
    for (int c = 0; c < 3; ++c) f[c] = r.i32();
  m.finalize();
  return m;
}

// Converts a skinned-body JSON export into the archive layout. Weights are
// truncated to the 4 strongest influences and renormalized. Regions default
// to a dominant-joint partition; sole sets default to the vertices dominated
// by an ankle/toe joint that sit in the lowest 30% of those vertices' height
// span, mirroring how contact sets are drawn for bodies without explicit
// sole annotations.
BodyModel from_smpl_json(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open: " + json_path);
  nlohmann::json j;
  in >> j;

  BodyModel m;
  const auto& verts = j.at("v_template");
  m.vertices = static_cast<int>(verts.size());
  m.template_verts.resize(m.vertices);
  for (int v = 0; v < m.vertices; ++v)
    for (int c = 0; c < 3; ++c) m.template_verts[v][c] = verts[v][c].get<double>();

  const auto& tree = j.at("kintree_parents");
  m.joints = static_cast<int>(tree.size());
  m.parents.resize(m.joints);
  for (int q = 0; q < m.joints; ++q) m.parents[q] = tree[q].get<int>();
  if (m.joints > 0 && m.parents[0] != -1) m.parents[0] = -1;

  if (j.contains("shapedirs")) {
    const auto& sd = j["shapedirs"];
    m.shape_basis = static_cast<int>(sd[0][0].size());
    m.shape_dirs.resize(static_cast<size_t>(m.vertices) * 3 * m.shape_basis);
    for (int v = 0; v < m.vertices; ++v)
      for (int c = 0; c < 3; ++c)
        for (int b = 0; b < m.shape_basis; ++b)
          m.shape_dirs[(static_cast<size_t>(v) * 3 + c) * m.shape_basis + b] =
              sd[v][c][b].get<double>();
  }

  const auto& reg = j.at("J_regressor");
  m.joint_regressor.resize(static_cast<size_t>(m.joints) * m.vertices);
  for (int q = 0; q < m.joints; ++q)
    for (int v = 0; v < m.vertices; ++v)
      m.joint_regressor[static_cast<size_t>(q) * m.vertices + v] = reg[q][v].get<double>();

  const auto& weights = j.at("weights");
  m.skin_j.assign(m.vertices, {-1, -1, -1, -1});
  m.skin_w.assign(m.vertices, {0.0, 0.0, 0.0, 0.0});
  for (int v = 0; v < m.vertices; ++v) {
    std::vector<std::pair<double, int>> wj;
    for (int q = 0; q < m.joints; ++q) {
      const double w = weights[v][q].get<double>();
      if (w > 0.0) wj.emplace_back(w, q);
    }
    std::sort(wj.begin(), wj.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    if (wj.size() > 4) wj.resize(4);
    double total = 0.0;
    for (const auto& [w, q] : wj) total += w;
    if (total <= 0.0) throw std::runtime_error(json_path + ": vertex with no skin weight");
    for (size_t k = 0; k < wj.size(); ++k) {
      m.skin_j[v][k] = wj[k].second;
      m.skin_w[v][k] = wj[k].first / total;
    }
  }

  const auto& faces = j.at("f");
  m.faces.resize(faces.size());
  for (size_t f = 0; f < m.faces.size(); ++f)
    for (int c = 0; c < 3; ++c) m.faces[f][c] = faces[f][c].get<int>();

  m.pelvis_joint = j.value("pelvis_joint", 0);
  m.head_joint = j.value("head_joint", 15);

  m.region_names.resize(m.joints);
  for (int q = 0; q < m.joints; ++q) m.region_names[q] = "joint_" + std::to_string(q);
  m.region.resize(m.vertices);
  for (int v = 0; v < m.vertices; ++v)
    m.region[v] = static_cast<uint8_t>(m.skin_j[v][0]);

  auto collect_sole = [&](const std::vector<int>& joint_ids, std::vector<int32_t>* out) {
    std::vector<int> owned;
    double zlo = 1e30, zhi = -1e30;
    for (int v = 0; v < m.vertices; ++v) {
      if (std::find(joint_ids.begin(), joint_ids.end(), m.skin_j[v][0]) == joint_ids.end())
        continue;
      owned.push_back(v);
      zlo = std::min(zlo, m.template_verts[v].z());
      zhi = std::max(zhi, m.template_verts[v].z());
    }
    const double cut = zlo + 0.3 * (zhi - zlo);
    for (int v : owned)
      if (m.template_verts[v].z() <= cut) out->push_back(v);
  };
  const std::vector<int> lfoot_j = j.value("left_foot_joints", std::vector<int>{7, 10});
  const std::vector<int> rfoot_j = j.value("right_foot_joints", std::vector<int>{8, 11});
  collect_sole(lfoot_j, &m.left_foot);
  collect_sole(rfoot_j, &m.right_foot);

  m.finalize();
  return m;
}

}  // namespace egofuse::body
