#include <cmath>

#include "egofuse/body_model.hpp"

// Procedural capsule-limb body. Trunk, head, arms, hands, legs and feet are
// capsules whose solids stay strictly inside their joint span, so capsules of
// different regions never interpenetrate in the template and the
// self-penetration loss is exactly zero at rest. Foot capsules lie horizontal
// with one ring vertex on the bottom generatrix: the sole vertex sets touch
// z = -1 exactly, which the contact loss and foot metrics rely on.
//
// Joints are defined as affine combinations of ring vertices (two rings per
// joint, linear blend, extrapolation allowed), so the joint regressor
// reproduces the designed joint positions exactly.

namespace egofuse::body {

namespace {

struct RingRef {
  int first = -1;  // first vertex of the ring
  int count = 0;
  double axpos = 0.0;  // position along the capsule axis, in [0, |b-a|]
};

struct Anchor {
  int joint;
  double t;  // axial param in [0,1] over the capsule
};

struct Builder {
  BodyModel m;
  std::vector<Vec3> verts;
  std::vector<std::array<int32_t, 3>> faces;
  std::vector<uint8_t> region_of;
  std::vector<std::array<int32_t, 4>> skin_j;
  std::vector<std::array<double, 4>> skin_w;

  int add_vert(const Vec3& p, uint8_t region, const std::vector<Anchor>& anchors,
               double t) {
    verts.push_back(p);
    region_of.push_back(region);
    std::array<int32_t, 4> js{-1, -1, -1, -1};
    std::array<double, 4> ws{0, 0, 0, 0};
    if (anchors.size() == 1 || t <= anchors.front().t) {
      js[0] = anchors.front().joint;
      ws[0] = 1.0;
    } else if (t >= anchors.back().t) {
      js[0] = anchors.back().joint;
      ws[0] = 1.0;
    } else {
      for (size_t k = 0; k + 1 < anchors.size(); ++k) {
        if (t <= anchors[k + 1].t) {
          const double u = (t - anchors[k].t) / (anchors[k + 1].t - anchors[k].t);
          js[0] = anchors[k].joint;
          ws[0] = 1.0 - u;
          js[1] = anchors[k + 1].joint;
          ws[1] = u;
          if (ws[1] == 0.0) js[1] = -1;
          break;
        }
      }
    }
    skin_j.push_back(js);
    skin_w.push_back(ws);
    return static_cast<int>(verts.size()) - 1;
  }

  void tri(int a, int b, int c) { faces.push_back({a, b, c}); }

  void strip(const RingRef& r1, const RingRef& r2) {
    // r2 further along +axis; rings have equal count
    const int n = r1.count;
    for (int k = 0; k < n; ++k) {
      const int k1 = (k + 1) % n;
      tri(r1.first + k, r1.first + k1, r2.first + k1);
      tri(r1.first + k, r2.first + k1, r2.first + k);
    }
  }
};

struct CapsuleOut {
  std::vector<RingRef> cyl_rings;  // in axial order
  int first_vert = 0;
  int last_vert = 0;
};

CapsuleOut add_capsule(Builder& bld, const Vec3& a, const Vec3& b, double r, int nr,
                       int ncyl, uint8_t region, const std::vector<Anchor>& anchors,
                       const Vec3* u_hint = nullptr) {
  CapsuleOut out;
  out.first_vert = static_cast<int>(bld.verts.size());
  const Vec3 d = (b - a).normalized();
  const double L = (b - a).norm();
  Vec3 u;
  if (u_hint) {
    u = (*u_hint - u_hint->dot(d) * d).normalized();
  } else {
    Vec3 seed = std::abs(d.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    u = (seed - seed.dot(d) * d).normalized();
  }
  const Vec3 w = d.cross(u);  // (u, w, d) right-handed

  const Vec3 ca = a + r * d;  // sphere centers
  const Vec3 cb = b - r * d;

  auto axial_t = [&](double axpos) { return axpos / L; };

  auto emit_ring = [&](const Vec3& center, double ring_r, double axpos) {
    RingRef ring;
    ring.first = static_cast<int>(bld.verts.size());
    ring.count = nr;
    ring.axpos = axpos;
    for (int k = 0; k < nr; ++k) {
      const double al = 2.0 * kPi * k / nr;
      const Vec3 p = center + ring_r * (std::cos(al) * u + std::sin(al) * w);
      bld.add_vert(p, region, anchors, axial_t(axpos));
    }
    return ring;
  };

  // pole A
  const int poleA = bld.add_vert(a, region, anchors, 0.0);
  // cap ring A at 45 degrees
  const double s45 = std::sqrt(0.5);
  const RingRef capA = emit_ring(ca - (r * s45) * d, r * s45, r - r * s45);
  // cylinder rings
  std::vector<RingRef> cyl(ncyl);
  for (int i = 0; i < ncyl; ++i) {
    const double s = ncyl == 1 ? 0.5 : static_cast<double>(i) / (ncyl - 1);
    const Vec3 c = ca + s * (cb - ca);
    cyl[i] = emit_ring(c, r, r + s * (L - 2.0 * r));
  }
  // cap ring B, pole B
  const RingRef capB = emit_ring(cb + (r * s45) * d, r * s45, L - r + r * s45);
  const int poleB = bld.add_vert(b, region, anchors, 1.0);

  for (int k = 0; k < nr; ++k) {
    const int k1 = (k + 1) % nr;
    bld.tri(poleA, capA.first + k1, capA.first + k);
    bld.tri(poleB, capB.first + k, capB.first + k1);
  }
  bld.strip(capA, cyl.front());
  for (int i = 0; i + 1 < ncyl; ++i) bld.strip(cyl[i], cyl[i + 1]);
  bld.strip(cyl.back(), capB);

  out.cyl_rings = std::move(cyl);
  out.last_vert = static_cast<int>(bld.verts.size()) - 1;
  return out;
}

// Regressor row = blend of two rings such that the weighted vertex mean lands
// exactly on the requested axial position (ring means lie on the axis).
void set_regressor_row(std::vector<double>& reg, int n_verts, int joint,
                       const RingRef& r1, const RingRef& r2, double target_axpos) {
  const double w = (target_axpos - r2.axpos) / (r1.axpos - r2.axpos);
  double* row = &reg[static_cast<size_t>(joint) * n_verts];
  for (int k = 0; k < r1.count; ++k) row[r1.first + k] += w / r1.count;
  for (int k = 0; k < r2.count; ++k) row[r2.first + k] += (1.0 - w) / r2.count;
}

}  // namespace

BodyModel make_test_body(double density) {
  auto scaled = [&](int n, int lo) { return std::max(lo, (int)std::lround(n * density)); };

  Builder bld;
  BodyModel& m = bld.m;
  m.region_names = {"torso",      "head",       "left_arm", "right_arm",
                    "left_hand",  "right_hand", "left_leg", "right_leg"};
  enum { TORSO, HEAD, LARM, RARM, LHAND, RHAND, LLEG, RLEG };

  m.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  m.joints = 24;
  m.pelvis_joint = 0;
  m.head_joint = 15;

  // joint ids
  enum {
    PELVIS = 0, L_HIP, R_HIP, SPINE1, L_KNEE, R_KNEE, SPINE2, L_ANKLE, R_ANKLE,
    SPINE3, L_TOE, R_TOE, NECK, L_COLLAR, R_COLLAR, HEAD_J, L_SHOULDER, R_SHOULDER,
    L_ELBOW, R_ELBOW, L_WRIST, R_WRIST, L_HAND, R_HAND
  };

  struct JointSpec {
    int joint;
    double axpos;  // along the owning capsule's axis, meters from endpoint a
  };

  struct CapSpec {
    Vec3 a, b;
    double r;
    int nr, ncyl;
    uint8_t region;
    std::vector<Anchor> anchors;
    std::vector<JointSpec> joints;
    Vec3 u;
    bool has_u = false;
  };

  const double mirror[2] = {-1.0, 1.0};

  std::vector<CapSpec> caps;

  {  // trunk
    CapSpec c;
    c.a = {0, 0, -0.14};
    c.b = {0, 0, 0.50};
    c.r = 0.115;
    c.nr = scaled(12, 5);
    c.ncyl = scaled(7, 3);
    c.region = TORSO;
    const double L = 0.64;
    auto t_of_z = [&](double z) { return (z + 0.14) / L; };
    c.anchors = {{PELVIS, t_of_z(0.0)},
                 {SPINE1, t_of_z(0.11)},
                 {SPINE2, t_of_z(0.24)},
                 {SPINE3, t_of_z(0.36)},
                 {NECK, 1.0}};
    c.joints = {{PELVIS, 0.14},   {SPINE1, 0.25},   {SPINE2, 0.38},
                {SPINE3, 0.50},   {NECK, 0.64},     {L_COLLAR, 0.58},
                {R_COLLAR, 0.58}};
    caps.push_back(c);
  }
  {  // head (neck base at the capsule's lower apex)
    CapSpec c;
    c.a = {0, 0, 0.52};
    c.b = {0, 0, 0.80};
    c.r = 0.08;
    c.nr = scaled(10, 5);
    c.ncyl = scaled(4, 2);
    c.region = HEAD;
    c.anchors = {{NECK, 0.0}, {HEAD_J, (0.62 - 0.52) / 0.28}};
    c.joints = {{HEAD_J, 0.10}};
    caps.push_back(c);
  }
  for (int s = 0; s < 2; ++s) {  // legs
    const double mx = mirror[s];
    CapSpec c;
    c.a = {mx * 0.095, 0, -0.26};
    c.b = {mx * 0.100, 0, -0.91};
    c.r = 0.055;
    c.nr = scaled(8, 5);
    c.ncyl = scaled(7, 3);
    c.region = s == 0 ? LLEG : RLEG;
    const int hip = s == 0 ? L_HIP : R_HIP;
    const int knee = s == 0 ? L_KNEE : R_KNEE;
    const int ankle = s == 0 ? L_ANKLE : R_ANKLE;
    const double L = (c.b - c.a).norm();
    c.anchors = {{hip, 0.0}, {knee, (0.50 - 0.26) / 0.65}, {ankle, 1.0}};
    c.joints = {{hip, -0.3077 * L}, {knee, 0.369 * L}, {ankle, L}};
    caps.push_back(c);
  }
  for (int s = 0; s < 2; ++s) {  // feet, axis horizontal, bottom generatrix at z=-1
    const double mx = mirror[s];
    CapSpec c;
    c.a = {mx * 0.10, -0.05, -0.955};
    c.b = {mx * 0.10, 0.14, -0.955};
    c.r = 0.045;
    c.nr = scaled(8, 5);
    c.ncyl = scaled(4, 3);
    c.region = s == 0 ? LLEG : RLEG;
    const int ankle = s == 0 ? L_ANKLE : R_ANKLE;
    const int toe = s == 0 ? L_TOE : R_TOE;
    c.anchors = {{ankle, 0.5}};
    const double L = 0.19;
    c.joints = {{toe, L}};
    c.u = {0, 0, -1};
    c.has_u = true;
    caps.push_back(c);
  }
  for (int s = 0; s < 2; ++s) {  // arms
    const double mx = mirror[s];
    CapSpec c;
    c.a = {mx * 0.19, 0, 0.46};
    c.b = {mx * 0.69, 0, 0.46};
    c.r = 0.040;
    c.nr = scaled(8, 5);
    c.ncyl = scaled(6, 3);
    c.region = s == 0 ? LARM : RARM;
    const int sh = s == 0 ? L_SHOULDER : R_SHOULDER;
    const int el = s == 0 ? L_ELBOW : R_ELBOW;
    const int wr = s == 0 ? L_WRIST : R_WRIST;
    c.anchors = {{sh, 0.0}, {el, 0.5}, {wr, 1.0}};
    c.joints = {{sh, 0.0}, {el, 0.25}, {wr, 0.50}};
    caps.push_back(c);
  }
  for (int s = 0; s < 2; ++s) {  // hands
    const double mx = mirror[s];
    CapSpec c;
    c.a = {mx * 0.695, 0, 0.46};
    c.b = {mx * 0.80, 0, 0.46};
    c.r = 0.034;
    c.nr = scaled(6, 4);
    c.ncyl = scaled(3, 2);
    c.region = s == 0 ? LHAND : RHAND;
    const int wr = s == 0 ? L_WRIST : R_WRIST;
    const int hd = s == 0 ? L_HAND : R_HAND;
    c.anchors = {{wr, 0.5}};
    c.joints = {{hd, 0.0525}};
    caps.push_back(c);
  }

  struct PendingJoint {
    int joint;
    RingRef r1, r2;
    double axpos;
  };
  std::vector<PendingJoint> pending;

  for (auto& c : caps) {
    const CapsuleOut out =
        add_capsule(bld, c.a, c.b, c.r, c.nr, c.ncyl, c.region,
                    c.anchors, c.has_u ? &c.u : nullptr);
    for (const auto& js : c.joints) {
      // bracketing (or nearest) ring pair for the target axial position
      const auto& rings = out.cyl_rings;
      size_t lo = 0;
      while (lo + 2 < rings.size() && rings[lo + 1].axpos < js.axpos) ++lo;
      pending.push_back({js.joint, rings[lo], rings[lo + 1], js.axpos});
    }
    if (c.has_u) {
      // bottom generatrix: ring vertex k=0 points along u = -z
      auto& set = c.a.x() < 0 ? m.left_foot : m.right_foot;
      for (const auto& ring : out.cyl_rings) set.push_back(ring.first);
    }
  }

  m.vertices = static_cast<int>(bld.verts.size());
  m.template_verts = std::move(bld.verts);
  m.faces = std::move(bld.faces);
  m.region = std::move(bld.region_of);
  m.skin_j = std::move(bld.skin_j);
  m.skin_w = std::move(bld.skin_w);
  m.shape_basis = 0;

  m.joint_regressor.assign(static_cast<size_t>(m.joints) * m.vertices, 0.0);
  for (const auto& p : pending)
    set_regressor_row(m.joint_regressor, m.vertices, p.joint, p.r1, p.r2, p.axpos);

  m.finalize();
  return m;
}

}  // namespace egofuse::body
