#include "egofuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>

#include "egofuse/autodiff.hpp"
#include "egofuse/parallel.hpp"
#include "egofuse/scalar_geom.hpp"

namespace egofuse::loss {

namespace {

constexpr int kT = 0, kR = 1, kP = 2, kJ = 3;      // smoothness
constexpr int kSld = 4, kPri = 5, kPen = 6;        // self consistency
constexpr int kCnt = 7, kCol = 8;                  // scene consistency
constexpr int kHd = 9, kCld = 10, kMsh = 11;       // sensor consistency

constexpr uint32_t kGroupOf[kTermCount] = {
    kSmoothnessTerms, kSmoothnessTerms, kSmoothnessTerms, kSmoothnessTerms,
    kSelfTerms,       kSelfTerms,       kSelfTerms,
    kSceneTerms,      kSceneTerms,
    kSensorTerms,     kSensorTerms,     kSensorTerms,
};

const char* const kTermNames[kTermCount] = {
    "trans_accel", "rot_delta", "pose_delta", "joint_accel",
    "foot_slide",  "pose_prior", "self_pen",
    "ground_contact", "scene_pen",
    "head_anchor", "cloud_fit", "mesh_fit",
};

double term_weight(const LossWeights& w, int t) {
  switch (t) {
    case kT: return w.trans_accel;
    case kR: return w.rot_delta;
    case kP: return w.pose_delta;
    case kJ: return w.joint_accel;
    case kSld: return w.foot_slide;
    case kPri: return w.pose_prior;
    case kPen: return w.self_pen;
    case kCnt: return w.ground_contact;
    case kCol: return w.scene_pen;
    case kHd: return w.head_anchor;
    case kCld: return w.cloud_fit;
    default: return w.mesh_fit;
  }
}

// Self-penetration candidates are prefiltered by the other region's box; a
// positive penetration term implies the vertex sits essentially on or inside
// that region, so this margin only needs to cover the surface sampling.
constexpr double kPenPad = 0.1;

template <class S>
V3<S> cv(const Vec3& p) {
  return v3<S>(S(p.x()), S(p.y()), S(p.z()));
}

template <class S>
M3<S> cm(const Mat3& R) {
  M3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[3 * i + j] = S(R(i, j));
  return r;
}

template <class S>
S leaf_or_const(double v, bool active) {
  if constexpr (std::is_same_v<S, ad::Var>) {
    return active ? ad::Var::leaf(v) : ad::Var(v);
  } else {
    (void)active;
    return v;
  }
}

// Norm with subgradient 0 at the cusp, for the two unsquared terms.
template <class S>
S safe_norm(const V3<S>& v) {
  const S s2 = sqnorm(v);
  if (ad::value_of(s2) == 0.0) return S(0.0);
  return ad::sqrt(s2);
}

// Squared angle difference with the nearest-representative shift; the shift
// is a constant of the evaluation, so the derivative is that of d^2.
template <class S>
S wrapped_sq(const S& d) {
  const double two_pi = 2.0 * kPi;
  const double shift = two_pi * std::round(ad::value_of(d) / two_pi);
  const S dw = d - shift;
  return dw * dw;
}

// --- per-frame evaluation state ----------------------------------------------

// Variables of one frame as tape leaves (or constants when masked off) plus
// lazily built geometry. Three reduction levels, picked by the mask at bind
// time: translation-only poses vertices as const + T; translation+rotation
// as R * const + base; the full mode runs kinematics and skinning on the
// tape. Only the vertices a binding references are ever skinned.
template <class S>
struct FrameEval {
  const body::BodyModel* m = nullptr;
  const body::ShapedBody* sb = nullptr;
  const FrameBindings* fb = nullptr;
  int mode = 1;

  V3<S> T, R;
  std::vector<V3<S>> theta;

  bool rm_done = false, fk_done = false, verts_done = false, hr_done = false;
  M3<S> rm;
  body::FkJoints<S> fk;
  std::vector<V3<S>> verts;
  M3<S> hr;

  void init(const WindowContext& ctx, const Bindings& bind, int f) {
    sb = ctx.body;
    m = sb->model;
    fb = &bind.frame[f];
    mode = bind.mask.pose ? 3 : (bind.mask.rot ? 2 : 1);
    const body::PoseFrame& pf = ctx.vars[f];
    T = v3<S>(leaf_or_const<S>(pf.T.x(), bind.mask.trans),
              leaf_or_const<S>(pf.T.y(), bind.mask.trans),
              leaf_or_const<S>(pf.T.z(), bind.mask.trans));
    R = v3<S>(leaf_or_const<S>(pf.R.x(), bind.mask.rot),
              leaf_or_const<S>(pf.R.y(), bind.mask.rot),
              leaf_or_const<S>(pf.R.z(), bind.mask.rot));
    const int rows = m->joints - 1;
    theta.resize(rows);
    for (int r = 0; r < rows; ++r)
      theta[r] = v3<S>(leaf_or_const<S>(pf.theta[r].x(), bind.mask.pose),
                       leaf_or_const<S>(pf.theta[r].y(), bind.mask.pose),
                       leaf_or_const<S>(pf.theta[r].z(), bind.mask.pose));
  }

  const M3<S>& root_mat() {
    if (!rm_done) {
      rm_done = true;
      rm = rodrigues(R);
    }
    return rm;
  }

  const body::FkJoints<S>& get_fk() {
    if (!fk_done) {
      fk_done = true;
      body::forward_kinematics(m->parents, sb->joints0, R,
                               std::span<const V3<S>>(theta), &fk);
    }
    return fk;
  }

  const V3<S>& vert(int slot) {
    if (!verts_done) {
      verts_done = true;
      const size_t n = fb->needed.size();
      verts.resize(n);
      if (mode == 1) {
        for (size_t s = 0; s < n; ++s) verts[s] = cv<S>(fb->vert_const[s]) + T;
      } else if (mode == 2) {
        const M3<S>& Rm = root_mat();
        const V3<S> base = cv<S>(sb->joints0[0]) + T;
        for (size_t s = 0; s < n; ++s)
          verts[s] = mat_apply(Rm, cv<S>(fb->vert_const[s])) + base;
      } else {
        const body::FkJoints<S>& kin = get_fk();
        for (size_t s = 0; s < n; ++s)
          verts[s] = body::skin_vertex(*m, sb->verts0, sb->joints0, kin,
                                       fb->needed[s]) +
                     T;
      }
    }
    return verts[slot];
  }

  V3<S> rel_joint(int j) {
    if (mode == 1) return cv<S>(Vec3(fb->joint_const[j] - fb->joint_const[0]));
    if (mode == 2) return mat_apply(root_mat(), cv<S>(fb->joint_const[j]));
    const body::FkJoints<S>& kin = get_fk();
    return kin.pos[j] - kin.pos[0];
  }

  V3<S> head_world() {
    const int h = m->head_joint;
    if (mode == 1) return cv<S>(fb->joint_const[h]) + T;
    if (mode == 2)
      return mat_apply(root_mat(), cv<S>(fb->joint_const[h])) +
             cv<S>(sb->joints0[0]) + T;
    return get_fk().pos[h] + T;
  }

  const M3<S>& head_rot() {
    if (!hr_done) {
      hr_done = true;
      if (mode == 1)
        hr = cm<S>(fb->head_rot_const);
      else if (mode == 2)
        hr = mat_mul(root_mat(), cm<S>(fb->head_rot_const));
      else
        hr = get_fk().rot[m->head_joint];
    }
    return hr;
  }
};

// Evaluates every term anchored at frame i: windowed differences reach up to
// two frames ahead, everything else is single-frame. Writes unweighted
// per-term contributions into vals[12]; with S = Var also writes the
// gradient block (3 frames x stride) for the piece.
template <class S>
void eval_piece(const WindowContext& ctx, const Bindings& bind,
                const std::array<bool, kTermCount>& on, int i, double* vals,
                double* gblock) {
  const int k = static_cast<int>(ctx.vars.size());
  const int J = ctx.body->model->joints;
  [[maybe_unused]] ad::Tape* tp = nullptr;
  if constexpr (std::is_same_v<S, ad::Var>) {
    tp = &ad::tape();
    tp->reset();
  }

  const int nf = std::min(3, k - i);
  FrameEval<S> fr[3];
  for (int lf = 0; lf < nf; ++lf) fr[lf].init(ctx, bind, i + lf);

  S piece = S(0.0);
  const LossWeights& w = bind.weights;
  auto add = [&](int t, const S& raw, double scale) {
    vals[t] += scale * ad::value_of(raw);
    piece += (term_weight(w, t) * scale) * raw;
  };

  if (on[kT] && i + 2 < k) {
    const V3<S> dd = (fr[2].T - fr[1].T) - (fr[1].T - fr[0].T);
    add(kT, sqnorm(dd), 1.0 / (k - 2));
  }
  if (on[kR] && i + 1 < k) {
    S raw = S(0.0);
    raw += wrapped_sq(fr[1].R.x - fr[0].R.x);
    raw += wrapped_sq(fr[1].R.y - fr[0].R.y);
    raw += wrapped_sq(fr[1].R.z - fr[0].R.z);
    add(kR, raw, 1.0 / (k - 1));
  }
  if (on[kP] && i + 1 < k) {
    S raw = S(0.0);
    for (int r = 0; r < J - 1; ++r) raw += sqnorm(fr[1].theta[r] - fr[0].theta[r]);
    add(kP, raw, 1.0 / (k - 1));
  }
  if (on[kJ] && i + 2 < k) {
    S raw = S(0.0);
    for (int j = 1; j < J; ++j) {
      const V3<S> a = fr[0].rel_joint(j);
      const V3<S> b = fr[1].rel_joint(j);
      const V3<S> c = fr[2].rel_joint(j);
      raw += sqnorm((c - b) - (b - a));
    }
    add(kJ, raw, 1.0 / (k - 2));
  }

  if (on[kSld] && i + 1 < k) {
    const SlidePair& sp = bind.slide[i];
    if (!sp.a.empty() && !sp.b.empty()) {
      V3<S> ea = v3<S>(S(0.0), S(0.0), S(0.0));
      for (const int32_t s : sp.a) ea = ea + fr[0].vert(s);
      V3<S> eb = v3<S>(S(0.0), S(0.0), S(0.0));
      for (const int32_t s : sp.b) eb = eb + fr[1].vert(s);
      ea = (1.0 / static_cast<double>(sp.a.size())) * ea;
      eb = (1.0 / static_cast<double>(sp.b.size())) * eb;
      add(kSld, safe_norm(eb - ea), 1.0 / (k - 1));
    }
  }
  if (on[kPri]) {
    const std::vector<Vec3>& pri = ctx.theta_prior[i];
    S raw = S(0.0);
    for (int r = 0; r < J - 1; ++r) raw += sqnorm(fr[0].theta[r] - cv<S>(pri[r]));
    add(kPri, raw, 1.0 / (static_cast<double>(ctx.iter) * k));
  }
  if (on[kPen]) {
    const std::vector<RegionPair>& ps = bind.frame[i].self_pairs;
    if (!ps.empty()) {
      S raw = S(0.0);
      for (const RegionPair& p : ps)
        raw += ad::relu(dot(fr[0].vert(p.b) - fr[0].vert(p.a), cv<S>(p.normal)));
      add(kPen, raw, 1.0 / k);
    }
  }

  if (on[kCnt]) {
    const std::vector<ContactAnchor>& cs = bind.frame[i].contact;
    if (!cs.empty()) {
      S raw = S(0.0);
      for (const ContactAnchor& c : cs)
        raw += sqnorm(fr[0].vert(c.slot) - cv<S>(c.point));
      add(kCnt, raw, 1.0 / (static_cast<double>(cs.size()) * k));
    }
  }
  if (on[kCol]) {
    const std::vector<SceneAnchor>& ps = bind.frame[i].scene_pairs;
    if (!ps.empty()) {
      S raw = S(0.0);
      for (const SceneAnchor& p : ps)
        raw += ad::relu(dot(cv<S>(p.point) - fr[0].vert(p.slot), cv<S>(p.normal)));
      add(kCol, raw, 1.0 / k);
    }
  }

  if (on[kHd]) {
    const V3<S> pred = cv<S>(ctx.lidar_pos[i]) +
                       mat_apply(fr[0].head_rot(), cv<S>(ctx.head_offset));
    add(kHd, safe_norm(pred - fr[0].head_world()), 1.0 / k);
  }
  if (on[kCld]) {
    const std::vector<FacePair>& cp = bind.frame[i].cloud_pairs;
    if (!cp.empty()) {
      S raw = S(0.0);
      for (const FacePair& p : cp) {
        const V3<S> q = p.bary.x() * fr[0].vert(p.corner[0]) +
                        p.bary.y() * fr[0].vert(p.corner[1]) +
                        p.bary.z() * fr[0].vert(p.corner[2]);
        raw += sqnorm(q - cv<S>(p.target));
      }
      add(kCld, raw, 1.0 / (static_cast<double>(cp.size()) * k));
    }
  }
  if (on[kMsh]) {
    const std::vector<FacePair>& mp = bind.frame[i].mesh_pairs;
    if (!mp.empty()) {
      S raw = S(0.0);
      for (const FacePair& p : mp) {
        const V3<S> q = p.bary.x() * fr[0].vert(p.corner[0]) +
                        p.bary.y() * fr[0].vert(p.corner[1]) +
                        p.bary.z() * fr[0].vert(p.corner[2]);
        raw += ad::min_with(sqnorm(cv<S>(p.target) - q), w.mesh_fit_cap);
      }
      add(kMsh, raw, 1.0 / (static_cast<double>(mp.size()) * k));
    }
  }

  if constexpr (std::is_same_v<S, ad::Var>) {
    tp->backward(piece.i);
    const int stride = 6 + 3 * (J - 1);
    auto put = [&](const ad::Var& v, double* dst) {
      if (v.i >= 0) *dst = tp->adjoint(v.i);
    };
    for (int lf = 0; lf < nf; ++lf) {
      double* g = gblock + static_cast<size_t>(lf) * stride;
      put(fr[lf].T.x, g + 0);
      put(fr[lf].T.y, g + 1);
      put(fr[lf].T.z, g + 2);
      put(fr[lf].R.x, g + 3);
      put(fr[lf].R.y, g + 4);
      put(fr[lf].R.z, g + 5);
      for (int r = 0; r < J - 1; ++r) {
        put(fr[lf].theta[r].x, g + 6 + 3 * r);
        put(fr[lf].theta[r].y, g + 7 + 3 * r);
        put(fr[lf].theta[r].z, g + 8 + 3 * r);
      }
    }
  }
}

}  // namespace

// --- plain data --------------------------------------------------------------

void LossWeights::validate() const {
  for (int t = 0; t < kTermCount; ++t) {
    const double v = term_weight(*this, t);
    if (!std::isfinite(v) || v < 0.0)
      throw std::runtime_error("losses: weights must be finite and non-negative");
  }
  if (!std::isfinite(mesh_fit_cap) || mesh_fit_cap <= 0.0)
    throw std::runtime_error("losses: the mesh fit cap must be positive");
}

double TermValues::smoothness(const LossWeights& w) const {
  return w.trans_accel * trans_accel + w.rot_delta * rot_delta +
         w.pose_delta * pose_delta + w.joint_accel * joint_accel;
}
double TermValues::self_consistency(const LossWeights& w) const {
  return w.foot_slide * foot_slide + w.pose_prior * pose_prior +
         w.self_pen * self_pen;
}
double TermValues::scene_consistency(const LossWeights& w) const {
  return w.ground_contact * ground_contact + w.scene_pen * scene_pen;
}
double TermValues::sensor_consistency(const LossWeights& w) const {
  return w.head_anchor * head_anchor + w.cloud_fit * cloud_fit +
         w.mesh_fit * mesh_fit;
}
double TermValues::total(const LossWeights& w) const {
  return smoothness(w) + self_consistency(w) + scene_consistency(w) +
         sensor_consistency(w);
}
std::array<double, 12> TermValues::as_array() const {
  return {trans_accel, rot_delta,      pose_delta, joint_accel,
          foot_slide,  pose_prior,     self_pen,   ground_contact,
          scene_pen,   head_anchor,    cloud_fit,  mesh_fit};
}

const char* term_name(int term) { return kTermNames[term]; }
uint32_t term_group(int term) { return kGroupOf[term]; }

void WindowGrad::reset(int frames_, int joints_) {
  frames = frames_;
  joints = joints_;
  data.assign(static_cast<size_t>(frames_) * stride(), 0.0);
}

void WindowContext::validate() const {
  if (!body || !body->model)
    throw std::runtime_error("losses: window needs a shaped body");
  const size_t k = vars.size();
  if (k < 2) throw std::runtime_error("losses: window needs at least two frames");
  const size_t rows = static_cast<size_t>(body->model->joints) - 1;
  for (const body::PoseFrame& f : vars)
    if (f.theta.size() != rows)
      throw std::runtime_error("losses: pose row count does not match the body");
  if (visible.size() != k)
    throw std::runtime_error("losses: visibility mask must cover the window");
  if (crops && crops->size() != k)
    throw std::runtime_error("losses: crops must cover the window");
  if (crop_trees && (!crops || crop_trees->size() != k))
    throw std::runtime_error("losses: crop trees must match the crops");
  if (!lidar_pos.empty() && lidar_pos.size() != k)
    throw std::runtime_error("losses: sensor positions must cover the window");
  if (!lidar_rot.empty() && lidar_rot.size() != k)
    throw std::runtime_error("losses: sensor orientations must cover the window");
  if (!theta_prior.empty()) {
    if (theta_prior.size() != k)
      throw std::runtime_error("losses: pose prior must cover the window");
    for (const std::vector<Vec3>& r : theta_prior)
      if (r.size() != rows)
        throw std::runtime_error("losses: prior row count does not match the body");
  }
  if (iter < 1) throw std::runtime_error("losses: iteration count starts at 1");
  for (size_t f = 0; f < k; ++f)
    if (visible[f] && (!crops || (*crops)[f].empty()))
      throw std::runtime_error("losses: visible frame without crop points");
}

// --- binding -----------------------------------------------------------------

Bindings bind_window(const WindowContext& ctx, const LossWeights& w,
                     const StageMask& mask, uint32_t groups) {
  ctx.validate();
  w.validate();
  const int k = static_cast<int>(ctx.frames());
  const body::BodyModel& m = *ctx.body->model;
  const int N = m.vertices;

  Bindings b;
  b.mask = mask;
  b.weights = w;
  b.groups = groups;
  for (int t = 0; t < kTermCount; ++t)
    b.active[t] = (groups & kGroupOf[t]) != 0 && term_weight(w, t) > 0.0;
  if (!ctx.lidar_wearer) b.active[kHd] = false;
  if (ctx.lidar_wearer) b.active[kCld] = b.active[kMsh] = false;

  const auto& act = b.active;
  bool any_visible = false;
  for (const uint8_t v : ctx.visible) any_visible |= v != 0;
  if (act[kPri] && ctx.theta_prior.empty())
    throw std::runtime_error("losses: pose prior needs the inertial pose");
  if (act[kCnt] && (!ctx.scene || !ctx.scene->has_ground()))
    throw std::runtime_error("losses: ground contact needs a scene with ground elements");
  if (act[kCol] && !ctx.scene)
    throw std::runtime_error("losses: scene penetration needs a scene");
  if (act[kHd] && ctx.lidar_pos.empty())
    throw std::runtime_error("losses: head anchor needs the sensor trajectory");
  if (act[kCld] && any_visible && (ctx.lidar_pos.empty() || ctx.lidar_rot.empty()))
    throw std::runtime_error("losses: cloud fit needs the sensor trajectory");

  const int mode = mask.pose ? 3 : (mask.rot ? 2 : 1);
  const bool need_pose = act[kSld] || act[kPen] || act[kCnt] || act[kCol] ||
                         act[kCld] || act[kMsh];
  const bool need_stable = act[kSld] || act[kCnt];
  const bool need_joint_const = mode < 3 && (act[kJ] || act[kHd]);

  std::vector<body::Posed> posed(k);
  if (need_pose)
    parallel_for(k, [&](int64_t f) { posed[f] = body::forward(*ctx.body, ctx.vars[f]); });

  b.stable.assign(k - 1, body::Foot::none);
  if (need_stable) {
    auto foot_pos = [&](int f, const std::vector<int32_t>& ids) {
      std::vector<Vec3> out;
      out.reserve(ids.size());
      for (const int32_t v : ids) out.push_back(posed[f].verts[v]);
      return out;
    };
    for (int i = 0; i + 1 < k; ++i)
      b.stable[i] = body::stable_foot_pair(
          foot_pos(i, m.left_foot), foot_pos(i + 1, m.left_foot),
          foot_pos(i, m.right_foot), foot_pos(i + 1, m.right_foot));
  }
  auto frame_foot = [&](int f) { return b.stable[f == 0 ? 0 : f - 1]; };
  auto foot_ids = [&](body::Foot ft) -> const std::vector<int32_t>* {
    if (ft == body::Foot::left) return &m.left_foot;
    if (ft == body::Foot::right) return &m.right_foot;
    return nullptr;
  };

  std::vector<std::vector<int32_t>> region_ids;
  if (act[kPen]) {
    region_ids.resize(m.region_names.size());
    for (int v = 0; v < N; ++v) region_ids[m.region[v]].push_back(v);
  }

  b.frame.resize(k);
  parallel_for(k, [&](int64_t fi) {
    const int f = static_cast<int>(fi);
    FrameBindings& fb = b.frame[f];
    const std::vector<Vec3>& pv = posed[f].verts;

    if (act[kCnt]) {
      if (const std::vector<int32_t>* fids = foot_ids(frame_foot(f))) {
        for (const int32_t v : *fids) {
          const geom::SurfaceHit hit = ctx.scene->closest_ground(pv[v]);
          fb.contact.push_back({v, hit.point});
        }
      }
    }

    if (act[kPen]) {
      const std::vector<Vec3> nrm = body::vertex_normals(m, pv);
      const int nr = static_cast<int>(region_ids.size());
      std::vector<geom::KdTree> trees(nr);
      std::vector<Vec3> lo(nr), hi(nr);
      for (int r = 0; r < nr; ++r) {
        if (region_ids[r].empty()) continue;
        geom::Cloud c;
        c.reserve(region_ids[r].size());
        lo[r] = hi[r] = pv[region_ids[r][0]];
        for (const int32_t v : region_ids[r]) {
          c.push(pv[v]);
          lo[r] = lo[r].cwiseMin(pv[v]);
          hi[r] = hi[r].cwiseMax(pv[v]);
        }
        trees[r] = geom::KdTree(c);
      }
      for (int ra = 0; ra < nr; ++ra) {
        for (int rb = 0; rb < nr; ++rb) {
          if (ra == rb || region_ids[ra].empty() || region_ids[rb].empty()) continue;
          const Vec3 blo = lo[rb].array() - kPenPad;
          const Vec3 bhi = hi[rb].array() + kPenPad;
          for (const int32_t a : region_ids[ra]) {
            const Vec3& p = pv[a];
            if (p.x() < blo.x() || p.x() > bhi.x() || p.y() < blo.y() ||
                p.y() > bhi.y() || p.z() < blo.z() || p.z() > bhi.z())
              continue;
            const simd::MinHit hit = trees[rb].nearest(p);
            const int32_t bv = region_ids[rb][hit.idx];
            if ((pv[bv] - p).dot(nrm[bv]) > 0.0)
              fb.self_pairs.push_back({a, bv, nrm[bv]});
          }
        }
      }
    }

    if (act[kCol]) {
      for (int32_t v = 0; v < N; ++v) {
        const geom::SurfaceHit hit = ctx.scene->closest(pv[v]);
        if ((hit.point - pv[v]).dot(hit.normal) > 0.0)
          fb.scene_pairs.push_back({v, hit.point, hit.normal});
      }
    }

    if (act[kCld] && ctx.visible[f]) {
      const geom::Cloud& crop = (*ctx.crops)[f];
      const Vec3 vp = ctx.lidar_pos[f];
      const std::vector<int32_t> vis = geom::hidden_point_removal(pv, vp);
      std::vector<uint8_t> vmask(N, 0);
      for (const int32_t v : vis) vmask[v] = 1;
      std::vector<int32_t> vis_faces;
      for (size_t t = 0; t < m.faces.size(); ++t) {
        const std::array<int32_t, 3>& fc = m.faces[t];
        if (vmask[fc[0]] && vmask[fc[1]] && vmask[fc[2]])
          vis_faces.push_back(static_cast<int32_t>(t));
      }
      if (!vis_faces.empty()) {
        const Mat3 Rt = ctx.lidar_rot[f].transpose();
        std::vector<Vec3> sv(N);
        for (int v = 0; v < N; ++v) sv[v] = Rt * (pv[v] - vp);
        const std::vector<sensor::GridSample> samples =
            sensor::sample_faces_on_grid_detailed(ctx.sensor, sv, m.faces, vis_faces);
        geom::KdTree local;
        const geom::KdTree* ct;
        if (ctx.crop_trees) {
          ct = &(*ctx.crop_trees)[f];
        } else {
          local = geom::KdTree(crop);
          ct = &local;
        }
        for (const sensor::GridSample& s : samples) {
          const std::array<int32_t, 3>& fc = m.faces[s.face];
          const Vec3 bc = geom::barycentric_on_triangle(s.point, sv[fc[0]],
                                                        sv[fc[1]], sv[fc[2]]);
          const Vec3 pw =
              bc.x() * pv[fc[0]] + bc.y() * pv[fc[1]] + bc.z() * pv[fc[2]];
          const simd::MinHit nn = ct->nearest(pw);
          fb.cloud_pairs.push_back({{fc[0], fc[1], fc[2]}, bc,
                                    crop.get(static_cast<size_t>(nn.idx))});
        }
      }
    }

    if (act[kMsh] && ctx.visible[f]) {
      const geom::Cloud& crop = (*ctx.crops)[f];
      const geom::MeshDistanceIndex body_idx(pv, m.faces);
      for (size_t c = 0; c < crop.size(); ++c) {
        const Vec3 p = crop.get(c);
        const geom::MeshDistanceIndex::Hit hit = body_idx.closest(p);
        const std::array<int32_t, 3>& fc = m.faces[hit.face];
        const Vec3 bc = geom::barycentric_on_triangle(hit.closest, pv[fc[0]],
                                                      pv[fc[1]], pv[fc[2]]);
        fb.mesh_pairs.push_back({{fc[0], fc[1], fc[2]}, bc, p});
      }
    }

    // Needed-vertex list and slot remap.
    std::vector<int32_t> ids;
    if (act[kSld]) {
      if (const std::vector<int32_t>* fids = foot_ids(frame_foot(f)))
        ids.insert(ids.end(), fids->begin(), fids->end());
    }
    for (const ContactAnchor& c : fb.contact) ids.push_back(c.slot);
    for (const RegionPair& p : fb.self_pairs) {
      ids.push_back(p.a);
      ids.push_back(p.b);
    }
    for (const SceneAnchor& p : fb.scene_pairs) ids.push_back(p.slot);
    for (const FacePair& p : fb.cloud_pairs)
      ids.insert(ids.end(), p.corner.begin(), p.corner.end());
    for (const FacePair& p : fb.mesh_pairs)
      ids.insert(ids.end(), p.corner.begin(), p.corner.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    fb.needed = std::move(ids);
    auto slot_of = [&](int32_t vid) {
      return static_cast<int32_t>(
          std::lower_bound(fb.needed.begin(), fb.needed.end(), vid) -
          fb.needed.begin());
    };
    for (ContactAnchor& c : fb.contact) c.slot = slot_of(c.slot);
    for (RegionPair& p : fb.self_pairs) {
      p.a = slot_of(p.a);
      p.b = slot_of(p.b);
    }
    for (SceneAnchor& p : fb.scene_pairs) p.slot = slot_of(p.slot);
    for (FacePair& p : fb.cloud_pairs)
      for (int c = 0; c < 3; ++c) p.corner[c] = slot_of(p.corner[c]);
    for (FacePair& p : fb.mesh_pairs)
      for (int c = 0; c < 3; ++c) p.corner[c] = slot_of(p.corner[c]);

    // Reduced-mode constants at the bind-time frozen blocks.
    if (mode == 1) {
      if (!fb.needed.empty()) {
        fb.vert_const.resize(fb.needed.size());
        for (size_t s = 0; s < fb.needed.size(); ++s)
          fb.vert_const[s] = pv[fb.needed[s]] - ctx.vars[f].T;
      }
      if (need_joint_const) {
        const body::FkJoints<double> kin = body::forward_joints(*ctx.body, ctx.vars[f]);
        fb.joint_const.resize(m.joints);
        for (int j = 0; j < m.joints; ++j) fb.joint_const[j] = to_eigen(kin.pos[j]);
        fb.head_rot_const = to_eigen(kin.rot[m.head_joint]);
      }
    } else if (mode == 2) {
      if (!fb.needed.empty() || need_joint_const) {
        body::PoseFrame rooted = ctx.vars[f];
        rooted.R = Vec3::Zero();
        const body::FkJoints<double> kin = body::forward_joints(*ctx.body, rooted);
        const Vec3 origin = ctx.body->joints0[0];
        if (!fb.needed.empty()) {
          fb.vert_const.resize(fb.needed.size());
          for (size_t s = 0; s < fb.needed.size(); ++s)
            fb.vert_const[s] =
                to_eigen(body::skin_vertex(m, ctx.body->verts0, ctx.body->joints0,
                                           kin, fb.needed[s])) -
                origin;
        }
        if (need_joint_const) {
          fb.joint_const.resize(m.joints);
          for (int j = 0; j < m.joints; ++j)
            fb.joint_const[j] = to_eigen(kin.pos[j]) - origin;
          fb.head_rot_const = to_eigen(kin.rot[m.head_joint]);
        }
      }
    }
  });

  b.slide.resize(k - 1);
  if (act[kSld]) {
    auto slot_in = [](const std::vector<int32_t>& needed, int32_t vid) {
      return static_cast<int32_t>(
          std::lower_bound(needed.begin(), needed.end(), vid) - needed.begin());
    };
    for (int i = 0; i + 1 < k; ++i) {
      const std::vector<int32_t>* fa = foot_ids(frame_foot(i));
      const std::vector<int32_t>* fbv = foot_ids(frame_foot(i + 1));
      if (!fa || !fbv) continue;
      for (const int32_t v : *fa) b.slide[i].a.push_back(slot_in(b.frame[i].needed, v));
      for (const int32_t v : *fbv)
        b.slide[i].b.push_back(slot_in(b.frame[i + 1].needed, v));
    }
  }
  return b;
}

// --- evaluation ----------------------------------------------------------------

double eval_window(const WindowContext& ctx, const Bindings& bind, uint32_t groups,
                   TermValues* terms, WindowGrad* grad) {
  ctx.validate();
  if ((groups & bind.groups) != groups)
    throw std::logic_error("losses: bindings were built without a requested family");
  const int k = static_cast<int>(ctx.frames());
  if (static_cast<int>(bind.frame.size()) != k)
    throw std::logic_error("losses: bindings do not match the window");
  const int J = ctx.body->model->joints;
  const int stride = 6 + 3 * (J - 1);

  std::array<bool, kTermCount> on;
  for (int t = 0; t < kTermCount; ++t)
    on[t] = bind.active[t] && (groups & kGroupOf[t]) != 0;

  std::vector<double> pvals(static_cast<size_t>(k) * kTermCount, 0.0);
  std::vector<double> pgrad;
  if (grad) {
    grad->reset(k, J);
    pgrad.assign(static_cast<size_t>(k) * 3 * stride, 0.0);
  }
  parallel_for(k, [&](int64_t i) {
    double* vals = &pvals[static_cast<size_t>(i) * kTermCount];
    if (grad)
      eval_piece<ad::Var>(ctx, bind, on, static_cast<int>(i), vals,
                          &pgrad[static_cast<size_t>(i) * 3 * stride]);
    else
      eval_piece<double>(ctx, bind, on, static_cast<int>(i), vals, nullptr);
  });

  double acc[kTermCount] = {};
  for (int i = 0; i < k; ++i)
    for (int t = 0; t < kTermCount; ++t)
      acc[t] += pvals[static_cast<size_t>(i) * kTermCount + t];
  for (int t = 0; t < kTermCount; ++t)
    if (!std::isfinite(acc[t]))
      throw std::runtime_error(std::string("losses: non-finite term ") +
                               kTermNames[t]);
  if (grad) {
    for (int i = 0; i < k; ++i) {
      const int nf = std::min(3, k - i);
      for (int lf = 0; lf < nf; ++lf) {
        double* dst = grad->frame(i + lf);
        const double* src = &pgrad[(static_cast<size_t>(i) * 3 + lf) * stride];
        for (int s = 0; s < stride; ++s) dst[s] += src[s];
      }
    }
  }

  TermValues tv;
  tv.trans_accel = acc[kT];
  tv.rot_delta = acc[kR];
  tv.pose_delta = acc[kP];
  tv.joint_accel = acc[kJ];
  tv.foot_slide = acc[kSld];
  tv.pose_prior = acc[kPri];
  tv.self_pen = acc[kPen];
  tv.ground_contact = acc[kCnt];
  tv.scene_pen = acc[kCol];
  tv.head_anchor = acc[kHd];
  tv.cloud_fit = acc[kCld];
  tv.mesh_fit = acc[kMsh];
  if (terms) *terms = tv;
  return tv.total(bind.weights);
}

namespace {
double family_loss(const WindowContext& ctx, const LossWeights& w, uint32_t groups,
                   TermValues* terms, WindowGrad* grad) {
  const StageMask all{true, true, true};
  const Bindings b = bind_window(ctx, w, all, groups);
  return eval_window(ctx, b, groups, terms, grad);
}
}  // namespace

double smoothness_loss(const WindowContext& ctx, const LossWeights& w,
                       TermValues* terms, WindowGrad* grad) {
  return family_loss(ctx, w, kSmoothnessTerms, terms, grad);
}
double self_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                             TermValues* terms, WindowGrad* grad) {
  return family_loss(ctx, w, kSelfTerms, terms, grad);
}
double scene_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                              TermValues* terms, WindowGrad* grad) {
  return family_loss(ctx, w, kSceneTerms, terms, grad);
}
double sensor_consistency_loss(const WindowContext& ctx, const LossWeights& w,
                               TermValues* terms, WindowGrad* grad) {
  return family_loss(ctx, w, kSensorTerms, terms, grad);
}
double total_loss(const WindowContext& ctx, const LossWeights& w, TermValues* terms,
                  WindowGrad* grad) {
  return family_loss(ctx, w, kAllTerms, terms, grad);
}

}  // namespace egofuse::loss
