#pragma once

#include <array>
#include <optional>
#include <vector>

#include "regrasp/contact.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

struct EnergyWeights {
  double pen = 100.0;
  double align = 1.0;
  double spen = 10.0;
  double joints = 0.1;
};

struct RefineConfig {
  EnergyWeights weights;
  double delta_spen = 0.002;    // [m] self-penetration threshold
  double pen_clearance = 0.0;   // [m] clearance shell for the hinge
  std::array<Finger, kNumFingers> finger_order = kFingerOrder;
  int max_iters_per_finger = 100;
  double step_tol = 1e-6;       // outer-round relative improvement cutoff
  int outer_rounds = 3;
  bool reproject_anchors = false;
  double reproject_radius = 0.005;  // [m] radius when re-projecting anchors
  bool literal_align = false;   // keep the printed sign of the normal dot

  void validate() const {
    if (weights.pen < 0 || weights.align < 0 || weights.spen < 0 ||
        weights.joints < 0)
      throw std::invalid_argument("refine: weights must be >= 0");
    if (delta_spen <= 0 || step_tol <= 0)
      throw std::invalid_argument("refine: thresholds must be > 0");
    if (max_iters_per_finger < 1 || outer_rounds < 1)
      throw std::invalid_argument("refine: iteration counts must be >= 1");
    std::array<int, kNumFingers> seen{};
    for (Finger f : finger_order) {
      const int i = static_cast<int>(f);
      if (i < 0 || i >= kNumFingers || seen[i]++)
        throw std::invalid_argument(
            "refine: finger_order must be a permutation of the five fingers");
    }
  }
};

// One detected correspondence: a hand surface sample anchored to an object
// point with the object's outward normal there.
struct ContactTarget {
  int hand_point = -1;
  Vec3 anchor = Vec3::Zero();
  Vec3 object_normal = Vec3::UnitZ();
};

struct FingerTargets {
  std::array<std::vector<ContactTarget>, kNumFingers> fingers;

  bool any() const {
    for (const auto& v : fingers)
      if (!v.empty()) return true;
    return false;
  }
};

// Anchors are frozen at detection: the contact map's vertex indices resolve
// to mesh vertex positions and angle-weighted vertex normals.
inline FingerTargets targets_from_map(const ContactMap& map,
                                      const TriangleMeshObject& mesh) {
  FingerTargets out;
  for (int f = 0; f < kNumFingers; ++f) {
    out.fingers[f].reserve(map.fingers[f].size());
    for (const auto& pair : map.fingers[f]) {
      ContactTarget t;
      t.hand_point = pair.hand_point;
      t.anchor = mesh.vertices()[pair.vertex];
      t.object_normal = mesh.vertex_normals()[pair.vertex];
      out.fingers[f].push_back(t);
    }
  }
  return out;
}

// --- energy terms ---------------------------------------------------------

inline double e_dis(const KinematicChain& chain, const JointVector& q,
                    const std::vector<ContactTarget>& targets) {
  if (targets.empty()) return 0.0;
  const auto world = chain.forward_kinematics(q);
  double acc = 0.0;
  for (const auto& t : targets)
    acc += (chain.sample_world_point(world, t.hand_point) - t.anchor)
               .squaredNorm();
  return acc;
}

inline double e_pen(const KinematicChain& chain, const JointVector& q,
                    const TriangleMeshObject& mesh, const RefineConfig& cfg) {
  const auto world = chain.forward_kinematics(q);
  double acc = 0.0;
  for (int gi = 0; gi < chain.surface_sample_count(); ++gi) {
    const double sd = mesh.signed_distance(chain.sample_world_point(world, gi));
    const double hinge = std::max(0.0, cfg.pen_clearance - sd);
    acc += hinge * hinge;
  }
  return acc;
}

inline double e_align(const KinematicChain& chain, const JointVector& q,
                      const std::vector<ContactTarget>& targets,
                      bool literal = false) {
  if (targets.empty()) return 0.0;
  const auto world = chain.forward_kinematics(q);
  double acc = 0.0;
  for (const auto& t : targets) {
    const Vec3 n = chain.sample_world_normal(world, t.hand_point);
    const double dot =
        literal ? n.dot(t.object_normal) : n.dot(-t.object_normal);
    acc += (1.0 - dot) * (1.0 - dot);
  }
  return acc;
}

inline double e_spen(const KinematicChain& chain, const JointVector& q,
                     Finger active, const RefineConfig& cfg) {
  const auto world = chain.forward_kinematics(q);
  const auto own = chain.surface_points(world, active);
  double acc = 0.0;
  for (int gi = 0; gi < chain.surface_sample_count(); ++gi) {
    if (chain.sample_finger(gi) == active) continue;
    const Vec3 other = chain.sample_world_point(world, gi);
    for (const auto& p : own)
      acc += std::max(cfg.delta_spen - (p.point - other).norm(), 0.0);
  }
  return acc;
}

// Articulated-DoF deviation from the initial pose; the dummy root is frozen
// during refinement and excluded here.
inline double e_joints(const JointVector& q, const JointVector& q_init,
                       int root_dof = kRootDof) {
  if (q.size() != q_init.size())
    throw std::invalid_argument("e_joints: dimension mismatch");
  double acc = 0.0;
  for (int i = root_dof; i < q.size(); ++i)
    acc += (q[i] - q_init[i]) * (q[i] - q_init[i]);
  return acc;
}

struct EnergyBreakdown {
  double dis = 0.0;
  double pen = 0.0;
  double align = 0.0;
  double spen = 0.0;
  double joints = 0.0;

  double total(const EnergyWeights& w) const {
    return dis + w.pen * pen + w.align * align + w.spen * spen +
           w.joints * joints;
  }
};

// Per-finger weighted-total breakdown: distance/alignment over the finger's
// targets, penetration over the whole hand, self-penetration of the finger
// against the rest, joint regularization over all articulated DoF.
inline EnergyBreakdown finger_energy(const KinematicChain& chain,
                                     const JointVector& q, Finger finger,
                                     const std::vector<ContactTarget>& targets,
                                     const TriangleMeshObject& mesh,
                                     const JointVector& q_init,
                                     const RefineConfig& cfg) {
  EnergyBreakdown e;
  e.dis = e_dis(chain, q, targets);
  e.pen = e_pen(chain, q, mesh, cfg);
  e.align = e_align(chain, q, targets, cfg.literal_align);
  e.spen = e_spen(chain, q, finger, cfg);
  e.joints = e_joints(q, q_init, chain.root_dof());
  return e;
}

enum class EnergyTerm { Dis, Pen, Align, Spen, Joints };

namespace detail {

// Restricted evaluation context for one finger: world positions of every
// other link are constant while the finger's DoF move, so they are cached
// once and only the finger's samples are recomputed per evaluation.
class FingerObjective {
 public:
  FingerObjective(const KinematicChain& chain, const JointVector& q0,
                  Finger finger, const std::vector<ContactTarget>& targets,
                  const TriangleMeshObject& mesh, const JointVector& q_init,
                  const RefineConfig& cfg)
      : chain_(chain),
        finger_(finger),
        targets_(targets),
        mesh_(mesh),
        q_init_(q_init),
        cfg_(cfg),
        base_q_(q0) {
    for (int gi = 0; gi < chain.surface_sample_count(); ++gi)
      if (chain.sample_finger(gi) == finger)
        own_samples_.push_back(gi);
      else
        other_samples_.push_back(gi);

    const auto world = chain.forward_kinematics(q0);
    other_points_.reserve(other_samples_.size());
    for (int gi : other_samples_)
      other_points_.push_back(chain.sample_world_point(world, gi));

    // parts of the weighted total that the finger's DoF cannot change
    constant_ = 0.0;
    for (int gi : other_samples_) {
      const double sd =
          mesh.signed_distance(chain.sample_world_point(world, gi));
      const double hinge = std::max(0.0, cfg.pen_clearance - sd);
      constant_ += cfg.weights.pen * hinge * hinge;
    }
    const auto& dofs = chain.finger_dof_indices(finger);
    for (int i = chain.root_dof(); i < chain.dof(); ++i) {
      if (std::find(dofs.begin(), dofs.end(), i) != dofs.end()) continue;
      constant_ +=
          cfg.weights.joints * (q0[i] - q_init[i]) * (q0[i] - q_init[i]);
    }
  }

  // Weighted total of the pose obtained by writing `x` into the finger DoF.
  double operator()(const Eigen::VectorXd& x,
                    EnergyBreakdown* out = nullptr) const {
    const JointVector q = compose(x);
    const auto world = chain_.forward_kinematics(q);

    EnergyBreakdown e;
    for (const auto& t : targets_) {
      const Vec3 p = chain_.sample_world_point(world, t.hand_point);
      e.dis += (p - t.anchor).squaredNorm();
      const Vec3 n = chain_.sample_world_normal(world, t.hand_point);
      const double dot = cfg_.literal_align ? n.dot(t.object_normal)
                                            : n.dot(-t.object_normal);
      e.align += (1.0 - dot) * (1.0 - dot);
    }
    for (int gi : own_samples_) {
      const Vec3 p = chain_.sample_world_point(world, gi);
      const double sd = mesh_.signed_distance(p);
      const double hinge = std::max(0.0, cfg_.pen_clearance - sd);
      e.pen += hinge * hinge;
      for (const Vec3& other : other_points_)
        e.spen += std::max(cfg_.delta_spen - (p - other).norm(), 0.0);
    }
    const auto& dofs = chain_.finger_dof_indices(finger_);
    for (std::size_t k = 0; k < dofs.size(); ++k)
      e.joints += (x[k] - q_init_[dofs[k]]) * (x[k] - q_init_[dofs[k]]);

    const double value = e.total(cfg_.weights) + constant_;
    if (!std::isfinite(value))
      throw std::runtime_error(describe_non_finite(e));
    if (out) *out = full_breakdown(e, q);
    return value;
  }

  // Per-term value through the restricted path (adds back the constant
  // penetration/joint parts so the term equals its public definition).
  double term_value(const Eigen::VectorXd& x, EnergyTerm term) const {
    EnergyBreakdown e;
    (*this)(x, &e);
    switch (term) {
      case EnergyTerm::Dis: return e.dis;
      case EnergyTerm::Pen: return e.pen;
      case EnergyTerm::Align: return e.align;
      case EnergyTerm::Spen: return e.spen;
      case EnergyTerm::Joints: return e.joints;
    }
    return 0.0;
  }

  JointVector compose(const Eigen::VectorXd& x) const {
    JointVector q = base_q_;
    const auto& dofs = chain_.finger_dof_indices(finger_);
    for (std::size_t k = 0; k < dofs.size(); ++k) q[dofs[k]] = x[k];
    return q;
  }

  Eigen::VectorXd extract(const JointVector& q) const {
    const auto& dofs = chain_.finger_dof_indices(finger_);
    Eigen::VectorXd x(dofs.size());
    for (std::size_t k = 0; k < dofs.size(); ++k) x[k] = q[dofs[k]];
    return x;
  }

  int dim() const {
    return static_cast<int>(chain_.finger_dof_indices(finger_).size());
  }

 private:
  EnergyBreakdown full_breakdown(EnergyBreakdown e, const JointVector& q) const {
    // add the cached constant contributions back into their terms
    for (std::size_t i = 0; i < other_samples_.size(); ++i) {
      const double sd = mesh_.signed_distance(other_points_[i]);
      const double hinge = std::max(0.0, cfg_.pen_clearance - sd);
      e.pen += hinge * hinge;
    }
    e.joints = e_joints(q, q_init_, chain_.root_dof());
    return e;
  }

  std::string describe_non_finite(const EnergyBreakdown& e) const {
    std::string which = "total";
    if (!std::isfinite(e.dis)) which = "e_dis";
    else if (!std::isfinite(e.pen)) which = "e_pen";
    else if (!std::isfinite(e.align)) which = "e_align";
    else if (!std::isfinite(e.spen)) which = "e_spen";
    else if (!std::isfinite(e.joints)) which = "e_joints";
    return "refine: non-finite energy in " + which + " while optimizing " +
           to_string(finger_);
  }

  const KinematicChain& chain_;
  Finger finger_;
  const std::vector<ContactTarget>& targets_;
  const TriangleMeshObject& mesh_;
  const JointVector& q_init_;
  const RefineConfig& cfg_;
  JointVector base_q_;
  std::vector<int> own_samples_;
  std::vector<int> other_samples_;
  std::vector<Vec3> other_points_;
  double constant_ = 0.0;
};

}  // namespace detail

// The optimizer's gradient of one energy term with respect to the finger's
// DoF: central finite differences (h = 1e-5) through the restricted
// evaluation path used inside optimize_finger.
inline Eigen::VectorXd finger_term_gradient(
    const KinematicChain& chain, const JointVector& q, Finger finger,
    EnergyTerm term, const std::vector<ContactTarget>& targets,
    const TriangleMeshObject& mesh, const JointVector& q_init,
    const RefineConfig& cfg, double h = 1e-5) {
  const detail::FingerObjective obj(chain, q, finger, targets, mesh, q_init,
                                    cfg);
  const Eigen::VectorXd x = obj.extract(q);
  Eigen::VectorXd g(obj.dim());
  for (int k = 0; k < obj.dim(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (obj.term_value(xp, term) - obj.term_value(xm, term)) / (2.0 * h);
  }
  return g;
}

// Projected gradient descent on one finger's DoF: central-difference
// gradients, Armijo backtracking (c = 1e-4, shrink 0.5), projection onto the
// joint limits. Accepted iterates are strictly monotone in the weighted total;
// `trace`, when given, records the energy after every accepted step.
inline JointVector optimize_finger(const KinematicChain& chain,
                                   const JointVector& q, Finger finger,
                                   const std::vector<ContactTarget>& targets,
                                   const TriangleMeshObject& mesh,
                                   const RefineConfig& cfg,
                                   const JointVector& q_init,
                                   std::vector<double>* trace = nullptr) {
  cfg.validate();
  if (targets.empty()) return q;
  const auto& dofs = chain.finger_dof_indices(finger);
  if (dofs.empty()) return q;

  const detail::FingerObjective obj(chain, q, finger, targets, mesh, q_init,
                                    cfg);
  const int n = obj.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (int k = 0; k < n; ++k) {
    lo[k] = chain.joints()[dofs[k]].lower;
    hi[k] = chain.joints()[dofs[k]].upper;
  }

  Eigen::VectorXd x = obj.extract(q);
  for (int k = 0; k < n; ++k) x[k] = std::clamp(x[k], lo[k], hi[k]);
  double f = obj(x);
  if (trace) trace->push_back(f);

  const double h = 1e-5;
  const double armijo_c = 1e-4;
  for (int iter = 0; iter < cfg.max_iters_per_finger; ++iter) {
    Eigen::VectorXd g(n);
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      g[k] = (obj(xp) - obj(xm)) / (2.0 * h);
    }
    const double gnorm = g.norm();
    if (gnorm < 1e-14) break;

    // initial step: bounded coordinate motion
    double step = 0.1 / std::max(g.cwiseAbs().maxCoeff(), 1e-12);
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      Eigen::VectorXd xn = x - step * g;
      for (int k = 0; k < n; ++k) xn[k] = std::clamp(xn[k], lo[k], hi[k]);
      const double decrease = g.dot(x - xn);  // projected-step decrease model
      const double fn = obj(xn);
      if (fn < f - armijo_c * decrease && fn < f) {
        const double improvement = f - fn;
        x = xn;
        f = fn;
        accepted = true;
        if (trace) trace->push_back(f);
        if (improvement < 1e-12 * std::max(f, 1e-30)) iter = cfg.max_iters_per_finger;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return obj.compose(x);
}

struct FingerEnergyRecord {
  Finger finger = Finger::Palm;
  EnergyBreakdown before;
  EnergyBreakdown after;
  std::vector<double> trace;  // accepted-iterate energies
};

struct FrameRefineRecord {
  int frame = -1;
  bool touched = false;
  std::vector<FingerEnergyRecord> fingers;
};

// Contact stage output for a sequence: per-frame states and correspondences.
struct ContactTimeline {
  std::vector<ContactState> states;
  std::vector<ContactMap> maps;
};

// One frame of sequential per-finger refinement. Fingers without targets are
// skipped; the dummy root never moves.
inline JointVector refine_frame(const KinematicChain& chain,
                                const JointVector& q_in,
                                const ContactState& state,
                                const ContactMap& map,
                                const TriangleMeshObject& mesh,
                                const RefineConfig& cfg,
                                FrameRefineRecord* record = nullptr) {
  cfg.validate();
  FingerTargets targets = targets_from_map(map, mesh);
  bool any = false;
  for (int f = 0; f < kNumFingers; ++f) {
    if (!state[f]) targets.fingers[f].clear();
    any = any || !targets.fingers[f].empty();
  }
  if (!any) return q_in;

  const JointVector q_init = q_in;
  JointVector q = q_in;
  if (record) record->touched = true;

  double prev_total = -1.0;
  for (int round = 0; round < cfg.outer_rounds; ++round) {
    double round_total = 0.0;
    for (Finger finger : cfg.finger_order) {
      const int fi = static_cast<int>(finger);
      if (cfg.reproject_anchors && state[fi]) {
        ContactState only{};
        only[fi] = true;
        ContactConfig ccfg;
        ccfg.delta_contact_map = cfg.reproject_radius;
        const ContactMap remap = build_contact_map(chain, q, mesh, only, ccfg);
        targets.fingers[fi] = targets_from_map(remap, mesh).fingers[fi];
      }
      const auto& tgt = targets.fingers[fi];
      if (tgt.empty()) continue;

      FingerEnergyRecord* rec = nullptr;
      if (record) {
        record->fingers.emplace_back();
        rec = &record->fingers.back();
        rec->finger = finger;
        rec->before = finger_energy(chain, q, finger, tgt, mesh, q_init, cfg);
      }
      q = optimize_finger(chain, q, finger, tgt, mesh, cfg, q_init,
                          rec ? &rec->trace : nullptr);
      const EnergyBreakdown after =
          finger_energy(chain, q, finger, tgt, mesh, q_init, cfg);
      if (rec) rec->after = after;
      round_total += after.total(cfg.weights);
    }
    if (prev_total >= 0.0 &&
        prev_total - round_total <= cfg.step_tol * std::max(prev_total, 1e-30))
      break;
    prev_total = round_total;
  }
  return q;
}

using RefineReport = std::vector<FrameRefineRecord>;

// Stage 3 driver. Frames are independent; non-contact frames pass through
// bitwise unchanged.
inline std::vector<JointVector> sequential_refine(
    const KinematicChain& chain, const std::vector<JointVector>& q_seq,
    const ContactTimeline& timeline, const TriangleMeshObject& mesh,
    const RefineConfig& cfg, RefineReport* report = nullptr) {
  if (timeline.states.size() != q_seq.size() ||
      timeline.maps.size() != q_seq.size())
    throw std::invalid_argument(
        "sequential_refine: contact timeline does not match the sequence");
  std::vector<JointVector> out(q_seq.size());
  if (report) report->assign(q_seq.size(), FrameRefineRecord{});
  for (std::size_t t = 0; t < q_seq.size(); ++t) {
    FrameRefineRecord* rec = report ? &(*report)[t] : nullptr;
    if (rec) rec->frame = static_cast<int>(t);
    out[t] = refine_frame(chain, q_seq[t], timeline.states[t],
                          timeline.maps[t], mesh, cfg, rec);
  }
  return out;
}

}  // namespace regrasp
