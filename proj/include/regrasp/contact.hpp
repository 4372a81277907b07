#pragma once

#include <array>
#include <optional>
#include <vector>

#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

struct ContactConfig {
  double dis_min = 0.002;  // [m] contact turns on below this
  double dis_max = 0.005;  // [m] contact turns off above this
  double alpha_v = 0.6;    // velocity influence in the interpolation test
  double tau_c = 0.7;      // contact confidence threshold
  double v_f = 0.8;        // [m/s] average finger velocity
  double f_c = 30.0;       // [Hz] capture rate
  double beta1 = 5.0;      // [s^2/m] contact-likelihood steepness
  double v_max = 1.5;      // [m/s] velocity gate
  double delta_contact_map = 0.005;  // [m] correspondence radius
  bool literal_probability = false;  // component-summed sigmoid argument
  int impute_passes = 1;

  void validate() const {
    if (!(0.0 < dis_min && dis_min < dis_max))
      throw std::invalid_argument("contact: need 0 < dis_min < dis_max");
    if (!(0.0 < tau_c && tau_c < 1.0))
      throw std::invalid_argument("contact: need 0 < tau_c < 1");
    if (v_f <= 0 || f_c <= 0 || v_max <= 0 || delta_contact_map <= 0)
      throw std::invalid_argument("contact: rates and radii must be > 0");
    if (impute_passes < 1)
      throw std::invalid_argument("contact: impute_passes must be >= 1");
  }
};

// Per-fingertip contact flags, ordered thumb..pinky.
using ContactState = std::array<bool, kNumFingers>;

// Fingertip positions and unsigned surface distances over a sequence.
// `valid` is false for fingers the hand does not have; they never contact.
struct FingertipTrace {
  bool valid = false;
  std::vector<Vec3> positions;
  std::vector<double> distances;
};

using HandTraces = std::array<FingertipTrace, kNumFingers>;

// World positions of a (possibly moving) object origin; empty means static.
struct ObjectMotion {
  std::vector<Vec3> positions;
};

struct ContactPair {
  int hand_point = -1;  // global surface-sample index on the chain
  int vertex = -1;      // object mesh vertex index
  double distance = 0.0;
};

struct ContactMap {
  std::array<std::vector<ContactPair>, kNumFingers> fingers;
};

// Dual-threshold hysteresis: on below dis_min, off above dis_max, previous
// state inside the dead band (false before first crossing).
inline std::vector<ContactState> dual_threshold(const HandTraces& traces,
                                                const ContactConfig& cfg) {
  cfg.validate();
  std::size_t frames = 0;
  for (const auto& tr : traces)
    if (tr.valid) frames = std::max(frames, tr.distances.size());
  if (frames == 0)
    throw std::invalid_argument("dual_threshold: no valid traces");

  std::vector<ContactState> states(frames, ContactState{});
  for (int f = 0; f < kNumFingers; ++f) {
    const auto& tr = traces[f];
    if (!tr.valid) continue;
    if (tr.distances.size() != frames)
      throw std::invalid_argument("dual_threshold: trace length mismatch");
    bool state = false;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = tr.distances[t];
      if (d < cfg.dis_min)
        state = true;
      else if (d > cfg.dis_max)
        state = false;
      states[t][f] = state;
    }
  }
  return states;
}

// Displacement over one frame from the velocities at the adjacent frames.
inline double velocity_displacement(double v_prev, double v_next, double dt) {
  if (dt <= 0.0)
    throw std::invalid_argument("velocity_displacement: dt must be > 0");
  return 0.5 * (v_prev + v_next) * dt;
}

// Neighbor-average test with the velocity bonus; strict inequality. The
// bonus is the expected fingertip displacement over one frame at the nominal
// finger speed.
inline bool interpolate_contact(bool c_prev, bool c_next,
                                const ContactConfig& cfg) {
  const double mid = 0.5 * std::abs(static_cast<double>(c_prev) +
                                    static_cast<double>(c_next));
  const double bonus =
      cfg.alpha_v * velocity_displacement(cfg.v_f, cfg.v_f, 1.0 / cfg.f_c);
  return mid + bonus > cfg.tau_c;
}

// Least-squares cubic per axis over a short window, in u - u0.
class CubicFit {
 public:
  CubicFit(std::vector<Vec3> positions, std::vector<double> timestamps) {
    const int n = static_cast<int>(positions.size());
    if (n < 4)
      throw std::invalid_argument("fit_spline: need at least 4 samples");
    if (timestamps.size() != positions.size())
      throw std::invalid_argument("fit_spline: size mismatch");
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (timestamps[i] == timestamps[j])
          throw std::invalid_argument("fit_spline: duplicate timestamps");

    u0_ = timestamps.front();
    Eigen::MatrixXd a(n, 4);
    for (int i = 0; i < n; ++i) {
      const double u = timestamps[i] - u0_;
      a(i, 0) = 1.0;
      a(i, 1) = u;
      a(i, 2) = u * u;
      a(i, 3) = u * u * u;
    }
    Eigen::MatrixXd b(n, 3);
    for (int i = 0; i < n; ++i) b.row(i) = positions[i].transpose();
    const Eigen::MatrixXd sol = a.colPivHouseholderQr().solve(b);
    coeffs_ = sol.transpose();  // 3 x 4
    residual_ = std::sqrt((a * sol - b).squaredNorm() /
                          static_cast<double>(n));
  }

  Vec3 position(double u) const {
    const double s = u - u0_;
    return coeffs_.col(0) + s * coeffs_.col(1) + s * s * coeffs_.col(2) +
           s * s * s * coeffs_.col(3);
  }

  Vec3 velocity(double u) const {
    const double s = u - u0_;
    return coeffs_.col(1) + 2.0 * s * coeffs_.col(2) +
           3.0 * s * s * coeffs_.col(3);
  }

  Vec3 acceleration(double u) const {
    const double s = u - u0_;
    return 2.0 * coeffs_.col(2) + 6.0 * s * coeffs_.col(3);
  }

  // coefficient of (u - u0)^i for axis k
  double coeff(int axis, int i) const { return coeffs_(axis, i); }
  double residual() const { return residual_; }
  double u0() const { return u0_; }

 private:
  Eigen::Matrix<double, 3, 4> coeffs_;
  double u0_ = 0.0;
  double residual_ = 0.0;
};

inline CubicFit fit_spline(std::vector<Vec3> positions,
                           std::vector<double> timestamps) {
  return CubicFit(std::move(positions), std::move(timestamps));
}

// Likelihood that hand and object move as one body. The default form feeds
// the negated acceleration-mismatch norm through the sigmoid so that
// co-moving bodies score high; the literal form sums the components of the
// acceleration difference as printed.
inline double contact_probability(const Vec3& hand_acc, const Vec3& obj_acc,
                                  double beta1, bool literal = false) {
  if (!hand_acc.allFinite() || !obj_acc.allFinite())
    throw std::invalid_argument("contact_probability: non-finite input");
  const Vec3 d = hand_acc - obj_acc;
  const double arg = literal ? beta1 * d.sum() : -beta1 * d.norm();
  return sigmoid(arg);
}

struct ImputeDiagnostics {
  // per frame, per finger
  std::vector<std::array<bool, kNumFingers>> gate_open;
  std::vector<std::array<double, kNumFingers>> probability;
  std::vector<std::array<double, kNumFingers>> speed;
  int changed = 0;
};

// Temporal imputation (one pass by default): a single-frame fluctuation
// (state disagreeing with both agreeing neighbors) whose motion gate opens
// takes the neighbor-interpolated state; everything else keeps its input
// state. Unrestricted neighbor interpolation would erode every plateau edge
// (neighbors (1,0) score below tau_c), multiplying flips instead of removing
// them. Boundary frames and sequences shorter than the 5-frame spline window
// pass through unchanged.
inline std::vector<ContactState> impute_states(
    const std::vector<ContactState>& raw, const HandTraces& traces,
    const ObjectMotion& obj_motion, const std::vector<double>& timestamps,
    const ContactConfig& cfg, ImputeDiagnostics* diag = nullptr) {
  cfg.validate();
  const int frames = static_cast<int>(raw.size());
  if (static_cast<int>(timestamps.size()) != frames)
    throw std::invalid_argument("impute_states: timestamp count mismatch");
  if (!obj_motion.positions.empty() &&
      static_cast<int>(obj_motion.positions.size()) != frames)
    throw std::invalid_argument("impute_states: object motion length mismatch");
  for (const auto& tr : traces)
    if (tr.valid && static_cast<int>(tr.positions.size()) != frames)
      throw std::invalid_argument("impute_states: trace length mismatch");

  if (diag) {
    diag->gate_open.assign(frames, {});
    diag->probability.assign(frames, {});
    diag->speed.assign(frames, {});
    diag->changed = 0;
  }
  std::vector<ContactState> cur = raw;
  if (frames < 5) return cur;

  auto window_fit = [&](const std::vector<Vec3>& pos, int t) {
    const int w0 = std::clamp(t - 2, 0, frames - 5);
    std::vector<Vec3> p(pos.begin() + w0, pos.begin() + w0 + 5);
    std::vector<double> u(timestamps.begin() + w0, timestamps.begin() + w0 + 5);
    return CubicFit(std::move(p), std::move(u));
  };

  for (int pass = 0; pass < cfg.impute_passes; ++pass) {
    const std::vector<ContactState> in = cur;
    for (int t = 1; t + 1 < frames; ++t) {
      for (int f = 0; f < kNumFingers; ++f) {
        const auto& tr = traces[f];
        if (!tr.valid) continue;
        const bool fluctuation = in[t - 1][f] == in[t + 1][f] &&
                                 in[t][f] != in[t - 1][f];
        const CubicFit hand = window_fit(tr.positions, t);
        const Vec3 hand_acc = hand.acceleration(timestamps[t]);
        const double speed = hand.velocity(timestamps[t]).norm();
        Vec3 obj_acc = Vec3::Zero();
        if (!obj_motion.positions.empty())
          obj_acc = window_fit(obj_motion.positions, t)
                        .acceleration(timestamps[t]);
        const double pc = contact_probability(hand_acc, obj_acc, cfg.beta1,
                                              cfg.literal_probability);
        const bool gate = pc > 0.5 && speed < cfg.v_max;
        if (diag && pass == 0) {
          diag->gate_open[t][f] = gate;
          diag->probability[t][f] = pc;
          diag->speed[t][f] = speed;
        }
        const bool out =
            fluctuation && gate
                ? interpolate_contact(in[t - 1][f], in[t + 1][f], cfg)
                : in[t][f];
        if (diag && out != cur[t][f]) ++diag->changed;
        cur[t][f] = out;
      }
    }
  }
  return cur;
}

// Hand-point/object-vertex correspondences for fingers in contact: every
// surface sample of the finger within the correspondence radius pairs with
// its nearest mesh vertex.
inline ContactMap build_contact_map(const KinematicChain& chain,
                                    const JointVector& q,
                                    const TriangleMeshObject& mesh,
                                    const ContactState& state,
                                    const ContactConfig& cfg) {
  cfg.validate();
  ContactMap map;
  const auto world = chain.forward_kinematics(q);
  for (int f = 0; f < kNumFingers; ++f) {
    if (!state[f]) continue;
    const auto samples =
        chain.surface_points(world, static_cast<Finger>(f));
    for (const auto& s : samples) {
      const SurfaceQueryResult res = mesh.nearest_point(s.point);
      if (res.distance <= cfg.delta_contact_map)
        map.fingers[f].push_back(
            ContactPair{s.global_index, res.vertex_index, res.distance});
    }
  }
  return map;
}

// Fingertip traces of a joint sequence against an object: positions from
// forward kinematics, distances from nearest-surface queries (unsigned).
inline HandTraces build_traces(const KinematicChain& chain,
                               const std::vector<JointVector>& q_seq,
                               const TriangleMeshObject& mesh) {
  HandTraces traces;
  for (int f = 0; f < kNumFingers; ++f)
    traces[f].valid = chain.fingertip_link(static_cast<Finger>(f)) >= 0;
  for (const auto& q : q_seq) {
    const auto world = chain.forward_kinematics(q);
    for (int f = 0; f < kNumFingers; ++f) {
      if (!traces[f].valid) continue;
      const Vec3 tip = chain.fingertip_position(world, static_cast<Finger>(f));
      traces[f].positions.push_back(tip);
      traces[f].distances.push_back(mesh.nearest_point(tip).distance);
    }
  }
  return traces;
}

}  // namespace regrasp
