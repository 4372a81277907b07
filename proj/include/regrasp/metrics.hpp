#pragma once

#include <optional>
#include <vector>

#include "regrasp/contact.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

using PointCloudSeq = std::vector<std::vector<Vec3>>;

enum class ChamferMode { Literal, Bidirectional };

inline const char* to_string(ChamferMode m) {
  return m == ChamferMode::Literal ? "literal" : "bidirectional";
}

// Time-aligned Chamfer distance. Literal mode takes the single smallest
// cross-pair distance per frame (the printed form); bidirectional mode the
// mean of the two average nearest-neighbor distances.
inline double chamfer_over_time(const PointCloudSeq& ref,
                                const PointCloudSeq& gen, ChamferMode mode) {
  if (ref.size() != gen.size())
    throw std::invalid_argument("chamfer_over_time: frame count mismatch (" +
                                std::to_string(ref.size()) + " vs " +
                                std::to_string(gen.size()) + ")");
  if (ref.empty())
    throw std::invalid_argument("chamfer_over_time: empty sequence");

  double acc = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    const auto& p = ref[t];
    const auto& q = gen[t];
    if (p.empty() || q.empty())
      throw std::invalid_argument("chamfer_over_time: empty cloud at frame " +
                                  std::to_string(t));
    if (mode == ChamferMode::Literal) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& a : p)
        for (const auto& b : q) best = std::min(best, (a - b).norm());
      acc += best;
    } else {
      double fwd = 0.0;
      for (const auto& a : p) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : q) best = std::min(best, (a - b).norm());
        fwd += best;
      }
      double bwd = 0.0;
      for (const auto& b : q) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& a : p) best = std::min(best, (a - b).norm());
        bwd += best;
      }
      acc += 0.5 * (fwd / p.size() + bwd / q.size());
    }
  }
  return acc / static_cast<double>(ref.size());
}

struct VelocityKlOptions {
  int bins = 50;
  double max_speed = 2.0;  // [m/s] histogram range upper edge
  double epsilon = 1e-9;   // additive smoothing
  double dt = 1.0 / 30.0;
};

inline std::vector<double> speed_histogram(const PointCloudSeq& seq,
                                           const VelocityKlOptions& opt) {
  std::vector<double> hist(opt.bins, 0.0);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    if (seq[t].size() != seq[t - 1].size())
      throw std::invalid_argument("velocity_kl: keypoint count varies");
    for (std::size_t i = 0; i < seq[t].size(); ++i) {
      const double speed = (seq[t][i] - seq[t - 1][i]).norm() / opt.dt;
      int bin = static_cast<int>(speed / opt.max_speed * opt.bins);
      bin = std::clamp(bin, 0, opt.bins - 1);
      hist[bin] += 1.0;
    }
  }
  return hist;
}

// KL(ref || gen) between speed histograms of two keypoint trajectories.
inline double velocity_kl(const PointCloudSeq& ref, const PointCloudSeq& gen,
                          const VelocityKlOptions& opt = {}) {
  if (ref.size() < 2 || gen.size() < 2)
    throw std::invalid_argument("velocity_kl: need at least 2 frames");
  auto normalize = [&](std::vector<double> h) {
    double sum = 0.0;
    for (auto& v : h) {
      v += opt.epsilon;
      sum += v;
    }
    for (auto& v : h) v /= sum;
    return h;
  };
  const auto p = normalize(speed_histogram(ref, opt));
  const auto q = normalize(speed_histogram(gen, opt));
  double kl = 0.0;
  for (int i = 0; i < opt.bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

// RMS of second central differences over dt^2, across all components.
inline double rms_acceleration(const std::vector<Eigen::VectorXd>& seq,
                               double dt) {
  if (seq.size() < 3)
    throw std::invalid_argument("rms_acceleration: need at least 3 frames");
  if (dt <= 0.0)
    throw std::invalid_argument("rms_acceleration: dt must be > 0");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 1; t + 1 < seq.size(); ++t) {
    const Eigen::VectorXd a =
        (seq[t + 1] - 2.0 * seq[t] + seq[t - 1]) / (dt * dt);
    acc += a.squaredNorm();
    count += a.size();
  }
  return std::sqrt(acc / static_cast<double>(count));
}

inline double rms_acceleration(const PointCloudSeq& seq, double dt) {
  std::vector<Eigen::VectorXd> flat;
  flat.reserve(seq.size());
  for (const auto& cloud : seq) {
    Eigen::VectorXd v(3 * cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
      v.segment<3>(3 * i) = cloud[i];
    flat.push_back(std::move(v));
  }
  return rms_acceleration(flat, dt);
}

struct PenetrationContactResult {
  double max_penetration = 0.0;
  std::optional<double> mean_contact_distance;  // empty: no contact frames
  std::vector<double> per_frame_penetration;
};

// Worst hand-sample penetration over the sequence plus the mean fingertip
// distance over (frame, finger) pairs flagged in contact. Without a contact
// timeline only the penetration half is computed.
inline PenetrationContactResult penetration_and_contact(
    const KinematicChain& chain, const std::vector<JointVector>& q_seq,
    const TriangleMeshObject& mesh,
    const std::vector<ContactState>* states = nullptr) {
  if (q_seq.empty())
    throw std::invalid_argument("penetration_and_contact: empty sequence");
  if (states && states->size() != q_seq.size())
    throw std::invalid_argument(
        "penetration_and_contact: contact timeline length mismatch");

  PenetrationContactResult res;
  double contact_sum = 0.0;
  std::size_t contact_count = 0;
  for (std::size_t t = 0; t < q_seq.size(); ++t) {
    const auto world = chain.forward_kinematics(q_seq[t]);
    double frame_pen = 0.0;
    for (int gi = 0; gi < chain.surface_sample_count(); ++gi) {
      const double sd =
          mesh.signed_distance(chain.sample_world_point(world, gi));
      frame_pen = std::max(frame_pen, std::max(0.0, -sd));
    }
    res.per_frame_penetration.push_back(frame_pen);
    res.max_penetration = std::max(res.max_penetration, frame_pen);
    if (states) {
      for (int f = 0; f < kNumFingers; ++f) {
        if (!(*states)[t][f]) continue;
        if (chain.fingertip_link(static_cast<Finger>(f)) < 0) continue;
        const Vec3 tip =
            chain.fingertip_position(world, static_cast<Finger>(f));
        contact_sum += mesh.nearest_point(tip).distance;
        ++contact_count;
      }
    }
  }
  if (contact_count > 0)
    res.mean_contact_distance = contact_sum / contact_count;
  return res;
}

}  // namespace regrasp
