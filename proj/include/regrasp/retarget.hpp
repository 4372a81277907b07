#pragma once

#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "regrasp/hand_model.hpp"
#include "regrasp/types.hpp"

namespace regrasp {

struct RetargetConfig {
  double alpha = 0.05;   // inter-frame weight on ||q_t - q_{t-1}||^2
  double lambda = 0.1;   // second-difference weight
  double gamma = 0.5;    // prediction-tracking weight
  Eigen::MatrixXd sigma_inv;  // empty => identity
  int window_k = 4;      // history length (frames kept besides the current)
  double dt = 1.0 / 30.0;
  int search_budget = 4000;
  int population_size = 0;  // 0 => 10 * (n + 1)
  std::uint64_t seed = 0;
  int polish_iters = 100;
  double polish_tol = 1e-8;
  double warm_jitter = 0.05;

  void validate() const {
    if (alpha < 0 || lambda < 0 || gamma < 0)
      throw std::invalid_argument("retarget: weights must be >= 0");
    if (window_k < 2)
      throw std::invalid_argument("retarget: window_k must be >= 2");
    if (dt <= 0) throw std::invalid_argument("retarget: dt must be > 0");
    if (sigma_inv.size() > 0) {
      if (sigma_inv.rows() != sigma_inv.cols())
        throw std::invalid_argument("retarget: sigma_inv must be square");
      if (!sigma_inv.isApprox(sigma_inv.transpose(), 1e-9))
        throw std::invalid_argument("retarget: sigma_inv must be symmetric");
      Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_inv);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::invalid_argument(
            "retarget: sigma_inv must be positive semi-definite");
    }
  }
};

struct HumanFrame {
  double timestamp = 0.0;
  std::vector<Vec3> keypoints;
};

// Rolling history of solved poses; at most window_k entries, oldest first.
class SlidingWindow {
 public:
  explicit SlidingWindow(int capacity = 4) : capacity_(capacity) {}

  void push(double timestamp, JointVector q) {
    if (!history_.empty() && timestamp <= history_.back().first)
      throw std::invalid_argument("window: timestamps must increase");
    history_.emplace_back(timestamp, std::move(q));
    while (static_cast<int>(history_.size()) > capacity_)
      history_.pop_front();
  }

  int size() const { return static_cast<int>(history_.size()); }
  bool empty() const { return history_.empty(); }
  int capacity() const { return capacity_; }
  const JointVector& pose(int i) const { return history_[i].second; }
  double timestamp(int i) const { return history_[i].first; }
  const JointVector& latest() const { return history_.back().second; }

  // Backward-difference velocity of the newest pose; zero with < 2 entries.
  JointVector last_velocity() const {
    const int n = size();
    if (n < 2) return JointVector::Zero(history_.back().second.size());
    const double dt = history_[n - 1].first - history_[n - 2].first;
    return (history_[n - 1].second - history_[n - 2].second) / dt;
  }

 private:
  int capacity_;
  std::deque<std::pair<double, JointVector>> history_;
};

// q_pred = q_{t-1} + dt * backward-difference velocity; with uniform frame
// spacing this is 2 q_{t-1} - q_{t-2}. Falls back to the latest pose when
// fewer than two frames are available.
inline JointVector predicted_pose(const SlidingWindow& window) {
  if (window.empty())
    throw std::invalid_argument("predicted_pose: empty window");
  if (window.size() < 2) return window.latest();
  const int n = window.size();
  const double dt = window.timestamp(n - 1) - window.timestamp(n - 2);
  return window.latest() + dt * window.last_velocity();
}

// Task-space keypoint alignment plus the inter-frame coherence term.
inline double alignment_loss(const KinematicChain& chain, const JointVector& q,
                             const HumanFrame& frame,
                             const JointVector* q_prev, double alpha) {
  if (static_cast<int>(frame.keypoints.size()) != chain.keypoint_count())
    throw std::invalid_argument(
        "alignment_loss: frame has " +
        std::to_string(frame.keypoints.size()) + " keypoints, chain expects " +
        std::to_string(chain.keypoint_count()));
  const auto kps = chain.keypoints(q);
  double loss = 0.0;
  for (std::size_t i = 0; i < kps.size(); ++i)
    loss += (frame.keypoints[i] - kps[i]).squaredNorm();
  if (q_prev) loss += alpha * (q - *q_prev).squaredNorm();
  return loss;
}

// Weighted sum of squared second differences over the window joined with the
// candidate pose. Returns 0 with fewer than three poses.
inline double temporal_loss(const SlidingWindow& window, const JointVector& q,
                            const Eigen::MatrixXd& sigma_inv, double lambda) {
  const int n = window.size() + 1;
  if (n < 3 || lambda == 0.0) return 0.0;
  auto pose = [&](int i) -> const JointVector& {
    return i < window.size() ? window.pose(i) : q;
  };
  double acc = 0.0;
  for (int i = 2; i < n; ++i) {
    const JointVector d = pose(i) - 2.0 * pose(i - 1) + pose(i - 2);
    if (sigma_inv.size() > 0)
      acc += d.dot(sigma_inv * d);
    else
      acc += d.squaredNorm();
  }
  return lambda * acc;
}

// Full per-frame objective: alignment + temporal + prediction tracking.
inline double total_objective(const KinematicChain& chain,
                              const JointVector& q, const HumanFrame& frame,
                              const SlidingWindow& window,
                              const RetargetConfig& cfg) {
  const JointVector* prev = window.empty() ? nullptr : &window.latest();
  double obj = alignment_loss(chain, q, frame, prev, cfg.alpha);
  obj += temporal_loss(window, q, cfg.sigma_inv, cfg.lambda);
  if (!window.empty() && cfg.gamma > 0.0)
    obj += cfg.gamma * (q - predicted_pose(window)).squaredNorm();
  return obj;
}

using Objective = std::function<double(const JointVector&)>;

struct GlobalSearchResult {
  JointVector best;
  double value = 0.0;
  int evaluations = 0;
};

// Controlled random search (CRS2 with local mutation). The population holds
// 10*(n+1) points by default; each step reflects the simplex formed by the
// best point and n random others through its centroid, replacing the worst
// population member on improvement; a failed reflection falls back to a
// coordinate-wise mutation between the best and the reflected point.
// Deterministic for a fixed seed.
inline GlobalSearchResult global_search(
    const Objective& f, const JointVector& lo, const JointVector& hi,
    int budget, int population_size, std::uint64_t seed,
    const std::vector<JointVector>& warm_seeds = {}) {
  const int n = static_cast<int>(lo.size());
  if (hi.size() != n)
    throw std::invalid_argument("global_search: bound size mismatch");
  for (int i = 0; i < n; ++i)
    if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
      throw std::invalid_argument("global_search: invalid bounds");

  const int pop_size =
      population_size > 0 ? std::max(population_size, n + 2) : 10 * (n + 1);
  if (budget < pop_size)
    throw std::invalid_argument(
        "global_search: budget exhausted before population initialization (" +
        std::to_string(budget) + " < " + std::to_string(pop_size) + ")");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto clamp_to_bounds = [&](JointVector& x) {
    for (int i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  };

  std::vector<JointVector> pop(pop_size);
  std::vector<double> val(pop_size);
  int evals = 0;
  for (int i = 0; i < pop_size; ++i) {
    if (i < static_cast<int>(warm_seeds.size())) {
      pop[i] = warm_seeds[i];
      clamp_to_bounds(pop[i]);
    } else {
      pop[i].resize(n);
      for (int k = 0; k < n; ++k)
        pop[i][k] = lo[k] + u01(rng) * (hi[k] - lo[k]);
    }
    val[i] = f(pop[i]);
    ++evals;
  }

  auto arg_best = [&]() {
    return static_cast<int>(std::min_element(val.begin(), val.end()) -
                            val.begin());
  };
  auto arg_worst = [&]() {
    return static_cast<int>(std::max_element(val.begin(), val.end()) -
                            val.begin());
  };

  std::vector<int> pick(n);
  while (evals < budget) {
    const int best = arg_best();
    const int worst = arg_worst();

    // n distinct members other than the best
    for (int i = 0; i < n; ++i) {
      int cand;
      bool dup;
      do {
        cand = static_cast<int>(rng() % pop_size);
        dup = cand == best;
        for (int j = 0; j < i && !dup; ++j) dup = pick[j] == cand;
      } while (dup);
      pick[i] = cand;
    }

    // centroid of {best, pick[0..n-2]}, reflect pick[n-1]
    JointVector centroid = pop[best];
    for (int i = 0; i + 1 < n; ++i) centroid += pop[pick[i]];
    centroid /= static_cast<double>(n);
    JointVector trial = 2.0 * centroid - pop[pick[n - 1]];

    bool feasible = true;
    for (int i = 0; i < n && feasible; ++i)
      feasible = trial[i] >= lo[i] && trial[i] <= hi[i];

    bool accepted = false;
    if (feasible) {
      const double ft = f(trial);
      ++evals;
      if (ft < val[worst]) {
        pop[worst] = trial;
        val[worst] = ft;
        accepted = true;
      }
    }
    if (!accepted && evals < budget) {
      JointVector mut(n);
      for (int i = 0; i < n; ++i) {
        const double w = u01(rng);
        mut[i] = (1.0 + w) * pop[best][i] - w * trial[i];
      }
      clamp_to_bounds(mut);
      const double fm = f(mut);
      ++evals;
      if (fm < val[worst]) {
        pop[worst] = mut;
        val[worst] = fm;
      }
    }
  }

  GlobalSearchResult res;
  const int best = arg_best();
  res.best = pop[best];
  res.value = val[best];
  res.evaluations = evals;
  return res;
}

struct PolishResult {
  JointVector q;
  double value = 0.0;
  int evaluations = 0;
};

namespace detail {

// Residual view of the per-frame objective. Every term of the objective is a
// sum of squares, so the local polish can run damped Gauss-Newton on the
// stacked residual vector; temporal triples fully inside the history are
// constant in q and are added back only for reporting.
class RetargetResiduals {
 public:
  RetargetResiduals(const KinematicChain& chain, const HumanFrame& frame,
                    const SlidingWindow& window, const RetargetConfig& cfg)
      : chain_(chain), frame_(frame), window_(window), cfg_(cfg) {
    const int n = chain.dof();
    rows_ = 3 * chain.keypoint_count();
    if (!window.empty() && cfg.alpha > 0.0) rows_ += n;
    use_temporal_ = window.size() >= 2 && cfg.lambda > 0.0;
    if (use_temporal_) {
      rows_ += n;
      if (cfg.sigma_inv.size() > 0)
        sigma_sqrt_ = Eigen::LLT<Eigen::MatrixXd>(cfg.sigma_inv)
                          .matrixL()
                          .transpose();
    }
    if (!window.empty() && cfg.gamma > 0.0) {
      rows_ += n;
      pred_ = predicted_pose(window);
    }
  }

  int rows() const { return rows_; }

  Eigen::VectorXd operator()(const JointVector& q) const {
    const int n = chain_.dof();
    Eigen::VectorXd r(rows_);
    int at = 0;
    const auto kps = chain_.keypoints(q);
    for (int i = 0; i < chain_.keypoint_count(); ++i) {
      r.segment<3>(at) = kps[i] - frame_.keypoints[i];
      at += 3;
    }
    if (!window_.empty() && cfg_.alpha > 0.0) {
      r.segment(at, n) = std::sqrt(cfg_.alpha) * (q - window_.latest());
      at += n;
    }
    if (use_temporal_) {
      const int m = window_.size();
      JointVector d = q - 2.0 * window_.pose(m - 1) + window_.pose(m - 2);
      if (sigma_sqrt_.size() > 0) d = sigma_sqrt_ * d;
      r.segment(at, n) = std::sqrt(cfg_.lambda) * d;
      at += n;
    }
    if (!window_.empty() && cfg_.gamma > 0.0) {
      r.segment(at, n) = std::sqrt(cfg_.gamma) * (q - pred_);
      at += n;
    }
    return r;
  }

 private:
  const KinematicChain& chain_;
  const HumanFrame& frame_;
  const SlidingWindow& window_;
  const RetargetConfig& cfg_;
  Eigen::MatrixXd sigma_sqrt_;
  JointVector pred_;
  bool use_temporal_ = false;
  int rows_ = 0;
};

}  // namespace detail

// Damped Gauss-Newton (Levenberg-Marquardt) on the per-frame objective with
// central-difference Jacobians (h = 1e-5) and box projection onto the joint
// limits. Accepted iterates are monotone in the objective.
inline PolishResult polish_pose(const KinematicChain& chain,
                                const HumanFrame& frame,
                                const SlidingWindow& window,
                                const RetargetConfig& cfg, JointVector q,
                                const JointVector& lo, const JointVector& hi) {
  const detail::RetargetResiduals residuals(chain, frame, window, cfg);
  const int n = chain.dof();
  const double h = 1e-5;

  auto clamp_box = [&](JointVector x) {
    for (int i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  };

  PolishResult res;
  q = clamp_box(std::move(q));
  Eigen::VectorXd r = residuals(q);
  ++res.evaluations;
  double f = r.squaredNorm();

  double mu = -1.0;
  for (int iter = 0; iter < cfg.polish_iters; ++iter) {
    Eigen::MatrixXd jac(residuals.rows(), n);
    for (int k = 0; k < n; ++k) {
      JointVector qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      jac.col(k) = (residuals(qp) - residuals(qm)) / (2.0 * h);
      res.evaluations += 2;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < 1e-14) break;
    if (mu < 0.0) mu = 1e-3 * jtj.diagonal().maxCoeff() + 1e-12;

    bool accepted = false;
    for (int tries = 0; tries < 10; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += mu;
      const JointVector step = a.ldlt().solve(-g);
      const JointVector q_new = clamp_box(q + step);
      const Eigen::VectorXd r_new = residuals(q_new);
      ++res.evaluations;
      const double f_new = r_new.squaredNorm();
      if (f_new < f) {
        const double improvement = f - f_new;
        q = q_new;
        r = r_new;
        f = f_new;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (improvement <= cfg.polish_tol * std::max(f, 1e-30)) iter = cfg.polish_iters;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) break;
  }

  res.q = std::move(q);
  res.value = total_objective(chain, res.q, frame, window, cfg);
  return res;
}

struct RetargetFrameInfo {
  double objective = 0.0;
  int evaluations = 0;
};

// Stage 1 driver: per frame, global search over the joint box seeded from
// the sliding window, then a local polish. Sequential across frames by
// construction (the window feeds forward); deterministic for a fixed config.
inline std::vector<JointVector> retarget_sequence(
    const KinematicChain& chain, const std::vector<HumanFrame>& frames,
    const RetargetConfig& cfg, std::vector<RetargetFrameInfo>* info = nullptr) {
  if (frames.empty())
    throw std::invalid_argument("retarget_sequence: no frames");
  cfg.validate();

  const JointVector lo = chain.lower_bounds();
  const JointVector hi = chain.upper_bounds();
  const int n = chain.dof();

  SlidingWindow window(cfg.window_k);
  std::vector<JointVector> out;
  out.reserve(frames.size());
  if (info) info->clear();

  for (std::size_t t = 0; t < frames.size(); ++t) {
    const HumanFrame& frame = frames[t];
    Objective objective = [&](const JointVector& q) {
      return total_objective(chain, q, frame, window, cfg);
    };

    const std::uint64_t frame_seed =
        cfg.seed ^ (0x9e3779b97f4a7c15ull * (t + 1));
    std::vector<JointVector> seeds;
    if (t == 0) {
      seeds.push_back(chain.rest_pose());
    } else {
      std::mt19937_64 jrng(frame_seed ^ 0x5bf03635ull);
      std::normal_distribution<double> jitter(0.0, cfg.warm_jitter);
      const JointVector prev = window.latest();
      const JointVector pred = predicted_pose(window);
      seeds.push_back(prev);
      seeds.push_back(pred);
      const int pop = cfg.population_size > 0
                          ? std::max(cfg.population_size, n + 2)
                          : 10 * (n + 1);
      const int jittered = std::max(2, pop / 10);
      for (int i = 0; i < jittered; ++i) {
        JointVector s = (i % 2 == 0) ? prev : pred;
        for (int k = 0; k < n; ++k) s[k] += jitter(jrng);
        seeds.push_back(std::move(s));
      }
    }

    const GlobalSearchResult gs =
        global_search(objective, lo, hi, cfg.search_budget,
                      cfg.population_size, frame_seed, seeds);
    PolishResult pol = polish_pose(chain, frame, window, cfg, gs.best, lo, hi);
    if (pol.value > gs.value) {
      pol.q = gs.best;
      pol.value = gs.value;
    }

    window.push(frame.timestamp, pol.q);
    if (info)
      info->push_back(
          RetargetFrameInfo{pol.value, gs.evaluations + pol.evaluations});
    out.push_back(std::move(pol.q));
  }
  return out;
}

}  // namespace regrasp
