#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "regrasp/metrics.hpp"
#include "regrasp/trajectory_io.hpp"

namespace regrasp {

struct MetricsOptions {
  ChamferMode cd_mode = ChamferMode::Bidirectional;
  VelocityKlOptions kl;
  bool joint_space_rms = true;
};

// Everything a run needs, parsed from one JSON file. Relative paths are
// resolved against the config file's directory.
struct PipelineConfig {
  std::filesystem::path chain_path;
  std::filesystem::path mesh_path;
  std::filesystem::path trajectory_path;
  std::filesystem::path output_dir = "out";
  double scale = 10.0 / 9.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool force = false;               // skip upstream digest checks
  bool allow_nonstandard = false;   // accept other dof/keypoint counts
  RetargetConfig retarget;
  ContactConfig contact;
  RefineConfig refine;
  MetricsOptions metrics;

  static PipelineConfig load(const std::filesystem::path& path);

  void validate() const {
    if (!(scale > 0.0))
      throw std::invalid_argument("config: scale must be > 0");
    if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
    for (const auto& [what, p] :
         {std::pair<const char*, const std::filesystem::path&>{"chain",
                                                               chain_path},
          {"mesh", mesh_path},
          {"human trajectory", trajectory_path}}) {
      if (p.empty())
        throw std::invalid_argument(std::string("config: missing ") + what +
                                    " path");
      if (!std::filesystem::exists(p))
        throw std::invalid_argument(std::string("config: ") + what +
                                    " file does not exist: " + p.string());
    }
    retarget.validate();
    contact.validate();
    refine.validate();
  }

  // Digest over everything that determines sequence content: the numeric
  // configuration plus the input file bytes. Output/jobs/metrics options and
  // the paths themselves are excluded.
  std::string digest() const {
    nlohmann::json j = to_json();
    j.erase("chain");
    j.erase("mesh");
    j.erase("human_trajectory");
    j.erase("output_dir");
    j.erase("jobs");
    j.erase("metrics");
    const std::string canon = j.dump();
    std::uint64_t h = fnv1a64(canon);
    for (const auto& p : {chain_path, mesh_path, trajectory_path})
      h = fnv1a64(file_digest(p).data(), 16, h);
    return digest_hex(h);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["chain"] = chain_path.string();
    j["mesh"] = mesh_path.string();
    j["human_trajectory"] = trajectory_path.string();
    j["output_dir"] = output_dir.string();
    j["scale"] = scale;
    j["seed"] = seed;
    j["jobs"] = jobs;
    j["allow_nonstandard_chain"] = allow_nonstandard;
    j["retarget"] = {
        {"alpha", retarget.alpha},
        {"lambda", retarget.lambda},
        {"gamma", retarget.gamma},
        {"window", retarget.window_k},
        {"dt", retarget.dt},
        {"budget", retarget.search_budget},
        {"population", retarget.population_size},
        {"polish_iters", retarget.polish_iters},
        {"polish_tol", retarget.polish_tol},
        {"warm_jitter", retarget.warm_jitter},
    };
    if (retarget.sigma_inv.size() > 0) {
      std::vector<double> flat(retarget.sigma_inv.data(),
                               retarget.sigma_inv.data() +
                                   retarget.sigma_inv.size());
      j["retarget"]["sigma_inv"] = flat;
    }
    j["contact"] = {
        {"dis_min", contact.dis_min},
        {"dis_max", contact.dis_max},
        {"alpha_v", contact.alpha_v},
        {"tau_c", contact.tau_c},
        {"v_f", contact.v_f},
        {"f_c", contact.f_c},
        {"beta1", contact.beta1},
        {"v_max", contact.v_max},
        {"delta_contact_map", contact.delta_contact_map},
        {"literal_probability", contact.literal_probability},
        {"impute_passes", contact.impute_passes},
    };
    std::vector<std::string> order;
    for (Finger f : refine.finger_order) order.push_back(to_string(f));
    j["refine"] = {
        {"w_pen", refine.weights.pen},
        {"w_align", refine.weights.align},
        {"w_spen", refine.weights.spen},
        {"w_joints", refine.weights.joints},
        {"delta_spen", refine.delta_spen},
        {"pen_clearance", refine.pen_clearance},
        {"finger_order", order},
        {"max_iters_per_finger", refine.max_iters_per_finger},
        {"step_tol", refine.step_tol},
        {"outer_rounds", refine.outer_rounds},
        {"reproject_anchors", refine.reproject_anchors},
        {"reproject_radius", refine.reproject_radius},
        {"literal_align", refine.literal_align},
    };
    j["metrics"] = {
        {"cd_mode", to_string(metrics.cd_mode)},
        {"kl_bins", metrics.kl.bins},
        {"kl_max_speed", metrics.kl.max_speed},
        {"kl_epsilon", metrics.kl.epsilon},
        {"rms_space", metrics.joint_space_rms ? "joint" : "keypoint"},
    };
    return j;
  }
};

namespace detail {

inline void check_config_fields(const nlohmann::json& obj, const char* what,
                                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw std::runtime_error(std::string("config: unknown field '") + key +
                               "' in " + what);
  }
}

}  // namespace detail

inline PipelineConfig PipelineConfig::load(
    const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("config: parse failure in " + path.string() +
                             ": " + e.what());
  }
  detail::check_config_fields(
      doc, "config file",
      {"chain", "mesh", "human_trajectory", "output_dir", "scale", "seed",
       "jobs", "allow_nonstandard_chain", "retarget", "contact", "refine",
       "metrics"});

  PipelineConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  if (doc.contains("chain"))
    cfg.chain_path = resolve(doc["chain"].get<std::string>());
  if (doc.contains("mesh"))
    cfg.mesh_path = resolve(doc["mesh"].get<std::string>());
  if (doc.contains("human_trajectory"))
    cfg.trajectory_path = resolve(doc["human_trajectory"].get<std::string>());
  if (doc.contains("output_dir"))
    cfg.output_dir = resolve(doc["output_dir"].get<std::string>());
  cfg.scale = doc.value("scale", cfg.scale);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.jobs = doc.value("jobs", cfg.jobs);
  cfg.allow_nonstandard = doc.value("allow_nonstandard_chain", false);

  if (doc.contains("retarget")) {
    const auto& r = doc["retarget"];
    detail::check_config_fields(
        r, "retarget",
        {"alpha", "lambda", "gamma", "window", "dt", "budget", "population",
         "polish_iters", "polish_tol", "warm_jitter", "sigma_inv",
         "sigma_inv_diagonal"});
    cfg.retarget.alpha = r.value("alpha", cfg.retarget.alpha);
    cfg.retarget.lambda = r.value("lambda", cfg.retarget.lambda);
    cfg.retarget.gamma = r.value("gamma", cfg.retarget.gamma);
    cfg.retarget.window_k = r.value("window", cfg.retarget.window_k);
    cfg.retarget.dt = r.value("dt", cfg.retarget.dt);
    cfg.retarget.search_budget = r.value("budget", cfg.retarget.search_budget);
    cfg.retarget.population_size =
        r.value("population", cfg.retarget.population_size);
    cfg.retarget.polish_iters =
        r.value("polish_iters", cfg.retarget.polish_iters);
    cfg.retarget.polish_tol = r.value("polish_tol", cfg.retarget.polish_tol);
    cfg.retarget.warm_jitter =
        r.value("warm_jitter", cfg.retarget.warm_jitter);
    if (r.contains("sigma_inv_diagonal")) {
      const auto diag = r["sigma_inv_diagonal"].get<std::vector<double>>();
      cfg.retarget.sigma_inv =
          Eigen::Map<const Eigen::VectorXd>(diag.data(), diag.size())
              .asDiagonal();
    }
    if (r.contains("sigma_inv")) {
      const auto flat = r["sigma_inv"].get<std::vector<double>>();
      const int n = static_cast<int>(std::lround(std::sqrt(
          static_cast<double>(flat.size()))));
      if (n * n != static_cast<int>(flat.size()))
        throw std::runtime_error("config: sigma_inv must be a square matrix");
      cfg.retarget.sigma_inv =
          Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, n);
    }
  }
  if (doc.contains("contact")) {
    const auto& c = doc["contact"];
    detail::check_config_fields(
        c, "contact",
        {"dis_min", "dis_max", "alpha_v", "tau_c", "v_f", "f_c", "beta1",
         "v_max", "delta_contact_map", "literal_probability",
         "impute_passes"});
    cfg.contact.dis_min = c.value("dis_min", cfg.contact.dis_min);
    cfg.contact.dis_max = c.value("dis_max", cfg.contact.dis_max);
    cfg.contact.alpha_v = c.value("alpha_v", cfg.contact.alpha_v);
    cfg.contact.tau_c = c.value("tau_c", cfg.contact.tau_c);
    cfg.contact.v_f = c.value("v_f", cfg.contact.v_f);
    cfg.contact.f_c = c.value("f_c", cfg.contact.f_c);
    cfg.contact.beta1 = c.value("beta1", cfg.contact.beta1);
    cfg.contact.v_max = c.value("v_max", cfg.contact.v_max);
    cfg.contact.delta_contact_map =
        c.value("delta_contact_map", cfg.contact.dis_max);
    cfg.contact.literal_probability =
        c.value("literal_probability", cfg.contact.literal_probability);
    cfg.contact.impute_passes =
        c.value("impute_passes", cfg.contact.impute_passes);
  } else {
    cfg.contact.delta_contact_map = cfg.contact.dis_max;
  }
  if (doc.contains("refine")) {
    const auto& f = doc["refine"];
    detail::check_config_fields(
        f, "refine",
        {"w_pen", "w_align", "w_spen", "w_joints", "delta_spen",
         "pen_clearance", "finger_order", "max_iters_per_finger", "step_tol",
         "outer_rounds", "reproject_anchors", "reproject_radius",
         "literal_align"});
    cfg.refine.weights.pen = f.value("w_pen", cfg.refine.weights.pen);
    cfg.refine.weights.align = f.value("w_align", cfg.refine.weights.align);
    cfg.refine.weights.spen = f.value("w_spen", cfg.refine.weights.spen);
    cfg.refine.weights.joints =
        f.value("w_joints", cfg.refine.weights.joints);
    cfg.refine.delta_spen = f.value("delta_spen", cfg.refine.delta_spen);
    cfg.refine.pen_clearance =
        f.value("pen_clearance", cfg.refine.pen_clearance);
    if (f.contains("finger_order")) {
      const auto names = f["finger_order"].get<std::vector<std::string>>();
      if (names.size() != kNumFingers)
        throw std::runtime_error("config: finger_order needs 5 entries");
      for (int i = 0; i < kNumFingers; ++i) {
        const auto fing = finger_from_string(names[i]);
        if (!fing || *fing == Finger::Palm)
          throw std::runtime_error("config: bad finger '" + names[i] + "'");
        cfg.refine.finger_order[i] = *fing;
      }
    }
    cfg.refine.max_iters_per_finger =
        f.value("max_iters_per_finger", cfg.refine.max_iters_per_finger);
    cfg.refine.step_tol = f.value("step_tol", cfg.refine.step_tol);
    cfg.refine.outer_rounds = f.value("outer_rounds", cfg.refine.outer_rounds);
    cfg.refine.reproject_anchors =
        f.value("reproject_anchors", cfg.refine.reproject_anchors);
    cfg.refine.reproject_radius =
        f.value("reproject_radius", cfg.contact.delta_contact_map);
    cfg.refine.literal_align =
        f.value("literal_align", cfg.refine.literal_align);
  }
  if (doc.contains("metrics")) {
    const auto& m = doc["metrics"];
    detail::check_config_fields(
        m, "metrics",
        {"cd_mode", "kl_bins", "kl_max_speed", "kl_epsilon", "rms_space"});
    if (m.contains("cd_mode")) {
      const std::string mode = m["cd_mode"].get<std::string>();
      if (mode == "literal")
        cfg.metrics.cd_mode = ChamferMode::Literal;
      else if (mode == "bidirectional")
        cfg.metrics.cd_mode = ChamferMode::Bidirectional;
      else
        throw std::runtime_error("config: cd_mode must be literal or "
                                 "bidirectional");
    }
    cfg.metrics.kl.bins = m.value("kl_bins", cfg.metrics.kl.bins);
    cfg.metrics.kl.max_speed =
        m.value("kl_max_speed", cfg.metrics.kl.max_speed);
    cfg.metrics.kl.epsilon = m.value("kl_epsilon", cfg.metrics.kl.epsilon);
    if (m.contains("rms_space")) {
      const std::string space = m["rms_space"].get<std::string>();
      if (space != "joint" && space != "keypoint")
        throw std::runtime_error("config: rms_space must be joint or "
                                 "keypoint");
      cfg.metrics.joint_space_rms = space == "joint";
    }
  }
  cfg.metrics.kl.dt = cfg.retarget.dt;
  return cfg;
}

// --- run orchestration ------------------------------------------------------

struct LoadedInputs {
  KinematicChain chain;
  TriangleMeshObject mesh;            // scaled
  std::vector<HumanFrame> frames;     // scaled
};

// Scaling happens in exactly one place: mesh vertices and human keypoints are
// both multiplied by `scale` at ingestion; joint outputs stay in the robot's
// native units.
inline LoadedInputs load_inputs(const PipelineConfig& cfg,
                                std::vector<std::string>* warnings = nullptr) {
  cfg.validate();
  LoadedInputs in;
  ChainLoadOptions copts;
  copts.allow_nonstandard = cfg.allow_nonstandard;
  copts.warnings = warnings;
  in.chain = load_chain(cfg.chain_path, copts);
  in.mesh = load_mesh(cfg.mesh_path).scaled(cfg.scale);
  in.frames = read_human_trajectory(cfg.trajectory_path,
                                    in.chain.keypoint_count());
  for (auto& f : in.frames)
    for (auto& kp : f.keypoints) kp *= cfg.scale;
  return in;
}

struct StageResultPaths {
  std::filesystem::path retargeted;
  std::filesystem::path contact;
  std::filesystem::path refined;
  std::filesystem::path metrics_report;
  std::filesystem::path metrics_series;
  std::filesystem::path manifest;
};

inline StageResultPaths default_paths(const PipelineConfig& cfg) {
  StageResultPaths p;
  p.retargeted = cfg.output_dir / "retargeted.qtraj";
  p.contact = cfg.output_dir / "contact.timeline";
  p.refined = cfg.output_dir / "refined.qtraj";
  p.metrics_report = cfg.output_dir / "metrics.json";
  p.metrics_series = cfg.output_dir / "metrics_series.tsv";
  p.manifest = cfg.output_dir / "manifest.json";
  return p;
}

inline void require_matching_digest(const std::string& found,
                                    const std::string& expected,
                                    const std::filesystem::path& file,
                                    bool force) {
  if (found == expected) return;
  const std::string msg = "stage input " + file.string() +
                          " was produced under config digest " + found +
                          ", current digest is " + expected;
  if (!force) throw std::runtime_error(msg + " (use --force to override)");
  std::cerr << "warning: " << msg << " (forced)\n";
}

inline GraspSequence run_retarget_stage(const PipelineConfig& cfg,
                                        const LoadedInputs& in,
                                        const std::filesystem::path& out_path) {
  RetargetConfig rcfg = cfg.retarget;
  rcfg.seed = cfg.seed;
  std::vector<RetargetFrameInfo> info;
  const auto poses = retarget_sequence(in.chain, in.frames, rcfg, &info);

  GraspSequence seq;
  seq.provenance = GraspSequence::Provenance::Retargeted;
  seq.config_digest = cfg.digest();
  for (std::size_t t = 0; t < poses.size(); ++t) {
    seq.timestamps.push_back(in.frames[t].timestamp);
    seq.poses.push_back(poses[t]);
    seq.objectives.push_back(info[t].objective);
  }
  std::filesystem::create_directories(out_path.parent_path());
  write_sequence(out_path, seq);
  return seq;
}

inline ContactTimeline run_contact_stage(
    const PipelineConfig& cfg, const LoadedInputs& in,
    const std::filesystem::path& retargeted_path,
    const std::filesystem::path& out_path) {
  const GraspSequence seq = read_sequence(retargeted_path);
  require_matching_digest(seq.config_digest, cfg.digest(), retargeted_path,
                          cfg.force);
  if (seq.poses.size() != in.frames.size())
    throw std::runtime_error(
        "contact: retargeted sequence has " +
        std::to_string(seq.poses.size()) + " frames, trajectory has " +
        std::to_string(in.frames.size()));

  const HandTraces traces = build_traces(in.chain, seq.poses, in.mesh);
  ContactTimeline timeline;
  timeline.states = dual_threshold(traces, cfg.contact);
  timeline.states = impute_states(timeline.states, traces, ObjectMotion{},
                                  seq.timestamps, cfg.contact);
  timeline.maps.reserve(seq.poses.size());
  for (std::size_t t = 0; t < seq.poses.size(); ++t)
    timeline.maps.push_back(build_contact_map(
        in.chain, seq.poses[t], in.mesh, timeline.states[t], cfg.contact));

  std::filesystem::create_directories(out_path.parent_path());
  write_contact_timeline(out_path, timeline, seq.timestamps, cfg.digest());
  return timeline;
}

inline GraspSequence run_refine_stage(const PipelineConfig& cfg,
                                      const LoadedInputs& in,
                                      const std::filesystem::path& retargeted_path,
                                      const std::filesystem::path& contact_path,
                                      const std::filesystem::path& out_path) {
  const GraspSequence seq = read_sequence(retargeted_path);
  require_matching_digest(seq.config_digest, cfg.digest(), retargeted_path,
                          cfg.force);
  std::string contact_digest;
  const ContactTimeline timeline =
      read_contact_timeline(contact_path, nullptr, &contact_digest);
  require_matching_digest(contact_digest, cfg.digest(), contact_path,
                          cfg.force);
  if (timeline.states.size() != seq.poses.size())
    throw std::runtime_error("refine: contact timeline frame count mismatch");

  RefineReport report(seq.poses.size());
  std::vector<JointVector> refined(seq.poses.size());
  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= seq.poses.size()) break;
      report[t].frame = static_cast<int>(t);
      refined[t] = refine_frame(in.chain, seq.poses[t], timeline.states[t],
                                timeline.maps[t], in.mesh, cfg.refine,
                                &report[t]);
    }
  };
  if (jobs == 1) {
    work();
  } else {
    for (int w = 0; w < jobs; ++w) workers.emplace_back(work);
    for (auto& th : workers) th.join();
  }

  GraspSequence out = seq;
  out.provenance = GraspSequence::Provenance::Refined;
  out.poses = refined;
  std::vector<EnergyMetadataLine> energies;
  for (const auto& rec : report) {
    for (const auto& fe : rec.fingers) {
      EnergyMetadataLine e;
      e.frame = rec.frame;
      e.finger = fe.finger;
      e.after = fe.after;
      e.total_before = fe.before.total(cfg.refine.weights);
      e.total_after = fe.after.total(cfg.refine.weights);
      energies.push_back(e);
    }
  }
  std::filesystem::create_directories(out_path.parent_path());
  write_sequence(out_path, out, energies);
  return out;
}

inline nlohmann::json run_metrics_stage(
    const PipelineConfig& cfg, const LoadedInputs& in,
    const std::filesystem::path& retargeted_path,
    const std::filesystem::path& refined_path,
    const std::filesystem::path& contact_path,
    const std::filesystem::path& report_path,
    const std::filesystem::path& series_path) {
  const GraspSequence retargeted = read_sequence(retargeted_path);
  require_matching_digest(retargeted.config_digest, cfg.digest(),
                          retargeted_path, cfg.force);
  const GraspSequence refined = read_sequence(refined_path);
  require_matching_digest(refined.config_digest, cfg.digest(), refined_path,
                          cfg.force);
  const ContactTimeline timeline = read_contact_timeline(contact_path);

  PointCloudSeq human;
  for (const auto& f : in.frames) human.push_back(f.keypoints);

  struct SeriesColumns {
    std::vector<double> penetration;
    std::vector<double> cd;
    std::vector<double> acc;
  };

  auto analyze = [&](const GraspSequence& seq) {
    nlohmann::json j;
    PointCloudSeq robot;
    std::vector<Eigen::VectorXd> joints;
    for (const auto& q : seq.poses) {
      robot.push_back(in.chain.keypoints(q));
      joints.push_back(q);
    }
    j["cd_literal"] = chamfer_over_time(human, robot, ChamferMode::Literal);
    j["cd_bidirectional"] =
        chamfer_over_time(human, robot, ChamferMode::Bidirectional);
    j["cd"] = cfg.metrics.cd_mode == ChamferMode::Literal
                  ? j["cd_literal"].get<double>()
                  : j["cd_bidirectional"].get<double>();
    j["velocity_kl"] = velocity_kl(human, robot, cfg.metrics.kl);
    j["rms_acc"] = cfg.metrics.joint_space_rms
                       ? rms_acceleration(joints, cfg.retarget.dt)
                       : rms_acceleration(robot, cfg.retarget.dt);
    j["rms_acc_space"] = cfg.metrics.joint_space_rms ? "joint" : "keypoint";
    const auto pen = penetration_and_contact(in.chain, seq.poses, in.mesh,
                                             &timeline.states);
    j["max_penetration"] = pen.max_penetration;
    if (pen.mean_contact_distance)
      j["mean_contact_distance"] = *pen.mean_contact_distance;
    else
      j["mean_contact_distance"] = nullptr;

    SeriesColumns series;
    series.penetration = pen.per_frame_penetration;
    const double dt2 = cfg.retarget.dt * cfg.retarget.dt;
    for (std::size_t t = 0; t < seq.poses.size(); ++t) {
      series.cd.push_back(chamfer_over_time({human[t]}, {robot[t]},
                                            cfg.metrics.cd_mode));
      if (t == 0 || t + 1 == seq.poses.size())
        series.acc.push_back(0.0);
      else
        series.acc.push_back(
            ((joints[t + 1] - 2.0 * joints[t] + joints[t - 1]) / dt2).norm());
    }
    return std::pair(j, series);
  };

  auto [ret_json, ret_series] = analyze(retargeted);
  auto [ref_json, ref_series] = analyze(refined);

  nlohmann::json report;
  report["config"] = cfg.digest();
  report["cd_mode"] = to_string(cfg.metrics.cd_mode);
  report["cloud_source"] = "robot_keypoints_vs_scaled_human";
  report["sequences"]["retargeted"] = ret_json;
  report["sequences"]["refined"] = ref_json;

  std::filesystem::create_directories(report_path.parent_path());
  {
    std::ofstream out(report_path);
    out << report.dump(2) << "\n";
  }
  {
    std::ofstream out(series_path);
    out << "frame\tt\tpen_retargeted\tpen_refined\tcd_retargeted\t"
           "cd_refined\tacc_retargeted\tacc_refined\n";
    for (std::size_t t = 0; t < ret_series.penetration.size(); ++t)
      out << t << "\t" << fmt_double(retargeted.timestamps[t]) << "\t"
          << fmt_double(ret_series.penetration[t]) << "\t"
          << fmt_double(ref_series.penetration[t]) << "\t"
          << fmt_double(ret_series.cd[t]) << "\t"
          << fmt_double(ref_series.cd[t]) << "\t"
          << fmt_double(ret_series.acc[t]) << "\t"
          << fmt_double(ref_series.acc[t]) << "\n";
  }
  return report;
}

struct RunAllResult {
  StageResultPaths paths;
  nlohmann::json manifest;
};

inline void write_manifest_atomic(const std::filesystem::path& path,
                                  const nlohmann::json& manifest) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out)
      throw std::runtime_error("manifest: cannot write " + tmp.string());
    out << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

inline RunAllResult run_all(const PipelineConfig& cfg,
                            std::ostream& log = std::cerr) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0)
        .count();
  };

  std::vector<std::string> warnings;
  const LoadedInputs in = load_inputs(cfg, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  const StageResultPaths paths = default_paths(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  nlohmann::json manifest;
  manifest["tool"] = std::string("regrasp ") + REGRASP_VERSION;
  manifest["config_digest"] = cfg.digest();
  manifest["config"] = cfg.to_json();
  manifest["inputs"] = {
      {"chain",
       {{"path", cfg.chain_path.string()},
        {"digest", file_digest(cfg.chain_path)}}},
      {"mesh",
       {{"path", cfg.mesh_path.string()},
        {"digest", file_digest(cfg.mesh_path)}}},
      {"human_trajectory",
       {{"path", cfg.trajectory_path.string()},
        {"digest", file_digest(cfg.trajectory_path)}}},
  };

  auto t0 = clock::now();
  run_retarget_stage(cfg, in, paths.retargeted);
  manifest["stages_ms"]["retarget"] = ms_since(t0);
  log << "retarget: wrote " << paths.retargeted.string() << "\n";

  t0 = clock::now();
  run_contact_stage(cfg, in, paths.retargeted, paths.contact);
  manifest["stages_ms"]["contact"] = ms_since(t0);
  log << "contact: wrote " << paths.contact.string() << "\n";

  t0 = clock::now();
  run_refine_stage(cfg, in, paths.retargeted, paths.contact, paths.refined);
  manifest["stages_ms"]["refine"] = ms_since(t0);
  log << "refine: wrote " << paths.refined.string() << "\n";

  t0 = clock::now();
  run_metrics_stage(cfg, in, paths.retargeted, paths.refined, paths.contact,
                    paths.metrics_report, paths.metrics_series);
  manifest["stages_ms"]["metrics"] = ms_since(t0);
  log << "metrics: wrote " << paths.metrics_report.string() << "\n";

  manifest["outputs"] = nlohmann::json::array();
  for (const auto& p : {paths.retargeted, paths.contact, paths.refined,
                        paths.metrics_report, paths.metrics_series})
    manifest["outputs"].push_back(
        {{"path", p.string()}, {"digest", file_digest(p)}});

  write_manifest_atomic(paths.manifest, manifest);
  RunAllResult res;
  res.paths = paths;
  res.manifest = manifest;
  return res;
}

}  // namespace regrasp
