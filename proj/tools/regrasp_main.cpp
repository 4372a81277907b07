#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "regrasp/pipeline.hpp"

namespace {

using namespace regrasp;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitCompute = 3;

enum class LogLevel { Quiet, Info, Debug };

LogLevel log_level_from_env() {
  const char* env = std::getenv("REGRASP_LOG");
  if (!env) return LogLevel::Info;
  const std::string v(env);
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

struct NullBuf : std::streambuf {
  int overflow(int c) override { return c; }
};

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> output;
  std::optional<std::string> cd_mode;
  bool strict_literal = false;
  bool force = false;
};

PipelineConfig load_with_overrides(const CommonOpts& opts) {
  PipelineConfig cfg = PipelineConfig::load(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.jobs) cfg.jobs = *opts.jobs;
  if (opts.output) cfg.output_dir = *opts.output;
  if (opts.cd_mode) {
    if (*opts.cd_mode == "literal")
      cfg.metrics.cd_mode = ChamferMode::Literal;
    else if (*opts.cd_mode == "bidirectional")
      cfg.metrics.cd_mode = ChamferMode::Bidirectional;
    else
      throw std::invalid_argument(
          "cd-mode must be 'literal' or 'bidirectional'");
  }
  if (opts.strict_literal) cfg.contact.literal_probability = true;
  cfg.force = opts.force;
  return cfg;
}

void add_common(CLI::App* sub, CommonOpts& opts, bool with_compute_flags) {
  sub->add_option("--config", opts.config_path, "pipeline config (JSON)")
      ->required();
  if (with_compute_flags) {
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--jobs", opts.jobs, "worker threads for refine");
    sub->add_option("--output", opts.output, "override the output directory");
    sub->add_flag("--strict-literal", opts.strict_literal,
                  "use the component-summed sigmoid argument as printed");
    sub->add_flag("--force", opts.force,
                  "accept stage inputs with mismatched config digests");
  }
}

int dispatch(const std::function<void()>& validation_phase,
             const std::function<void()>& compute_phase) {
  try {
    validation_phase();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    compute_phase();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCompute;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regrasp: retargets human-hand keypoint trajectories onto a "
               "robot hand, extracts temporally coherent contact maps, "
               "refines grasps per finger and scores the result"};
  app.require_subcommand(1);

  const LogLevel level = log_level_from_env();
  NullBuf null_buf;
  std::ostream null_stream(&null_buf);
  std::ostream& log = level == LogLevel::Quiet ? null_stream : std::cerr;

  CommonOpts opts;
  std::string retargeted_file, contact_file, refined_file;

  auto* cmd_retarget =
      app.add_subcommand("retarget", "stage 1: global-search retargeting");
  add_common(cmd_retarget, opts, true);

  auto* cmd_contact = app.add_subcommand(
      "contact", "stage 2: contact detection and temporal imputation");
  add_common(cmd_contact, opts, true);
  cmd_contact->add_option("--retargeted", retargeted_file,
                          "retargeted sequence file");

  auto* cmd_refine =
      app.add_subcommand("refine", "stage 3: per-finger grasp refinement");
  add_common(cmd_refine, opts, true);
  cmd_refine->add_option("--retargeted", retargeted_file,
                         "retargeted sequence file");
  cmd_refine->add_option("--contact", contact_file, "contact timeline file");

  auto* cmd_metrics =
      app.add_subcommand("metrics", "score retargeted vs refined sequences");
  add_common(cmd_metrics, opts, true);
  cmd_metrics->add_option("--retargeted", retargeted_file,
                          "retargeted sequence file");
  cmd_metrics->add_option("--refined", refined_file, "refined sequence file");
  cmd_metrics->add_option("--contact", contact_file, "contact timeline file");
  cmd_metrics->add_option("--cd-mode", opts.cd_mode,
                          "chamfer mode: literal | bidirectional");

  auto* cmd_run_all =
      app.add_subcommand("run-all", "run all stages and write a manifest");
  add_common(cmd_run_all, opts, true);
  cmd_run_all->add_option("--cd-mode", opts.cd_mode,
                          "chamfer mode: literal | bidirectional");

  auto* cmd_validate = app.add_subcommand(
      "validate", "check the config and referenced files without computing");
  add_common(cmd_validate, opts, false);

  CLI11_PARSE(app, argc, argv);

  PipelineConfig cfg;
  LoadedInputs inputs;
  StageResultPaths paths;

  auto prepare = [&]() {
    cfg = load_with_overrides(opts);
    std::vector<std::string> warnings;
    inputs = load_inputs(cfg, &warnings);
    for (const auto& w : warnings) log << "warning: " << w << "\n";
    paths = default_paths(cfg);
    if (!retargeted_file.empty()) paths.retargeted = retargeted_file;
    if (!contact_file.empty()) paths.contact = contact_file;
    if (!refined_file.empty()) paths.refined = refined_file;
    if (level == LogLevel::Debug)
      log << "config digest " << cfg.digest() << "\n";
  };

  if (app.got_subcommand(cmd_validate)) {
    return dispatch(
        [&]() {
          prepare();
          std::cout << "config: ok (digest " << cfg.digest() << ")\n";
          std::cout << "chain: " << inputs.chain.name() << ", "
                    << inputs.chain.dof() << " dof, "
                    << inputs.chain.keypoint_count() << " keypoints, "
                    << inputs.chain.surface_sample_count()
                    << " surface samples\n";
          std::cout << "mesh (scaled by " << cfg.scale << "):\n"
                    << inputs.mesh.stats_report();
          std::cout << "trajectory: " << inputs.frames.size() << " frames, "
                    << fmt_double(inputs.frames.back().timestamp -
                                  inputs.frames.front().timestamp)
                    << " s\n";
        },
        []() {});
  }

  if (app.got_subcommand(cmd_retarget)) {
    return dispatch([&]() { prepare(); },
                    [&]() {
                      run_retarget_stage(cfg, inputs, paths.retargeted);
                      log << "retarget: wrote " << paths.retargeted.string()
                          << "\n";
                    });
  }
  // stage inputs are parsed (and digest-checked) up front so that broken
  // files exit with the validation code
  auto check_sequence = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p))
      throw std::invalid_argument("missing stage input: " + p.string());
    const GraspSequence seq = read_sequence(p);
    require_matching_digest(seq.config_digest, cfg.digest(), p, cfg.force);
  };
  auto check_timeline = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p))
      throw std::invalid_argument("missing stage input: " + p.string());
    std::string digest;
    read_contact_timeline(p, nullptr, &digest);
    require_matching_digest(digest, cfg.digest(), p, cfg.force);
  };

  if (app.got_subcommand(cmd_contact)) {
    return dispatch(
        [&]() {
          prepare();
          check_sequence(paths.retargeted);
        },
        [&]() {
          run_contact_stage(cfg, inputs, paths.retargeted, paths.contact);
          log << "contact: wrote " << paths.contact.string() << "\n";
        });
  }
  if (app.got_subcommand(cmd_refine)) {
    return dispatch(
        [&]() {
          prepare();
          check_sequence(paths.retargeted);
          check_timeline(paths.contact);
        },
        [&]() {
          run_refine_stage(cfg, inputs, paths.retargeted, paths.contact,
                           paths.refined);
          log << "refine: wrote " << paths.refined.string() << "\n";
        });
  }
  if (app.got_subcommand(cmd_metrics)) {
    return dispatch(
        [&]() {
          prepare();
          check_sequence(paths.retargeted);
          check_sequence(paths.refined);
          check_timeline(paths.contact);
        },
        [&]() {
          const auto report = run_metrics_stage(
              cfg, inputs, paths.retargeted, paths.refined, paths.contact,
              paths.metrics_report, paths.metrics_series);
          std::cout << report.dump(2) << "\n";
        });
  }
  if (app.got_subcommand(cmd_run_all)) {
    return dispatch([&]() { prepare(); },
                    [&]() {
                      const auto res = run_all(cfg, log);
                      log << "manifest: " << res.paths.manifest.string()
                          << "\n";
                    });
  }
  return kExitOk;
}
