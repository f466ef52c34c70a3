#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pedrisk/error.hpp"
#include "pedrisk/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> spots;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<double> baseline_m;
  std::optional<double> epsilon_kmh;
  std::optional<double> alpha;
  std::optional<std::string> out_dir;
  std::optional<std::string> in_dir;
  std::optional<int> scenes_per_spot;
  std::optional<double> noise_sigma;
  std::optional<double> drop_probability;
  std::optional<std::string> association;
  bool quiet = false;
};

void add_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd.add_option("--spot", o.spots, "restrict to these spot ids (repeatable)");
  cmd.add_option("--seed", o.seed, "random seed");
  cmd.add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd.add_option("--baseline-m", o.baseline_m, "stopping baseline distance in meters");
  cmd.add_option("--epsilon-kmh", o.epsilon_kmh, "acceleration dead-band in km/h per step");
  cmd.add_option("--alpha", o.alpha, "low-pass smoothing factor in (0, 1]");
  cmd.add_option("--out-dir", o.out_dir, "output directory");
  cmd.add_option("--in-dir", o.in_dir, "input directory (previous stage output)");
  cmd.add_option("--scenes-per-spot", o.scenes_per_spot, "synthetic scenes per spot");
  cmd.add_option("--noise-sigma", o.noise_sigma, "synthetic pixel noise sigma");
  cmd.add_option("--drop-probability", o.drop_probability, "synthetic missed-detection probability");
  cmd.add_option("--association", o.association, "kalman or last-position")
      ->check(CLI::IsMember({"kalman", "last-position"}));
  cmd.add_flag("--quiet", o.quiet, "suppress stage logs");
}

pedrisk::PipelineConfig build_config(const Overrides& o) {
  pedrisk::PipelineConfig c = o.config.empty() ? pedrisk::PipelineConfig{}
                                                : pedrisk::load_pipeline_config(o.config);
  if (!o.spots.empty()) c.spot_filter = o.spots;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.baseline_m) c.analytics.baseline_m = *o.baseline_m;
  if (o.epsilon_kmh) c.features.epsilon_kmh = *o.epsilon_kmh;
  if (o.alpha) c.features.alpha = *o.alpha;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.in_dir) c.in_dir = *o.in_dir;
  if (o.scenes_per_spot) c.synth_scenes_per_spot = *o.scenes_per_spot;
  if (o.noise_sigma) c.synth_noise_sigma = *o.noise_sigma;
  if (o.drop_probability) c.synth_drop_probability = *o.drop_probability;
  if (o.association)
    c.tracker.association = *o.association == "kalman" ? pedrisk::AssociationMode::KalmanPrediction
                                                       : pedrisk::AssociationMode::LastPosition;
  c.validate();
  return c;
}

void print_diagnostic(const std::string& stage, const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["stage"] = stage;
  j["code"] = code;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian-vehicle risk analysis pipeline over CCTV detections", "pedrisk"};
  app.require_subcommand(1);

  using Runner = void (*)(const pedrisk::PipelineConfig&, const pedrisk::StageLog&);
  const std::map<std::string, std::pair<Runner, std::string>> stages = {
      {"synth", {pedrisk::run_synth, "write a synthetic corpus (spots, detections, truth)"}},
      {"segment", {pedrisk::run_segment, "motion gating and per-vehicle scene segmentation"}},
      {"track", {pedrisk::run_track, "per-scene Kalman tracking and trajectory validation"}},
      {"extract", {pedrisk::run_extract, "scene-level behavioural features"}},
      {"analyze", {pedrisk::run_analyze, "spot statistics, PSM distributions and ranges"}},
      {"report", {pedrisk::run_report, "CSV tables and plot data"}},
      {"all", {pedrisk::run_all, "every stage in order"}},
  };
  Overrides overrides;
  std::map<std::string, CLI::App*> commands;
  for (const auto& [name, entry] : stages) {
    auto* cmd = app.add_subcommand(name, entry.second);
    add_options(*cmd, overrides);
    commands[name] = cmd;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string stage;
  for (const auto& [name, cmd] : commands)
    if (cmd->parsed()) stage = name;

  try {
    const auto config = build_config(overrides);
    pedrisk::StageLog log;
    if (!overrides.quiet) log = [](const std::string& line) { std::cerr << line << '\n'; };
    stages.at(stage).first(config, log);
  } catch (const pedrisk::Error& e) {
    print_diagnostic(stage, std::string(pedrisk::to_string(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_diagnostic(stage, "Internal", e.what());
    return 1;
  }
  return 0;
}
