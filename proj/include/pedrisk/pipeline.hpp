#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pedrisk/analytics.hpp"
#include "pedrisk/features.hpp"
#include "pedrisk/motion_gate.hpp"
#include "pedrisk/synth.hpp"
#include "pedrisk/tracker.hpp"

namespace pedrisk {

struct PipelineConfig {
  std::vector<std::filesystem::path> spot_configs;  // empty: every spots/*.json under in_dir
  std::vector<std::string> spot_filter;             // restrict to these spot ids
  TrackerParams tracker;
  std::optional<MotionParams> motion;  // default derives the hangover from frame_skip
  FeatureParams features;
  std::optional<double> cia_buffer_m;  // overrides every spot's buffer when set
  AnalyticsParams analytics;
  std::filesystem::path in_dir = ".";
  std::filesystem::path out_dir = "out";
  unsigned workers = 1;
  std::uint64_t seed = 7;
  int synth_scenes_per_spot = 40;
  double synth_noise_sigma = 1.0;
  double synth_drop_probability = 0.0;

  void validate() const;
};

/// Reads a JSON document whose keys mirror PipelineConfig.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

using StageLog = std::function<void(const std::string&)>;

// Stage outputs, all under out_dir:
//   spots/<id>.json, detections/<id>.jsonl, truth/<id>.json   (synth)
//   gated/<id>.jsonl, scenes/<id>.jsonl                         (segment)
//   trajectories/<id>.jsonl [, validation/<id>.json]            (track)
//   features/<id>.jsonl                                         (extract)
//   analysis/analysis.json                                      (analyze)
//   report/*.csv, report/*.dat                                  (report)
// Each stage reads the previous stage's files from in_dir, except synth.
void run_synth(const PipelineConfig& config, const StageLog& log = {});
void run_segment(const PipelineConfig& config, const StageLog& log = {});
void run_track(const PipelineConfig& config, const StageLog& log = {});
void run_extract(const PipelineConfig& config, const StageLog& log = {});
void run_analyze(const PipelineConfig& config, const StageLog& log = {});
void run_report(const PipelineConfig& config, const StageLog& log = {});

/// Every stage in order inside out_dir. Synthesizes the corpus first when
/// in_dir has no detections.
void run_all(const PipelineConfig& config, const StageLog& log = {});

// In-memory building blocks used by the stages.

struct SegmentResult {
  std::vector<DetectionRecord> detections;  // gated, vehicles carry track hints
  std::vector<SceneSpan> spans;
};

SegmentResult segment_spot(std::span<const DetectionRecord> detections, const SpotConfig& spot,
                           const std::optional<MotionFlags>& flags, const MotionParams& motion,
                           const TrackerParams& tracker);

struct SceneTracks {
  SceneSpan span;
  int vehicle_object_id = -1;  // -1 when the scene vehicle was lost
  std::vector<Trajectory> trajectories;
};

std::vector<SceneTracks> track_spot(std::span<const DetectionRecord> detections,
                                    std::span<const SceneSpan> spans, const SpotConfig& spot,
                                    const TrackerParams& tracker, unsigned workers = 1);

/// Scenes whose vehicle has fewer than two points are skipped.
std::vector<SceneFeatures> extract_spot(std::span<const SceneTracks> scenes,
                                        const SpotConfig& spot, const FeatureParams& params,
                                        unsigned workers = 1);

/// Scene span per detection batch, in raw frames and seconds at the spot's fps.
struct SceneCounts {
  int scenes = 0;
  int car_only = 0;
  int interactive = 0;
  long long frames = 0;
  double avg_frames = 0.0;
  double avg_seconds = 0.0;
};
SceneCounts count_scenes(std::span<const SceneSpan> spans, double fps);

// File formats.
inline constexpr std::string_view kTrajectoriesSchema = "pedrisk/trajectories";
inline constexpr int kSchemaVersion = 1;

void write_trajectories(std::ostream& out, std::string_view spot_id,
                        std::span<const SceneTracks> scenes);
std::vector<SceneTracks> read_trajectories(std::istream& in, std::span<const SceneSpan> spans);

std::string format_scene_features(const SceneFeatures& features);
SceneFeatures parse_scene_features(std::string_view line);

inline constexpr std::string_view kTruthSchema = "pedrisk/truth";
void write_truth(std::ostream& out, std::string_view spot_id, const synth::SynthOutput& output);
TruthMap read_truth_owners(std::istream& in);

void write_analysis(std::ostream& out, const AnalysisReport& report);
AnalysisReport read_analysis(std::istream& in);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace pedrisk
