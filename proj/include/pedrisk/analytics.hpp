#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedrisk/features.hpp"

namespace pedrisk {

enum class SceneType { CarOnly, Interactive };
std::string_view to_string(SceneType t);

SceneType classify_scene(const SceneFeatures& features);

enum class SpeedReduction { Mean, Median };

struct SpotStats {
  std::string spot_id;
  double max_kmh = 0.0;
  double min_kmh = 0.0;
  double mean_kmh = 0.0;
  std::optional<double> car_only_mean_kmh;
  std::optional<double> interactive_mean_kmh;
  int car_only_scenes = 0;
  int interactive_scenes = 0;
  long long total_frames = 0;  // sampled vehicle-track frames; the segment log reports raw frames
  double avg_frames_per_scene = 0.0;
  double avg_seconds_per_scene = 0.0;
};

/// Scene speed is the mean (or median) of the scene's vehicle speed list.
/// Throws EmptySpot.
SpotStats spot_speed_stats(std::string spot_id, std::span<const SceneFeatures> scenes,
                           SpeedReduction reduction = SpeedReduction::Mean);

struct StoppingPercentage {
  std::string spot_id;
  int qualifying = 0;
  int stopped = 0;
  double percentage = 0.0;
};

/// Qualifying: interactive scenes with a pedestrian on the crosswalk or CIA.
/// Stopped: stop flag set and the stop happened within baseline_m of the
/// crosswalk. Throws NoQualifyingScenes.
StoppingPercentage stopping_percentage(std::string spot_id, std::span<const SceneFeatures> scenes,
                                       double baseline_m = 10.0);
bool stops_within(const SceneFeatures& scene, double baseline_m);

struct Histogram {
  std::vector<double> edges;   // bins + 1 ascending edges
  std::vector<double> masses;  // weighted mass per bin

  std::size_t bins() const { return masses.size(); }
  std::vector<double> normalized() const;
};

/// Inverse weighted CDF: the smallest sample whose cumulative weight reaches
/// q * total. Samples need not be sorted.
double weighted_quantile(std::span<const double> samples, std::span<const double> weights,
                         double q);

/// Freedman-Diaconis width from the weighted IQR, with the sample count taken
/// as the number of distinct values; edges anchored on multiples of the width.
Histogram freedman_diaconis_histogram(std::span<const double> samples,
                                      std::span<const double> weights);
Histogram histogram_with_width(std::span<const double> samples, std::span<const double> weights,
                               double width);

struct SpotSamples {
  std::string spot_id;
  std::vector<double> samples;
  // |D_i|; when absent the sample count is used.
  std::optional<std::size_t> scene_count;

  std::size_t size() const { return scene_count.value_or(samples.size()); }
};

struct PsmDistribution {
  std::string group;  // "signalized", "unsignalized" or a spot id
  std::vector<double> samples;
  std::vector<double> weights;
  std::vector<std::string> sample_spot;
  std::map<std::string, double> spot_weights;  // raw w_i
  bool degenerate = false;                     // a single spot (w = 0)
  Histogram histogram;

  double total_weight() const;
};

/// Plain pooling with unit weights.
PsmDistribution pooled_distribution(std::string group, std::span<const SpotSamples> spots);

/// w_i = 1 - |D_i| / |D| applied to every sample of spot i.
PsmDistribution weighted_merge(std::string group, std::span<const SpotSamples> spots);

struct PsmRanges {
  // Ascending: three negative-side quartiles, 0, three positive-side quartiles.
  std::array<double, 7> boundaries{};

  /// 1-based range; intervals are [lower, upper).
  int range_of(double psm_seconds) const;
  std::pair<std::optional<double>, std::optional<double>> bounds(int range) const;
};

/// Split at zero (zero counts as positive) and take weighted quartiles of each
/// side. Throws OneSidedDistribution.
PsmRanges psm_ranges(const PsmDistribution& merged);

struct RangeCell {
  int range = 0;
  std::string spot_id;
  int scenes = 0;
  int stopped = 0;
  double percentage = 0.0;
};

struct PsmRangeTable {
  PsmRanges ranges;
  std::vector<RangeCell> cells;  // sorted by (range, spot); empty cells absent

  std::optional<RangeCell> cell(int range, const std::string& spot_id) const;
};

struct SpotScenes {
  std::string spot_id;
  bool signalized = false;
  std::vector<SceneFeatures> scenes;
};

/// Unsignalized spots only (throws SignalizedSpot otherwise). Scenes without a
/// PSM are skipped.
PsmRangeTable stopping_by_psm_range(std::span<const SpotScenes> spots, const PsmRanges& ranges,
                                    double baseline_m = 10.0);

struct AnalyticsParams {
  double baseline_m = 10.0;
  SpeedReduction speed_reduction = SpeedReduction::Mean;
  bool positive_psm_only = true;  // for the per-group and per-spot distributions
  std::optional<double> histogram_bin_width;
  std::optional<PsmRanges> fixed_ranges;
};

struct AnalysisReport {
  std::vector<SpotStats> spot_stats;
  std::vector<StoppingPercentage> stopping;
  std::vector<PsmDistribution> group_distributions;  // signalized, unsignalized
  std::vector<PsmDistribution> spot_distributions;
  std::optional<PsmDistribution> merged_unsignalized;
  std::optional<PsmRangeTable> range_table;
  std::vector<std::string> notes;
};

AnalysisReport analyze(std::span<const SpotScenes> spots, const AnalyticsParams& params);

/// CSV tables and two-column plot data. Empty inputs still produce the headers.
/// Throws IoFailure.
void emit_report(const AnalysisReport& report, const std::filesystem::path& out_dir);

}  // namespace pedrisk
