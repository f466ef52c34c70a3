#include "pedrisk/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "json_util.hpp"
#include "pedrisk/error.hpp"

namespace pedrisk {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double scene_speed(const SceneFeatures& f, SpeedReduction r) {
  if (f.vehicle_speed_list.empty()) return 0.0;
  return r == SpeedReduction::Mean ? mean_of(f.vehicle_speed_list) : median_of(f.vehicle_speed_list);
}

void check_weights(std::span<const double> samples, std::span<const double> weights) {
  if (samples.size() != weights.size())
    throw Error(ErrorCode::InvalidParameter, "samples and weights differ in length");
  for (double w : weights)
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidParameter, "weights must be non-negative");
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

}  // namespace

std::string_view to_string(SceneType t) { return t == SceneType::CarOnly ? "car-only" : "interactive"; }

SceneType classify_scene(const SceneFeatures& features) {
  return features.interactive() ? SceneType::Interactive : SceneType::CarOnly;
}

SpotStats spot_speed_stats(std::string spot_id, std::span<const SceneFeatures> scenes,
                           SpeedReduction reduction) {
  if (scenes.empty()) throw Error(ErrorCode::EmptySpot, "spot '" + spot_id + "' has no scenes");
  SpotStats s;
  s.spot_id = std::move(spot_id);
  std::vector<double> all, car_only, interactive;
  double seconds = 0.0;
  for (const auto& f : scenes) {
    const double v = scene_speed(f, reduction);
    all.push_back(v);
    if (classify_scene(f) == SceneType::CarOnly) {
      car_only.push_back(v);
      ++s.car_only_scenes;
    } else {
      interactive.push_back(v);
      ++s.interactive_scenes;
    }
    s.total_frames += f.frames;
    seconds += f.duration_s;
  }
  s.max_kmh = *std::max_element(all.begin(), all.end());
  s.min_kmh = *std::min_element(all.begin(), all.end());
  s.mean_kmh = mean_of(all);
  if (!car_only.empty()) s.car_only_mean_kmh = mean_of(car_only);
  if (!interactive.empty()) s.interactive_mean_kmh = mean_of(interactive);
  s.avg_frames_per_scene = static_cast<double>(s.total_frames) / static_cast<double>(scenes.size());
  s.avg_seconds_per_scene = seconds / static_cast<double>(scenes.size());
  return s;
}

bool stops_within(const SceneFeatures& scene, double baseline_m) {
  return scene.stop && scene.stop_distance_m && *scene.stop_distance_m <= baseline_m;
}

StoppingPercentage stopping_percentage(std::string spot_id, std::span<const SceneFeatures> scenes,
                                       double baseline_m) {
  StoppingPercentage p;
  p.spot_id = std::move(spot_id);
  for (const auto& f : scenes) {
    if (!f.interactive() || !f.pedestrian_in_crossing_area) continue;
    ++p.qualifying;
    if (stops_within(f, baseline_m)) ++p.stopped;
  }
  if (p.qualifying == 0)
    throw Error(ErrorCode::NoQualifyingScenes, "spot '" + p.spot_id + "' has no qualifying scenes");
  p.percentage = 100.0 * p.stopped / p.qualifying;
  return p;
}

std::vector<double> Histogram::normalized() const {
  const double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  std::vector<double> out(masses.size(), 0.0);
  if (total > 0.0)
    std::transform(masses.begin(), masses.end(), out.begin(), [&](double m) { return m / total; });
  return out;
}

double weighted_quantile(std::span<const double> samples, std::span<const double> weights, double q) {
  check_weights(samples, weights);
  if (samples.empty()) throw Error(ErrorCode::InvalidParameter, "quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::InvalidParameter, "quantile level outside [0, 1]");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return samples[a] < samples[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidParameter, "total weight must be positive");
  const double target = q * total;
  const double slack = 1e-12 * total;
  double cum = 0.0;
  for (std::size_t idx : order) {
    if (weights[idx] == 0.0) continue;
    cum += weights[idx];
    if (cum >= target - slack) return samples[idx];
  }
  return samples[order.back()];
}

Histogram histogram_with_width(std::span<const double> samples, std::span<const double> weights,
                               double width) {
  check_weights(samples, weights);
  if (!(width > 0.0) || !std::isfinite(width))
    throw Error(ErrorCode::InvalidParameter, "histogram bin width must be positive");
  Histogram h;
  if (samples.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double first = std::floor(*lo_it / width);
  const auto bins = static_cast<std::size_t>(std::floor(*hi_it / width) - first) + 1;
  h.edges.reserve(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) h.edges.push_back((first + static_cast<double>(k)) * width);
  h.masses.assign(bins, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double k = std::floor(samples[i] / width) - first;
    const auto bin = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(bins - 1)));
    h.masses[bin] += weights[i];
  }
  return h;
}

Histogram freedman_diaconis_histogram(std::span<const double> samples,
                                      std::span<const double> weights) {
  check_weights(samples, weights);
  if (samples.empty()) return {};
  const double iqr =
      weighted_quantile(samples, weights, 0.75) - weighted_quantile(samples, weights, 0.25);
  const std::set<double> distinct(samples.begin(), samples.end());
  double width = 2.0 * iqr / std::cbrt(static_cast<double>(distinct.size()));
  if (!(width > 0.0)) {
    const double range = *distinct.rbegin() - *distinct.begin();
    width = range > 0.0 ? range / std::max<double>(1.0, std::ceil(std::log2(distinct.size()) + 1.0))
                        : 1.0;
  }
  return histogram_with_width(samples, weights, width);
}

double PsmDistribution::total_weight() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

PsmDistribution pooled_distribution(std::string group, std::span<const SpotSamples> spots) {
  PsmDistribution d;
  d.group = std::move(group);
  for (const auto& s : spots) {
    d.spot_weights[s.spot_id] = 1.0;
    for (double x : s.samples) {
      d.samples.push_back(x);
      d.weights.push_back(1.0);
      d.sample_spot.push_back(s.spot_id);
    }
  }
  return d;
}

PsmDistribution weighted_merge(std::string group, std::span<const SpotSamples> spots) {
  PsmDistribution d;
  d.group = std::move(group);
  double total = 0.0;
  for (const auto& s : spots) total += static_cast<double>(s.size());
  d.degenerate = spots.size() < 2;
  for (const auto& s : spots) {
    const double w = total > 0.0 ? (total - static_cast<double>(s.size())) / total : 0.0;
    d.spot_weights[s.spot_id] = w;
    // With a single spot every weight is zero; fall back to unit weights so
    // the distribution keeps its shape.
    const double applied = d.degenerate ? 1.0 : w;
    for (double x : s.samples) {
      d.samples.push_back(x);
      d.weights.push_back(applied);
      d.sample_spot.push_back(s.spot_id);
    }
  }
  return d;
}

int PsmRanges::range_of(double psm_seconds) const {
  int r = 1;
  for (double b : boundaries)
    if (psm_seconds >= b) ++r;
  return r;
}

std::pair<std::optional<double>, std::optional<double>> PsmRanges::bounds(int range) const {
  if (range < 1 || range > 8) throw Error(ErrorCode::InvalidParameter, "range must be in 1..8");
  std::optional<double> lo, hi;
  if (range > 1) lo = boundaries[static_cast<std::size_t>(range - 2)];
  if (range < 8) hi = boundaries[static_cast<std::size_t>(range - 1)];
  return {lo, hi};
}

PsmRanges psm_ranges(const PsmDistribution& merged) {
  std::vector<double> neg, neg_w, pos, pos_w;
  for (std::size_t i = 0; i < merged.samples.size(); ++i) {
    if (merged.weights[i] <= 0.0) continue;
    if (merged.samples[i] < 0.0) {
      neg.push_back(merged.samples[i]);
      neg_w.push_back(merged.weights[i]);
    } else {
      pos.push_back(merged.samples[i]);
      pos_w.push_back(merged.weights[i]);
    }
  }
  if (neg.empty() || pos.empty())
    throw Error(ErrorCode::OneSidedDistribution, "PSM distribution lacks one sign");
  PsmRanges r;
  const double qs[3] = {0.25, 0.5, 0.75};
  for (int k = 0; k < 3; ++k) {
    r.boundaries[static_cast<std::size_t>(k)] = weighted_quantile(neg, neg_w, qs[k]);
    r.boundaries[static_cast<std::size_t>(k + 4)] = weighted_quantile(pos, pos_w, qs[k]);
  }
  r.boundaries[3] = 0.0;
  return r;
}

std::optional<RangeCell> PsmRangeTable::cell(int range, const std::string& spot_id) const {
  for (const auto& c : cells)
    if (c.range == range && c.spot_id == spot_id) return c;
  return std::nullopt;
}

PsmRangeTable stopping_by_psm_range(std::span<const SpotScenes> spots, const PsmRanges& ranges,
                                    double baseline_m) {
  PsmRangeTable table{ranges, {}};
  std::map<std::pair<int, std::string>, RangeCell> cells;
  for (const auto& spot : spots) {
    if (spot.signalized)
      throw Error(ErrorCode::SignalizedSpot,
                  "spot '" + spot.spot_id + "' is signalized; PSM ranges cover unsignalized spots");
    for (const auto& f : spot.scenes) {
      if (!f.psm) continue;
      const int r = ranges.range_of(f.psm->seconds);
      auto& c = cells[{r, spot.spot_id}];
      c.range = r;
      c.spot_id = spot.spot_id;
      ++c.scenes;
      if (stops_within(f, baseline_m)) ++c.stopped;
    }
  }
  for (auto& [key, c] : cells) {
    c.percentage = 100.0 * c.stopped / c.scenes;
    table.cells.push_back(c);
  }
  return table;
}

AnalysisReport analyze(std::span<const SpotScenes> spots, const AnalyticsParams& params) {
  AnalysisReport report;
  std::vector<SpotScenes> sorted(spots.begin(), spots.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SpotScenes& a, const SpotScenes& b) { return a.spot_id < b.spot_id; });
  for (auto& s : sorted)
    std::sort(s.scenes.begin(), s.scenes.end(),
              [](const SceneFeatures& a, const SceneFeatures& b) { return a.scene_id < b.scene_id; });

  std::vector<SpotSamples> signalized, unsignalized, unsignalized_all;
  for (const auto& s : sorted) {
    if (s.scenes.empty()) {
      report.notes.push_back("spot " + s.spot_id + ": no scenes");
      continue;
    }
    report.spot_stats.push_back(spot_speed_stats(s.spot_id, s.scenes, params.speed_reduction));
    try {
      report.stopping.push_back(stopping_percentage(s.spot_id, s.scenes, params.baseline_m));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoQualifyingScenes) throw;
      report.notes.push_back("spot " + s.spot_id + ": no qualifying scenes for stopping percentage");
    }

    SpotSamples filtered{s.spot_id, {}, std::nullopt};
    SpotSamples all{s.spot_id, {}, std::nullopt};
    for (const auto& f : s.scenes) {
      if (!f.psm) continue;
      all.samples.push_back(f.psm->seconds);
      if (!params.positive_psm_only || f.psm->seconds >= 0.0) filtered.samples.push_back(f.psm->seconds);
    }
    PsmDistribution spot_dist = pooled_distribution(s.spot_id, std::span(&filtered, 1));
    report.spot_distributions.push_back(std::move(spot_dist));
    (s.signalized ? signalized : unsignalized).push_back(std::move(filtered));
    if (!s.signalized) unsignalized_all.push_back(std::move(all));
  }
  report.group_distributions.push_back(pooled_distribution("signalized", signalized));
  report.group_distributions.push_back(pooled_distribution("unsignalized", unsignalized));

  if (!unsignalized_all.empty()) {
    report.merged_unsignalized = weighted_merge("merged-unsignalized", unsignalized_all);
    if (report.merged_unsignalized->degenerate)
      report.notes.push_back("weighted merge over a single unsignalized spot: weight 0, unit weights used");
  }

  auto bin = [&](PsmDistribution& d) {
    d.histogram = params.histogram_bin_width
                      ? histogram_with_width(d.samples, d.weights, *params.histogram_bin_width)
                      : freedman_diaconis_histogram(d.samples, d.weights);
  };
  for (auto& d : report.group_distributions) bin(d);
  for (auto& d : report.spot_distributions) bin(d);
  if (report.merged_unsignalized) bin(*report.merged_unsignalized);

  std::optional<PsmRanges> ranges = params.fixed_ranges;
  if (!ranges && report.merged_unsignalized) {
    try {
      ranges = psm_ranges(*report.merged_unsignalized);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OneSidedDistribution) throw;
      report.notes.push_back("merged unsignalized PSM distribution is one-sided; no range table");
    }
  }
  if (ranges) {
    std::vector<SpotScenes> unsig;
    for (const auto& s : sorted)
      if (!s.signalized) unsig.push_back(s);
    report.range_table = stopping_by_psm_range(unsig, *ranges, params.baseline_m);
  }
  return report;
}

namespace {

void write_histogram(const std::filesystem::path& path, const Histogram& h) {
  auto out = detail::open_output(path);
  out << "# bin_center normalized_mass\n";
  const auto norm = h.normalized();
  for (std::size_t b = 0; b < h.bins(); ++b)
    out << num(0.5 * (h.edges[b] + h.edges[b + 1])) << ' ' << num(norm[b]) << '\n';
}

}  // namespace

void emit_report(const AnalysisReport& report, const std::filesystem::path& out_dir) {
  {
    auto out = detail::open_output(out_dir / "spot_speed_stats.csv");
    out << "spot,max,min,mean,car_only_mean,interactive_mean\n";
    for (const auto& s : report.spot_stats)
      out << s.spot_id << ',' << num(s.max_kmh) << ',' << num(s.min_kmh) << ',' << num(s.mean_kmh)
          << ',' << opt_num(s.car_only_mean_kmh) << ',' << opt_num(s.interactive_mean_kmh) << '\n';
  }
  {
    auto out = detail::open_output(out_dir / "scene_counts.csv");
    out << "spot,car_only,interactive,sampled_frames,avg_sampled_frames_per_scene,avg_track_seconds_per_scene\n";
    for (const auto& s : report.spot_stats)
      out << s.spot_id << ',' << s.car_only_scenes << ',' << s.interactive_scenes << ','
          << s.total_frames << ',' << num(s.avg_frames_per_scene) << ','
          << num(s.avg_seconds_per_scene) << '\n';
  }
  {
    auto out = detail::open_output(out_dir / "stopping_percentage.csv");
    out << "spot,qualifying,stopped,percentage\n";
    for (const auto& p : report.stopping)
      out << p.spot_id << ',' << p.qualifying << ',' << p.stopped << ',' << num(p.percentage) << '\n';
  }
  for (const auto& d : report.group_distributions)
    write_histogram(out_dir / ("psm_hist_" + file_safe(d.group) + ".dat"), d.histogram);
  for (const auto& d : report.spot_distributions)
    write_histogram(out_dir / ("psm_hist_spot_" + file_safe(d.group) + ".dat"), d.histogram);
  write_histogram(out_dir / "psm_hist_merged_unsignalized.dat",
                  report.merged_unsignalized ? report.merged_unsignalized->histogram : Histogram{});
  {
    auto out = detail::open_output(out_dir / "psm_merged_weights.csv");
    out << "spot,samples,weight\n";
    if (report.merged_unsignalized) {
      std::map<std::string, int> counts;
      for (const auto& s : report.merged_unsignalized->sample_spot) ++counts[s];
      for (const auto& [spot, w] : report.merged_unsignalized->spot_weights)
        out << spot << ',' << counts[spot] << ',' << num(w) << '\n';
    }
  }
  {
    auto out = detail::open_output(out_dir / "psm_ranges.csv");
    out << "range,lower,upper\n";
    if (report.range_table) {
      for (int r = 1; r <= 8; ++r) {
        const auto [lo, hi] = report.range_table->ranges.bounds(r);
        out << r << ',' << opt_num(lo) << ',' << opt_num(hi) << '\n';
      }
    }
  }
  {
    auto out = detail::open_output(out_dir / "stopping_by_psm_range.csv");
    out << "range,spot,scenes,stopped,percentage\n";
    if (report.range_table)
      for (const auto& c : report.range_table->cells)
        out << c.range << ',' << c.spot_id << ',' << c.scenes << ',' << c.stopped << ','
            << num(c.percentage) << '\n';
  }
}

}  // namespace pedrisk
