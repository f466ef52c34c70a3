#include "pedrisk/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "pedrisk/error.hpp"

namespace pedrisk {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Parallel execution

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(workers, 1u), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          // Report the failure a serial run would have hit first.
          if (i < failed_at) {
            failed_at = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// In-memory stages

namespace {

struct DetectionKey {
  std::int64_t frame;
  std::string id;
  auto operator<=>(const DetectionKey&) const = default;
};

TrackerParams tracker_for(const TrackerParams& base, const SpotConfig& spot) {
  TrackerParams p = base;
  p.frame_skip = spot.frame_skip;
  return p;
}

}  // namespace

SegmentResult segment_spot(std::span<const DetectionRecord> detections, const SpotConfig& spot,
                           const std::optional<MotionFlags>& flags, const MotionParams& motion,
                           const TrackerParams& tracker) {
  SegmentResult out;
  out.detections = flags ? apply_motion_gate(detections, *flags)
                         : std::vector<DetectionRecord>(detections.begin(), detections.end());

  const bool hinted = std::all_of(out.detections.begin(), out.detections.end(), [](const auto& d) {
    return d.object_class != ObjectClass::Vehicle || !d.track_hint.empty();
  });
  if (!hinted) {
    // Spot-wide vehicle tracking supplies the per-vehicle identity that scene
    // segmentation needs.
    std::vector<DetectionRecord> vehicles;
    for (const auto& d : out.detections)
      if (d.object_class == ObjectClass::Vehicle) vehicles.push_back(d);
    const auto trajectories = track_scene(vehicles, tracker_for(tracker, spot), calibrate(spot));
    std::map<DetectionKey, std::string> hint;
    for (const auto& t : trajectories)
      for (const auto& p : t.points) hint[{p.frame, p.detection_id}] = "v" + std::to_string(t.object_id);
    for (auto& d : out.detections)
      if (d.object_class == ObjectClass::Vehicle) d.track_hint = hint.at({d.frame_index, d.detection_id});
  }
  out.spans = segment_scenes(out.detections, std::nullopt, motion);
  return out;
}

std::vector<SceneTracks> track_spot(std::span<const DetectionRecord> detections,
                                    std::span<const SceneSpan> spans, const SpotConfig& spot,
                                    const TrackerParams& tracker, unsigned workers) {
  const TrackerParams params = tracker_for(tracker, spot);
  params.validate();
  const Calibration calib = calibrate(spot);
  std::vector<SceneTracks> out(spans.size());
  parallel_for(spans.size(), workers, [&](std::size_t s) {
    const SceneSpan& span = spans[s];
    auto lo = std::lower_bound(detections.begin(), detections.end(), span.frame_start,
                               [](const DetectionRecord& d, std::int64_t f) { return d.frame_index < f; });
    std::vector<DetectionRecord> subset;
    for (auto it = lo; it != detections.end() && it->frame_index <= span.frame_end; ++it) {
      if (it->object_class == ObjectClass::Pedestrian || it->track_hint == span.vehicle_track_hint)
        subset.push_back(*it);
    }
    SceneTracks st;
    st.span = span;
    st.trajectories = track_scene(subset, params, calib);
    std::size_t best = 0;
    for (const auto& t : st.trajectories) {
      if (t.object_class != ObjectClass::Vehicle) continue;
      if (t.points.size() > best) {
        best = t.points.size();
        st.vehicle_object_id = t.object_id;
      }
    }
    out[s] = std::move(st);
  });
  return out;
}

std::vector<SceneFeatures> extract_spot(std::span<const SceneTracks> scenes,
                                        const SpotConfig& spot, const FeatureParams& params,
                                        unsigned workers) {
  params.validate();
  const Calibration calib = calibrate(spot);
  std::vector<std::optional<SceneFeatures>> slots(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t s) {
    const auto& scene = scenes[s];
    const Trajectory* vehicle = nullptr;
    std::vector<Trajectory> pedestrians;
    for (const auto& t : scene.trajectories) {
      if (t.object_id == scene.vehicle_object_id && t.object_class == ObjectClass::Vehicle) vehicle = &t;
      else if (t.object_class == ObjectClass::Pedestrian) pedestrians.push_back(t);
    }
    if (!vehicle || vehicle->points.size() < 2) return;
    slots[s] = extract_scene_features(scene.span.scene_id, *vehicle, pedestrians, spot, calib, params);
  });
  std::vector<SceneFeatures> out;
  for (auto& f : slots)
    if (f) out.push_back(std::move(*f));
  return out;
}

SceneCounts count_scenes(std::span<const SceneSpan> spans, double fps) {
  SceneCounts c;
  for (const auto& s : spans) {
    ++c.scenes;
    (s.interactive ? c.interactive : c.car_only) += 1;
    c.frames += s.frame_end - s.frame_start + 1;
  }
  if (c.scenes > 0) {
    c.avg_frames = static_cast<double>(c.frames) / c.scenes;
    c.avg_seconds = fps > 0.0 ? c.avg_frames / fps : 0.0;
  }
  return c;
}

// ---------------------------------------------------------------------------
// File formats

namespace {

ordered_json schema_header(std::string_view schema, std::string_view spot_id) {
  ordered_json h;
  h["schema"] = schema;
  h["version"] = kSchemaVersion;
  if (!spot_id.empty()) h["spot"] = spot_id;
  return h;
}

// Returns false on EOF. Validates and skips a schema header on the first line.
class JsonLines {
 public:
  JsonLines(std::istream& in, std::string_view schema) : in_(in), schema_(schema) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (line_no_ == 1 || !seen_header_) {
        seen_header_ = true;
        auto j = json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("schema")) {
          if (j["schema"] != schema_ || j.value("version", 0) != kSchemaVersion)
            throw Error(ErrorCode::SchemaMismatch, "expected " + std::string(schema_) + " v" +
                                                       std::to_string(kSchemaVersion));
          continue;
        }
      }
      return true;
    }
    return false;
  }
  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::string_view schema_;
  std::size_t line_no_ = 0;
  bool seen_header_ = false;
};

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

template <typename E>
std::vector<std::string> names(const std::vector<E>& values) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (auto v : values) out.emplace_back(to_string(v));
  return out;
}

template <typename E, typename Parse>
std::vector<E> parse_names(const json& j, Parse parse) {
  std::vector<E> out;
  for (const auto& s : j) out.push_back(parse(s.template get<std::string>()));
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> json_optional(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

void write_trajectories(std::ostream& out, std::string_view spot_id,
                        std::span<const SceneTracks> scenes) {
  out << schema_header(kTrajectoriesSchema, spot_id).dump() << '\n';
  for (const auto& s : scenes) {
    ordered_json line;
    line["scene"] = s.span.scene_id;
    line["vehicle"] = s.vehicle_object_id;
    ordered_json trajs = ordered_json::array();
    for (const auto& t : s.trajectories) {
      ordered_json tj;
      tj["id"] = t.object_id;
      tj["class"] = to_string(t.object_class);
      ordered_json pts = ordered_json::array();
      for (const auto& p : t.points)
        pts.push_back({p.frame, p.detection_id, p.raw_px.x, p.raw_px.y, p.smoothed_px.x,
                       p.smoothed_px.y, p.world.x, p.world.y, p.world_smoothed.x,
                       p.world_smoothed.y, p.world.t});
      tj["points"] = std::move(pts);
      trajs.push_back(std::move(tj));
    }
    line["trajectories"] = std::move(trajs);
    out << line.dump() << '\n';
  }
}

std::vector<SceneTracks> read_trajectories(std::istream& in, std::span<const SceneSpan> spans) {
  std::map<std::string, const SceneSpan*> by_id;
  for (const auto& s : spans) by_id[s.scene_id] = &s;
  std::vector<SceneTracks> out;
  JsonLines lines(in, kTrajectoriesSchema);
  std::string line;
  while (lines.next(line)) {
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorCode::MalformedRecord, "trajectories line " + std::to_string(lines.line_no()));
    try {
      SceneTracks st;
      const auto id = j.at("scene").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorCode::SchemaMismatch, "scene '" + id + "' has no span");
      st.span = *it->second;
      st.vehicle_object_id = j.at("vehicle").get<int>();
      for (const auto& tj : j.at("trajectories")) {
        Trajectory t;
        t.object_id = tj.at("id").get<int>();
        t.object_class = parse_object_class(tj.at("class").get<std::string>());
        for (const auto& p : tj.at("points")) {
          TrajectoryPoint tp;
          tp.frame = p.at(0).get<std::int64_t>();
          tp.detection_id = p.at(1).get<std::string>();
          tp.raw_px = {p.at(2).get<double>(), p.at(3).get<double>()};
          tp.smoothed_px = {p.at(4).get<double>(), p.at(5).get<double>()};
          const double time = p.at(10).get<double>();
          tp.world = {p.at(6).get<double>(), p.at(7).get<double>(), time};
          tp.world_smoothed = {p.at(8).get<double>(), p.at(9).get<double>(), time};
          t.points.push_back(std::move(tp));
        }
        st.trajectories.push_back(std::move(t));
      }
      out.push_back(std::move(st));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  "trajectories line " + std::to_string(lines.line_no()) + ": " + e.what());
    }
  }
  return out;
}

std::string format_scene_features(const SceneFeatures& f) {
  ordered_json j;
  j["scene"] = f.scene_id;
  j["spot"] = f.spot_id;
  j["frame_start"] = f.frame_start;
  j["frame_end"] = f.frame_end;
  j["frames"] = f.frames;
  j["duration_s"] = f.duration_s;
  j["scene_type"] = to_string(classify_scene(f));

  ordered_json v;
  v["speed_list"] = f.vehicle_speed_list;
  v["filtered_speed_list"] = f.vehicle_filtered_speed_list;
  v["position_list"] = names(f.vehicle_position_list);
  v["acceleration_list"] = names(f.vehicle_acceleration_list);
  v["acceleration_runs"] = names(f.acceleration_runs());
  v["crosswalk_distance_list"] = f.crosswalk_distance_list;
  v["stop"] = f.stop ? "stop" : "no stop";
  v["stop_distance_m"] = optional_json(f.stop_distance_m);
  v["mean_speed_kmh"] = f.mean_speed_kmh;
  v["median_speed_kmh"] = f.median_speed_kmh;
  j["vehicle"] = std::move(v);

  ordered_json peds = ordered_json::array();
  for (const auto& p : f.pedestrians) {
    ordered_json pj;
    pj["id"] = p.object_id;
    pj["speed_list"] = p.speed_list;
    pj["position_list"] = names(p.position_list);
    peds.push_back(std::move(pj));
  }
  j["pedestrians"] = std::move(peds);
  j["pedestrian_in_crossing_area"] = f.pedestrian_in_crossing_area;

  ordered_json inter;
  inter["frames"] = f.interaction_frames;
  inter["nearest_pedestrian"] = f.nearest_pedestrian;
  inter["distance_list"] = f.distance_list;
  inter["relative_position_list"] = names(f.relative_position_list);
  j["interaction"] = std::move(inter);

  if (f.psm) {
    ordered_json pj;
    pj["seconds"] = f.psm->seconds;
    pj["step_seconds"] = f.psm->step_seconds;
    pj["conflict_point"] = vec_json(f.psm->conflict_point);
    pj["pedestrian_step"] = f.psm->pedestrian_step;
    pj["vehicle_step"] = f.psm->vehicle_step;
    pj["pedestrian"] = optional_json(f.psm_pedestrian ? std::optional<double>(*f.psm_pedestrian)
                                                       : std::nullopt);
    j["psm"] = std::move(pj);
  } else {
    j["psm"] = nullptr;
  }
  return j.dump();
}

SceneFeatures parse_scene_features(std::string_view line) {
  auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::MalformedRecord, "feature line is not a JSON object");
  try {
    SceneFeatures f;
    f.scene_id = j.at("scene").get<std::string>();
    f.spot_id = j.at("spot").get<std::string>();
    f.frame_start = j.at("frame_start").get<std::int64_t>();
    f.frame_end = j.at("frame_end").get<std::int64_t>();
    f.frames = j.at("frames").get<int>();
    f.duration_s = j.at("duration_s").get<double>();
    const auto& v = j.at("vehicle");
    f.vehicle_speed_list = v.at("speed_list").get<std::vector<double>>();
    f.vehicle_filtered_speed_list = v.at("filtered_speed_list").get<std::vector<double>>();
    f.vehicle_position_list = parse_names<VehicleZone>(v.at("position_list"), parse_vehicle_zone);
    f.vehicle_acceleration_list = parse_names<AccelState>(v.at("acceleration_list"), parse_accel_state);
    f.crosswalk_distance_list = v.at("crosswalk_distance_list").get<std::vector<double>>();
    const auto stop = v.at("stop").get<std::string>();
    if (stop != "stop" && stop != "no stop")
      throw Error(ErrorCode::MalformedRecord, "stop must be 'stop' or 'no stop'");
    f.stop = stop == "stop";
    f.stop_distance_m = json_optional(v, "stop_distance_m");
    f.mean_speed_kmh = v.at("mean_speed_kmh").get<double>();
    f.median_speed_kmh = v.at("median_speed_kmh").get<double>();
    for (const auto& pj : j.at("pedestrians")) {
      PedestrianFeatures p;
      p.object_id = pj.at("id").get<int>();
      p.speed_list = pj.at("speed_list").get<std::vector<double>>();
      p.position_list = parse_names<PedestrianZone>(pj.at("position_list"), parse_pedestrian_zone);
      f.pedestrians.push_back(std::move(p));
    }
    f.pedestrian_in_crossing_area = j.at("pedestrian_in_crossing_area").get<bool>();
    const auto& inter = j.at("interaction");
    f.interaction_frames = inter.at("frames").get<std::vector<std::int64_t>>();
    f.nearest_pedestrian = inter.at("nearest_pedestrian").get<std::vector<int>>();
    f.distance_list = inter.at("distance_list").get<std::vector<double>>();
    f.relative_position_list =
        parse_names<RelativePosition>(inter.at("relative_position_list"), parse_relative_position);
    if (const auto& pj = j.at("psm"); !pj.is_null()) {
      PsmValue p;
      p.seconds = pj.at("seconds").get<double>();
      p.step_seconds = pj.at("step_seconds").get<double>();
      p.conflict_point = json_vec(pj.at("conflict_point"));
      p.pedestrian_step = pj.at("pedestrian_step").get<std::size_t>();
      p.vehicle_step = pj.at("vehicle_step").get<std::size_t>();
      f.psm = p;
      if (!pj.at("pedestrian").is_null()) f.psm_pedestrian = pj.at("pedestrian").get<int>();
    }
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("feature line: ") + e.what());
  }
}

void write_truth(std::ostream& out, std::string_view spot_id, const synth::SynthOutput& output) {
  ordered_json j = schema_header(kTruthSchema, spot_id);
  ordered_json owners = ordered_json::array();
  for (const auto& [key, agent] : output.owners) owners.push_back({key.first, key.second, agent});
  j["owners"] = std::move(owners);
  ordered_json spans = ordered_json::array();
  for (const auto& s : output.truth.spans)
    spans.push_back({{"vehicle", s.vehicle_track_hint}, {"start", s.frame_start}, {"end", s.frame_end},
                     {"interactive", s.interactive}});
  j["spans"] = std::move(spans);
  ordered_json psm = ordered_json::array();
  for (const auto& p : output.truth.psm)
    psm.push_back({{"vehicle", p.vehicle_id}, {"pedestrian", p.pedestrian_id}, {"seconds", p.seconds},
                   {"conflict_point", vec_json(p.conflict_point)}});
  j["psm"] = std::move(psm);
  ordered_json stops = ordered_json::array();
  for (const auto& s : output.truth.stops)
    stops.push_back({{"vehicle", s.vehicle_id}, {"stop", s.stop}, {"distance_m", optional_json(s.distance_m)}});
  j["stops"] = std::move(stops);
  out << j.dump() << '\n';
}

TruthMap read_truth_owners(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedRecord, "truth file is not JSON");
  if (j.value("schema", std::string()) != kTruthSchema || j.value("version", 0) != kSchemaVersion)
    throw Error(ErrorCode::SchemaMismatch, "expected " + std::string(kTruthSchema));
  TruthMap out;
  try {
    for (const auto& o : j.at("owners"))
      out[{o.at(0).get<std::int64_t>(), o.at(1).get<std::string>()}] = o.at(2).get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("truth owners: ") + e.what());
  }
  return out;
}

namespace {

ordered_json histogram_json(const Histogram& h) {
  ordered_json j;
  j["edges"] = h.edges;
  j["masses"] = h.masses;
  return j;
}

Histogram json_histogram(const json& j) {
  return {j.at("edges").get<std::vector<double>>(), j.at("masses").get<std::vector<double>>()};
}

ordered_json distribution_json(const PsmDistribution& d) {
  ordered_json j;
  j["group"] = d.group;
  j["samples"] = d.samples;
  j["weights"] = d.weights;
  j["sample_spot"] = d.sample_spot;
  ordered_json w = ordered_json::object();
  for (const auto& [spot, weight] : d.spot_weights) w[spot] = weight;
  j["spot_weights"] = std::move(w);
  j["degenerate"] = d.degenerate;
  j["histogram"] = histogram_json(d.histogram);
  return j;
}

PsmDistribution json_distribution(const json& j) {
  PsmDistribution d;
  d.group = j.at("group").get<std::string>();
  d.samples = j.at("samples").get<std::vector<double>>();
  d.weights = j.at("weights").get<std::vector<double>>();
  d.sample_spot = j.at("sample_spot").get<std::vector<std::string>>();
  for (const auto& [spot, w] : j.at("spot_weights").items()) d.spot_weights[spot] = w.get<double>();
  d.degenerate = j.at("degenerate").get<bool>();
  d.histogram = json_histogram(j.at("histogram"));
  return d;
}

}  // namespace

void write_analysis(std::ostream& out, const AnalysisReport& r) {
  ordered_json j = schema_header("pedrisk/analysis", "");
  ordered_json stats = ordered_json::array();
  for (const auto& s : r.spot_stats) {
    ordered_json sj;
    sj["spot"] = s.spot_id;
    sj["max_kmh"] = s.max_kmh;
    sj["min_kmh"] = s.min_kmh;
    sj["mean_kmh"] = s.mean_kmh;
    sj["car_only_mean_kmh"] = optional_json(s.car_only_mean_kmh);
    sj["interactive_mean_kmh"] = optional_json(s.interactive_mean_kmh);
    sj["car_only_scenes"] = s.car_only_scenes;
    sj["interactive_scenes"] = s.interactive_scenes;
    sj["total_frames"] = s.total_frames;
    sj["avg_frames_per_scene"] = s.avg_frames_per_scene;
    sj["avg_seconds_per_scene"] = s.avg_seconds_per_scene;
    stats.push_back(std::move(sj));
  }
  j["spot_stats"] = std::move(stats);
  ordered_json stopping = ordered_json::array();
  for (const auto& p : r.stopping)
    stopping.push_back({{"spot", p.spot_id}, {"qualifying", p.qualifying}, {"stopped", p.stopped},
                        {"percentage", p.percentage}});
  j["stopping"] = std::move(stopping);
  ordered_json groups = ordered_json::array();
  for (const auto& d : r.group_distributions) groups.push_back(distribution_json(d));
  j["group_distributions"] = std::move(groups);
  ordered_json spots = ordered_json::array();
  for (const auto& d : r.spot_distributions) spots.push_back(distribution_json(d));
  j["spot_distributions"] = std::move(spots);
  j["merged_unsignalized"] =
      r.merged_unsignalized ? distribution_json(*r.merged_unsignalized) : ordered_json(nullptr);
  if (r.range_table) {
    ordered_json t;
    t["boundaries"] = r.range_table->ranges.boundaries;
    ordered_json cells = ordered_json::array();
    for (const auto& c : r.range_table->cells)
      cells.push_back({{"range", c.range}, {"spot", c.spot_id}, {"scenes", c.scenes},
                       {"stopped", c.stopped}, {"percentage", c.percentage}});
    t["cells"] = std::move(cells);
    j["range_table"] = std::move(t);
  } else {
    j["range_table"] = nullptr;
  }
  j["notes"] = r.notes;
  out << j.dump(1) << '\n';
}

AnalysisReport read_analysis(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  auto j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedRecord, "analysis is not JSON");
  if (j.value("schema", std::string()) != "pedrisk/analysis" || j.value("version", 0) != kSchemaVersion)
    throw Error(ErrorCode::SchemaMismatch, "expected pedrisk/analysis");
  AnalysisReport r;
  try {
    for (const auto& sj : j.at("spot_stats")) {
      SpotStats s;
      s.spot_id = sj.at("spot").get<std::string>();
      s.max_kmh = sj.at("max_kmh").get<double>();
      s.min_kmh = sj.at("min_kmh").get<double>();
      s.mean_kmh = sj.at("mean_kmh").get<double>();
      s.car_only_mean_kmh = json_optional(sj, "car_only_mean_kmh");
      s.interactive_mean_kmh = json_optional(sj, "interactive_mean_kmh");
      s.car_only_scenes = sj.at("car_only_scenes").get<int>();
      s.interactive_scenes = sj.at("interactive_scenes").get<int>();
      s.total_frames = sj.at("total_frames").get<long long>();
      s.avg_frames_per_scene = sj.at("avg_frames_per_scene").get<double>();
      s.avg_seconds_per_scene = sj.at("avg_seconds_per_scene").get<double>();
      r.spot_stats.push_back(std::move(s));
    }
    for (const auto& pj : j.at("stopping"))
      r.stopping.push_back({pj.at("spot").get<std::string>(), pj.at("qualifying").get<int>(),
                            pj.at("stopped").get<int>(), pj.at("percentage").get<double>()});
    for (const auto& d : j.at("group_distributions")) r.group_distributions.push_back(json_distribution(d));
    for (const auto& d : j.at("spot_distributions")) r.spot_distributions.push_back(json_distribution(d));
    if (!j.at("merged_unsignalized").is_null())
      r.merged_unsignalized = json_distribution(j.at("merged_unsignalized"));
    if (const auto& t = j.at("range_table"); !t.is_null()) {
      PsmRangeTable table;
      table.ranges.boundaries = t.at("boundaries").get<std::array<double, 7>>();
      for (const auto& c : t.at("cells"))
        table.cells.push_back({c.at("range").get<int>(), c.at("spot").get<std::string>(),
                               c.at("scenes").get<int>(), c.at("stopped").get<int>(),
                               c.at("percentage").get<double>()});
      r.range_table = std::move(table);
    }
    r.notes = j.at("notes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("analysis: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  if (workers < 1) throw Error(ErrorCode::InvalidParameter, "workers must be >= 1");
  TrackerParams t = tracker;
  t.frame_skip = std::max(t.frame_skip, 1);
  t.validate();
  if (motion) motion->validate();
  features.validate();
  if (cia_buffer_m && !(*cia_buffer_m >= 0.0))
    throw Error(ErrorCode::InvalidParameter, "cia_buffer_m must be non-negative");
  if (!(analytics.baseline_m > 0.0)) throw Error(ErrorCode::InvalidParameter, "baseline_m must be positive");
  if (analytics.histogram_bin_width && !(*analytics.histogram_bin_width > 0.0))
    throw Error(ErrorCode::InvalidParameter, "histogram_bin_width must be positive");
  if (analytics.fixed_ranges) {
    const auto& b = analytics.fixed_ranges->boundaries;
    if (!std::is_sorted(b.begin(), b.end()))
      throw Error(ErrorCode::InvalidParameter, "PSM range boundaries must ascend");
  }
  if (synth_scenes_per_spot < 1) throw Error(ErrorCode::InvalidParameter, "synth scenes_per_spot must be >= 1");
  if (!(synth_noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidParameter, "synth noise_sigma must be >= 0");
  if (!(synth_drop_probability >= 0.0 && synth_drop_probability < 1.0))
    throw Error(ErrorCode::InvalidParameter, "synth drop_probability must be in [0, 1)");
  std::set<fs::path> seen;
  for (const auto& p : spot_configs) {
    if (!seen.insert(p.lexically_normal()).second)
      throw Error(ErrorCode::InvalidParameter, "spot config listed twice: " + p.string());
  }
  if (seen.count(out_dir.lexically_normal()))
    throw Error(ErrorCode::InvalidParameter, "out_dir collides with a spot config path");
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::InvalidParameter, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
  const auto text = detail::read_file(path);
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::MalformedRecord, path.string() + " is not a JSON object");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  PipelineConfig c;
  try {
    check_keys(j, {"spot_configs", "spots", "tracker", "motion", "features", "cia_buffer_m", "analytics",
                   "in_dir", "out_dir", "workers", "seed", "synth"},
               "pipeline config");
    if (j.contains("spot_configs"))
      for (const auto& p : j["spot_configs"]) c.spot_configs.push_back(resolve(p.get<std::string>()));
    if (j.contains("spots")) c.spot_filter = j["spots"].get<std::vector<std::string>>();
    if (j.contains("tracker")) {
      const auto& t = j["tracker"];
      check_keys(t, {"gate_vehicle_px", "gate_pedestrian_px", "process_noise", "measurement_noise",
                     "max_coast_steps", "association", "matching"},
                 "tracker");
      c.tracker.gate_threshold_vehicle = t.value("gate_vehicle_px", c.tracker.gate_threshold_vehicle);
      c.tracker.gate_threshold_pedestrian = t.value("gate_pedestrian_px", c.tracker.gate_threshold_pedestrian);
      c.tracker.process_noise = t.value("process_noise", c.tracker.process_noise);
      c.tracker.measurement_noise = t.value("measurement_noise", c.tracker.measurement_noise);
      c.tracker.max_coast_frames = t.value("max_coast_steps", c.tracker.max_coast_frames);
      const auto assoc = t.value("association", std::string("kalman"));
      if (assoc == "kalman") c.tracker.association = AssociationMode::KalmanPrediction;
      else if (assoc == "last-position") c.tracker.association = AssociationMode::LastPosition;
      else throw Error(ErrorCode::InvalidParameter, "association must be 'kalman' or 'last-position'");
      const auto matching = t.value("matching", std::string("greedy"));
      if (matching == "greedy") c.tracker.matching = MatchingMode::Greedy;
      else if (matching == "optimal") c.tracker.matching = MatchingMode::Optimal;
      else throw Error(ErrorCode::InvalidParameter, "matching must be 'greedy' or 'optimal'");
    }
    if (j.contains("motion")) {
      const auto& m = j["motion"];
      check_keys(m, {"pixel_threshold", "active_fraction", "hangover_frames"}, "motion");
      MotionParams p;
      p.pixel_threshold = m.value("pixel_threshold", p.pixel_threshold);
      p.active_fraction = m.value("active_fraction", p.active_fraction);
      p.hangover_frames = m.value("hangover_frames", p.hangover_frames);
      c.motion = p;
    }
    if (j.contains("features")) {
      const auto& f = j["features"];
      check_keys(f, {"epsilon_kmh", "alpha", "stop_tolerance_kmh", "stop_min_steps",
                     "acceleration_full_scene", "distance_mode"},
                 "features");
      c.features.epsilon_kmh = f.value("epsilon_kmh", c.features.epsilon_kmh);
      c.features.alpha = f.value("alpha", c.features.alpha);
      c.features.stop_tolerance_kmh = f.value("stop_tolerance_kmh", c.features.stop_tolerance_kmh);
      c.features.stop_min_steps = f.value("stop_min_steps", c.features.stop_min_steps);
      c.features.acceleration_full_scene = f.value("acceleration_full_scene", false);
      const auto mode = f.value("distance_mode", std::string("homography"));
      if (mode == "homography") c.features.distance_mode = DistanceMode::Homography;
      else if (mode == "pixel-scale") c.features.distance_mode = DistanceMode::PixelScale;
      else throw Error(ErrorCode::InvalidParameter, "distance_mode must be 'homography' or 'pixel-scale'");
    }
    if (j.contains("cia_buffer_m")) c.cia_buffer_m = j["cia_buffer_m"].get<double>();
    if (j.contains("analytics")) {
      const auto& a = j["analytics"];
      check_keys(a, {"baseline_m", "speed_reduction", "positive_psm_only", "histogram_bin_width",
                     "psm_ranges"},
                 "analytics");
      c.analytics.baseline_m = a.value("baseline_m", c.analytics.baseline_m);
      const auto red = a.value("speed_reduction", std::string("mean"));
      if (red == "mean") c.analytics.speed_reduction = SpeedReduction::Mean;
      else if (red == "median") c.analytics.speed_reduction = SpeedReduction::Median;
      else throw Error(ErrorCode::InvalidParameter, "speed_reduction must be 'mean' or 'median'");
      c.analytics.positive_psm_only = a.value("positive_psm_only", true);
      if (a.contains("histogram_bin_width")) c.analytics.histogram_bin_width = a["histogram_bin_width"].get<double>();
      if (a.contains("psm_ranges")) {
        PsmRanges r;
        r.boundaries = a["psm_ranges"].get<std::array<double, 7>>();
        c.analytics.fixed_ranges = r;
      }
    }
    if (j.contains("in_dir")) c.in_dir = resolve(j["in_dir"].get<std::string>());
    if (j.contains("out_dir")) c.out_dir = resolve(j["out_dir"].get<std::string>());
    c.workers = j.value("workers", c.workers);
    c.seed = j.value("seed", c.seed);
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      check_keys(s, {"scenes_per_spot", "noise_sigma", "drop_probability"}, "synth");
      c.synth_scenes_per_spot = s.value("scenes_per_spot", c.synth_scenes_per_spot);
      c.synth_noise_sigma = s.value("noise_sigma", c.synth_noise_sigma);
      c.synth_drop_probability = s.value("drop_probability", c.synth_drop_probability);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void emit(const StageLog& log, const std::string& message) {
  if (log) log(message);
}

struct Spot {
  SpotConfig config;
  fs::path source;
};

std::vector<Spot> resolve_spots(const PipelineConfig& c) {
  std::vector<fs::path> paths = c.spot_configs;
  if (paths.empty()) {
    const fs::path dir = c.in_dir / "spots";
    if (!fs::is_directory(dir))
      throw Error(ErrorCode::IoFailure, "no spot configs given and " + dir.string() + " does not exist");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") paths.push_back(e.path());
  }
  std::vector<Spot> spots;
  for (const auto& p : paths) {
    SpotConfig s = load_spot_config(p);
    if (!c.spot_filter.empty() &&
        std::find(c.spot_filter.begin(), c.spot_filter.end(), s.spot_id) == c.spot_filter.end())
      continue;
    if (c.cia_buffer_m) s.cia_buffer_m = *c.cia_buffer_m;
    spots.push_back({std::move(s), p});
  }
  std::sort(spots.begin(), spots.end(),
            [](const Spot& a, const Spot& b) { return a.config.spot_id < b.config.spot_id; });
  for (std::size_t i = 1; i < spots.size(); ++i)
    if (spots[i].config.spot_id == spots[i - 1].config.spot_id)
      throw Error(ErrorCode::InvalidParameter, "duplicate spot id '" + spots[i].config.spot_id + "'");
  if (spots.empty()) throw Error(ErrorCode::EmptySpot, "no spots selected");
  return spots;
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  return in;
}

std::vector<SceneSpan> read_spans(const fs::path& p) {
  auto in = open_input(p);
  JsonLines lines(in, kScenesSchema);
  std::vector<SceneSpan> spans;
  std::string line;
  while (lines.next(line)) spans.push_back(parse_scene_span(line));
  return spans;
}

std::vector<SceneFeatures> read_features(const fs::path& p) {
  auto in = open_input(p);
  JsonLines lines(in, kFeaturesSchema);
  std::vector<SceneFeatures> out;
  std::string line;
  while (lines.next(line)) out.push_back(parse_scene_features(line));
  return out;
}

std::optional<MotionFlags> read_motion_flags(const fs::path& frames, const SpotConfig& spot,
                                             const MotionParams& motion) {
  if (!fs::exists(frames)) return std::nullopt;
  auto in = open_input(frames);
  std::vector<GrayFrame> stream;
  while (in.peek() != std::char_traits<char>::eof()) stream.push_back(read_gray_frame(in, spot));
  return motion_flags(stream, motion);
}

void write_spot_copy(const fs::path& out_dir, const Spot& spot) {
  auto out = detail::open_output(out_dir / "spots" / (spot.config.spot_id + ".json"));
  out << format_spot_config(spot.config) << '\n';
}

MotionParams motion_for(const PipelineConfig& c, const SpotConfig& spot) {
  return c.motion ? *c.motion : MotionParams::for_frame_skip(spot.frame_skip);
}

}  // namespace

void run_synth(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  synth::CorpusParams params;
  params.seed = config.seed;
  params.scenes_per_spot = config.synth_scenes_per_spot;
  params.pixel_noise_sigma = config.synth_noise_sigma;
  params.drop_probability = config.synth_drop_probability;
  const auto corpus = synth::synth_corpus(params);
  for (const auto& spot : corpus) {
    const auto& id = spot.spot.spot_id;
    if (!config.spot_filter.empty() &&
        std::find(config.spot_filter.begin(), config.spot_filter.end(), id) == config.spot_filter.end())
      continue;
    {
      auto out = detail::open_output(config.out_dir / "spots" / (id + ".json"));
      out << format_spot_config(spot.spot) << '\n';
    }
    {
      auto out = detail::open_output(config.out_dir / "detections" / (id + ".jsonl"));
      write_detections(out, id, spot.output.detections);
    }
    {
      auto out = detail::open_output(config.out_dir / "truth" / (id + ".json"));
      write_truth(out, id, spot.output);
    }
    emit(log, "synth spot=" + id + " detections=" + std::to_string(spot.output.detections.size()) +
                  " true_scenes=" + std::to_string(spot.output.truth.spans.size()));
  }
}

void run_segment(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  const auto spots = resolve_spots(config);
  for (const auto& spot : spots) {
    const auto& id = spot.config.spot_id;
    auto in = open_input(config.in_dir / "detections" / (id + ".jsonl"));
    auto parsed = parse_detections(in, spot.config);
    for (const auto& d : parsed.diagnostics) {
      ordered_json diag;
      diag["stage"] = "segment";
      diag["spot"] = id;
      diag["line"] = d.line;
      diag["code"] = to_string(d.code);
      diag["message"] = d.message;
      emit(log, diag.dump());
    }
    const MotionParams motion = motion_for(config, spot.config);
    const auto flags = read_motion_flags(config.in_dir / "frames" / (id + ".gray"), spot.config, motion);
    const auto result = segment_spot(parsed.records, spot.config, flags, motion, config.tracker);

    const fs::path spot_copy = config.out_dir / "spots" / (id + ".json");
    if (spot.source.lexically_normal() != spot_copy.lexically_normal()) write_spot_copy(config.out_dir, spot);
    if (fs::path(config.in_dir).lexically_normal() != fs::path(config.out_dir).lexically_normal()) {
      const fs::path truth = config.in_dir / "truth" / (id + ".json");
      if (fs::exists(truth)) {
        std::error_code ec;
        fs::create_directories(config.out_dir / "truth", ec);
        fs::copy_file(truth, config.out_dir / "truth" / (id + ".json"),
                      fs::copy_options::overwrite_existing);
      }
    }
    {
      auto out = detail::open_output(config.out_dir / "gated" / (id + ".jsonl"));
      write_detections(out, id, result.detections);
    }
    {
      auto out = detail::open_output(config.out_dir / "scenes" / (id + ".jsonl"));
      out << schema_header(kScenesSchema, id).dump() << '\n';
      for (const auto& s : result.spans) out << format_scene_span(s) << '\n';
    }
    const auto counts = count_scenes(result.spans, spot.config.fps);
    emit(log, "segment spot=" + id + " records=" + std::to_string(parsed.records.size()) +
                  " rejected=" + std::to_string(parsed.diagnostics.size()) +
                  " scenes=" + std::to_string(counts.scenes) + " car_only=" +
                  std::to_string(counts.car_only) + " interactive=" + std::to_string(counts.interactive) +
                  " frames=" + std::to_string(counts.frames) + " avg_frames_per_scene=" +
                  fixed(counts.avg_frames) + " (" + fixed(counts.avg_seconds) + " sec)");
  }
}

void run_track(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  const auto spots = resolve_spots(config);
  for (const auto& spot : spots) {
    const auto& id = spot.config.spot_id;
    auto in = open_input(config.in_dir / "gated" / (id + ".jsonl"));
    const auto detections = parse_detections_strict(in, spot.config);
    const auto spans = read_spans(config.in_dir / "scenes" / (id + ".jsonl"));
    const auto scenes = track_spot(detections, spans, spot.config, config.tracker, config.workers);
    {
      auto out = detail::open_output(config.out_dir / "trajectories" / (id + ".jsonl"));
      write_trajectories(out, id, scenes);
    }

    std::optional<TruthMap> truth;
    const fs::path truth_path = config.in_dir / "truth" / (id + ".json");
    if (fs::exists(truth_path)) {
      auto tin = open_input(truth_path);
      truth = read_truth_owners(tin);
    }
    const TrackerParams params = tracker_for(config.tracker, spot.config);
    std::vector<SceneValidation> checks(scenes.size());
    parallel_for(scenes.size(), config.workers, [&](std::size_t s) {
      checks[s] = validate_scene(scenes[s].span.scene_id, scenes[s].trajectories,
                                 truth ? &*truth : nullptr, params);
    });
    const auto report = summarize_validation(std::move(checks));
    {
      ordered_json j = schema_header("pedrisk/validation", id);
      j["mode"] = truth ? "ground-truth" : "heuristic";
      j["scenes"] = report.scenes.size();
      j["connectivity"] = report.connectivity;
      j["crossing"] = report.crossing;
      j["directivity"] = report.directivity;
      j["violating_scenes"] = report.violating_scenes;
      j["accuracy"] = report.accuracy;
      ordered_json per = ordered_json::array();
      for (const auto& s : report.scenes)
        if (s.violated())
          per.push_back({{"scene", s.scene_id}, {"connectivity", s.connectivity}, {"crossing", s.crossing},
                         {"directivity", s.directivity}});
      j["violations"] = std::move(per);
      auto out = detail::open_output(config.out_dir / "validation" / (id + ".json"));
      out << j.dump(1) << '\n';
    }
    std::size_t trajectories = 0;
    for (const auto& s : scenes) trajectories += s.trajectories.size();
    emit(log, "track spot=" + id + " scenes=" + std::to_string(scenes.size()) +
                  " trajectories=" + std::to_string(trajectories) +
                  " connectivity=" + std::to_string(report.connectivity) +
                  " crossing=" + std::to_string(report.crossing) +
                  " directivity=" + std::to_string(report.directivity) +
                  " accuracy=" + fixed(report.accuracy));
  }
}

void run_extract(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  const auto spots = resolve_spots(config);
  for (const auto& spot : spots) {
    const auto& id = spot.config.spot_id;
    const auto spans = read_spans(config.in_dir / "scenes" / (id + ".jsonl"));
    auto in = open_input(config.in_dir / "trajectories" / (id + ".jsonl"));
    const auto scenes = read_trajectories(in, spans);
    const auto features = extract_spot(scenes, spot.config, config.features, config.workers);
    auto out = detail::open_output(config.out_dir / "features" / (id + ".jsonl"));
    out << schema_header(kFeaturesSchema, id).dump() << '\n';
    int interactive = 0;
    int with_psm = 0;
    for (const auto& f : features) {
      out << format_scene_features(f) << '\n';
      interactive += f.interactive();
      with_psm += f.psm.has_value();
    }
    emit(log, "extract spot=" + id + " scenes=" + std::to_string(features.size()) +
                  " skipped=" + std::to_string(scenes.size() - features.size()) +
                  " interactive=" + std::to_string(interactive) + " psm=" + std::to_string(with_psm));
  }
}

void run_analyze(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  const auto spots = resolve_spots(config);
  std::vector<SpotScenes> all;
  for (const auto& spot : spots) {
    const auto& id = spot.config.spot_id;
    all.push_back({id, spot.config.signalized, read_features(config.in_dir / "features" / (id + ".jsonl"))});
  }
  const auto report = analyze(all, config.analytics);
  auto out = detail::open_output(config.out_dir / "analysis" / "analysis.json");
  write_analysis(out, report);
  for (const auto& note : report.notes) emit(log, "analyze note: " + note);
  emit(log, "analyze spots=" + std::to_string(all.size()) +
                " stopping_rows=" + std::to_string(report.stopping.size()) +
                " range_cells=" + std::to_string(report.range_table ? report.range_table->cells.size() : 0));
}

void run_report(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  auto in = open_input(config.in_dir / "analysis" / "analysis.json");
  const auto report = read_analysis(in);
  emit_report(report, config.out_dir / "report");
  emit(log, "report written to " + (config.out_dir / "report").string());
}

void run_all(const PipelineConfig& config, const StageLog& log) {
  config.validate();
  PipelineConfig first = config;
  if (!fs::is_directory(config.in_dir / "detections")) {
    run_synth(config, log);
    first.in_dir = config.out_dir;
  }
  run_segment(first, log);
  PipelineConfig rest = config;
  rest.in_dir = config.out_dir;
  rest.spot_configs.clear();
  if (!config.spot_configs.empty()) {
    // Later stages read the normalized copies written by segment.
    for (const auto& p : config.spot_configs)
      rest.spot_configs.push_back(config.out_dir / "spots" / (load_spot_config(p).spot_id + ".json"));
  }
  run_track(rest, log);
  run_extract(rest, log);
  run_analyze(rest, log);
  run_report(rest, log);
}

}  // namespace pedrisk
