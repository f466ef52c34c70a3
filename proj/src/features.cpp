#include "pedrisk/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "pedrisk/error.hpp"

namespace pedrisk {

namespace {

constexpr double kMsToKmh = 3.6;

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<E, std::string_view> (&table)[N],
             std::string_view what) {
  for (const auto& [value, name] : table)
    if (name == s) return value;
  throw Error(ErrorCode::MalformedRecord, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::pair<AccelState, std::string_view> kAccelNames[] = {
    {AccelState::Acc, "acc"}, {AccelState::Dec, "dec"}, {AccelState::NoChange, "nc"}};
constexpr std::pair<VehicleZone, std::string_view> kVehicleZoneNames[] = {
    {VehicleZone::BeforeCrosswalk, "before crosswalk"},
    {VehicleZone::OnCrosswalk, "on crosswalk"},
    {VehicleZone::AfterCrosswalk, "after crosswalk"}};
constexpr std::pair<PedestrianZone, std::string_view> kPedestrianZoneNames[] = {
    {PedestrianZone::Sidewalk, "sidewalk"},
    {PedestrianZone::Crosswalk, "crosswalk"},
    {PedestrianZone::CIA, "CIA"},
    {PedestrianZone::Road, "road"}};
constexpr std::pair<RelativePosition, std::string_view> kRelativeNames[] = {
    {RelativePosition::Front, "Front"}, {RelativePosition::Behind, "Behind"}};

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::pair<E, std::string_view> (&table)[N]) {
  for (const auto& [value, name] : table)
    if (value == v) return name;
  return "?";
}

double orientation(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

void require_polygon(const SpotConfig& config) {
  if (config.crosswalk_polygon_world.size() < 3)
    throw Error(ErrorCode::MissingPolygons, "spot '" + config.spot_id + "' has no crosswalk polygon");
}

double step_seconds(const TrajectoryPoint& a, const TrajectoryPoint& b) {
  const double dt = b.world.t - a.world.t;
  if (!(dt > 0.0)) throw Error(ErrorCode::NonMonotoneFrame, "trajectory frames must increase");
  return dt;
}

double point_distance(const TrajectoryPoint& a, const TrajectoryPoint& b, const Calibration& calib,
                      DistanceMode mode) {
  return mode == DistanceMode::Homography ? distance(a.world.xy(), b.world.xy())
                                          : distance(a.raw_px, b.raw_px) / calib.pixels_per_meter;
}

// Heading of the vehicle at each point from its smoothed world positions. A
// point whose displacement vanishes keeps the previous heading; leading points
// take the first available one.
std::vector<Vec2> vehicle_headings(const Trajectory& vehicle) {
  const auto& pts = vehicle.points;
  std::vector<Vec2> out(pts.size());
  std::optional<Vec2> last;
  std::size_t pending = 0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (k > 0) {
      const Vec2 d = pts[k].world_smoothed.xy() - pts[k - 1].world_smoothed.xy();
      if (norm(d) > 1e-9) {
        last = (1.0 / norm(d)) * d;
        for (; pending < k; ++pending) out[pending] = *last;
      }
    }
    if (last) {
      out[k] = *last;
      pending = k + 1;
    }
  }
  if (!last) throw Error(ErrorCode::ZeroHeading, "vehicle never moves");
  return out;
}

std::map<std::int64_t, const TrajectoryPoint*> by_frame(const Trajectory& t) {
  std::map<std::int64_t, const TrajectoryPoint*> m;
  for (const auto& p : t.points) m.emplace(p.frame, &p);
  return m;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string_view to_string(AccelState s) { return name_of(s, kAccelNames); }
std::string_view to_string(VehicleZone z) { return name_of(z, kVehicleZoneNames); }
std::string_view to_string(PedestrianZone z) { return name_of(z, kPedestrianZoneNames); }
std::string_view to_string(RelativePosition r) { return name_of(r, kRelativeNames); }
AccelState parse_accel_state(std::string_view s) { return parse_enum(s, kAccelNames, "acceleration state"); }
VehicleZone parse_vehicle_zone(std::string_view s) { return parse_enum(s, kVehicleZoneNames, "vehicle zone"); }
PedestrianZone parse_pedestrian_zone(std::string_view s) {
  return parse_enum(s, kPedestrianZoneNames, "pedestrian zone");
}
RelativePosition parse_relative_position(std::string_view s) {
  return parse_enum(s, kRelativeNames, "relative position");
}

void FeatureParams::validate() const {
  if (!(epsilon_kmh >= 0.0)) throw Error(ErrorCode::InvalidParameter, "epsilon_kmh must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidParameter, "alpha must be in (0, 1]");
  if (!(stop_tolerance_kmh > 0.0))
    throw Error(ErrorCode::InvalidParameter, "stop_tolerance_kmh must be positive");
  if (stop_min_steps < 1) throw Error(ErrorCode::InvalidParameter, "stop_min_steps must be >= 1");
}

std::vector<double> speed_list(const Trajectory& traj, const Calibration& calib, DistanceMode mode) {
  if (traj.points.size() < 2) throw Error(ErrorCode::TooShort, "speed list needs two points");
  std::vector<double> out;
  out.reserve(traj.points.size() - 1);
  for (std::size_t j = 1; j < traj.points.size(); ++j) {
    const auto& a = traj.points[j - 1];
    const auto& b = traj.points[j];
    out.push_back(point_distance(a, b, calib, mode) / step_seconds(a, b) * kMsToKmh);
  }
  return out;
}

std::vector<double> low_pass(std::span<const double> speeds, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidParameter, "alpha must be in (0, 1]");
  std::vector<double> out;
  out.reserve(speeds.size());
  for (double x : speeds) out.push_back(out.empty() ? x : alpha * x + (1.0 - alpha) * out.back());
  return out;
}

std::vector<AccelState> acceleration_list(std::span<const double> filtered, double epsilon_kmh) {
  if (filtered.size() < 2) throw Error(ErrorCode::TooShort, "acceleration list needs two speeds");
  std::vector<AccelState> out;
  out.reserve(filtered.size() - 1);
  for (std::size_t j = 1; j < filtered.size(); ++j) {
    const double d = filtered[j] - filtered[j - 1];
    out.push_back(d > epsilon_kmh ? AccelState::Acc
                  : d < -epsilon_kmh ? AccelState::Dec
                                     : AccelState::NoChange);
  }
  return out;
}

bool point_in_polygon(Vec2 p, const Polygon& polygon) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

double distance_to_polygon_edges(Vec2 p, const Polygon& polygon) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i)
    best = std::min(best, point_segment_distance(p, polygon[i], polygon[(i + 1) % n]));
  return best;
}

bool segments_intersect(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  const double d1 = orientation(b0, b1, a0);
  const double d2 = orientation(b0, b1, a1);
  const double d3 = orientation(a0, a1, b0);
  const double d4 = orientation(a0, a1, b1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(b0, b1, a0)) return true;
  if (d2 == 0 && on_segment(b0, b1, a1)) return true;
  if (d3 == 0 && on_segment(a0, a1, b0)) return true;
  if (d4 == 0 && on_segment(a0, a1, b1)) return true;
  return false;
}

VehicleZone classify_vehicle_point(Vec2 world, const SpotConfig& config) {
  require_polygon(config);
  const Vec2 d = config.approach_direction_world;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Vec2 v : config.crosswalk_polygon_world) {
    lo = std::min(lo, dot(v, d));
    hi = std::max(hi, dot(v, d));
  }
  const double s = dot(world, d);
  if (s < lo) return VehicleZone::BeforeCrosswalk;
  if (s > hi) return VehicleZone::AfterCrosswalk;
  return VehicleZone::OnCrosswalk;
}

PedestrianZone classify_pedestrian_point(Vec2 world, const SpotConfig& config) {
  require_polygon(config);
  const Polygon& cw = config.crosswalk_polygon_world;
  if (point_in_polygon(world, cw)) return PedestrianZone::Crosswalk;
  for (const auto& sw : config.sidewalk_polygons_world)
    if (point_in_polygon(world, sw)) return PedestrianZone::Sidewalk;
  // Crosswalk dilated along the road axis: the point slid by up to the buffer
  // in either direction reaches the crosswalk.
  const Vec2 shift = config.cia_buffer_m * config.approach_direction_world;
  const Vec2 a = world - shift;
  const Vec2 b = world + shift;
  if (point_in_polygon(a, cw) || point_in_polygon(b, cw)) return PedestrianZone::CIA;
  for (std::size_t i = 0; i < cw.size(); ++i)
    if (segments_intersect(a, b, cw[i], cw[(i + 1) % cw.size()])) return PedestrianZone::CIA;
  return PedestrianZone::Road;
}

std::vector<VehicleZone> classify_vehicle_zones(const Trajectory& traj, const SpotConfig& config) {
  require_polygon(config);
  std::vector<VehicleZone> out;
  out.reserve(traj.points.size());
  for (const auto& p : traj.points) out.push_back(classify_vehicle_point(p.world.xy(), config));
  return out;
}

std::vector<PedestrianZone> classify_pedestrian_zones(const Trajectory& traj,
                                                      const SpotConfig& config) {
  require_polygon(config);
  std::vector<PedestrianZone> out;
  out.reserve(traj.points.size());
  for (const auto& p : traj.points) out.push_back(classify_pedestrian_point(p.world.xy(), config));
  return out;
}

std::optional<StopWindow> find_stop(std::span<const double> speeds,
                                    std::span<const VehicleZone> zones, double tolerance_kmh,
                                    int min_steps) {
  if (zones.size() < speeds.size())
    throw Error(ErrorCode::InvalidParameter, "zone list shorter than speed list");
  std::size_t run = 0;
  for (std::size_t j = 0; j < speeds.size(); ++j) {
    const bool slow = speeds[j] < tolerance_kmh && zones[j] == VehicleZone::BeforeCrosswalk;
    run = slow ? run + 1 : 0;
    if (run >= static_cast<std::size_t>(min_steps)) {
      std::size_t last = j;
      while (last + 1 < speeds.size() && speeds[last + 1] < tolerance_kmh &&
             zones[last + 1] == VehicleZone::BeforeCrosswalk)
        ++last;
      return StopWindow{j + 1 - run, last};
    }
  }
  return std::nullopt;
}

bool detect_stop(std::span<const double> speeds, std::span<const VehicleZone> zones,
                 double tolerance_kmh, int min_steps) {
  return find_stop(speeds, zones, tolerance_kmh, min_steps).has_value();
}

std::vector<FrameDistance> distance_list(const Trajectory& vehicle, const Trajectory& pedestrian,
                                         const Calibration& calib, DistanceMode mode) {
  std::vector<FrameDistance> out;
  const auto ped = by_frame(pedestrian);
  for (const auto& v : vehicle.points) {
    auto it = ped.find(v.frame);
    if (it == ped.end()) continue;
    out.push_back({v.frame, point_distance(v, *it->second, calib, mode)});
  }
  if (out.empty()) throw Error(ErrorCode::NoOverlap, "vehicle and pedestrian share no frame");
  return out;
}

std::vector<double> crosswalk_distance_list(const Trajectory& vehicle, const SpotConfig& config) {
  require_polygon(config);
  const Polygon& cw = config.crosswalk_polygon_world;
  std::vector<double> out;
  out.reserve(vehicle.points.size());
  for (const auto& p : vehicle.points) {
    const Vec2 w = p.world.xy();
    out.push_back(point_in_polygon(w, cw) ? 0.0 : distance_to_polygon_edges(w, cw));
  }
  return out;
}

std::vector<FrameRelativePosition> relative_positions(const Trajectory& vehicle,
                                                      const Trajectory& pedestrian) {
  const auto ped = by_frame(pedestrian);
  bool overlap = false;
  for (const auto& v : vehicle.points) overlap = overlap || ped.count(v.frame);
  if (!overlap) throw Error(ErrorCode::NoOverlap, "vehicle and pedestrian share no frame");
  const auto heading = vehicle_headings(vehicle);
  std::vector<FrameRelativePosition> out;
  for (std::size_t k = 0; k < vehicle.points.size(); ++k) {
    const auto& v = vehicle.points[k];
    auto it = ped.find(v.frame);
    if (it == ped.end()) continue;
    const double ahead = dot(it->second->world.xy() - v.world.xy(), heading[k]);
    out.push_back({v.frame, ahead > 0.0 ? RelativePosition::Front : RelativePosition::Behind});
  }
  return out;
}

std::optional<PsmValue> psm(const Trajectory& vehicle, const Trajectory& pedestrian) {
  const auto& c = vehicle.points;
  const auto& p = pedestrian.points;
  if (c.size() < 2 || p.size() < 2) throw Error(ErrorCode::TooShort, "PSM needs two points per track");
  for (std::size_t k = 0; k + 1 < c.size(); ++k) {
    const Vec2 c0 = c[k].world.xy();
    const Vec2 c1 = c[k + 1].world.xy();
    const Vec2 dc = c1 - c0;
    if (norm(dc) == 0.0) continue;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const Vec2 p0 = p[i].world.xy();
      const Vec2 p1 = p[i + 1].world.xy();
      const Vec2 dp = p1 - p0;
      if (norm(dp) == 0.0) continue;
      // Sign of the pedestrian segment's line at the two vehicle points, and
      // of the vehicle step's line at the two pedestrian points.
      const double f0 = cross(dp, c0 - p0);
      const double f1 = cross(dp, c1 - p0);
      if ((f0 > 0.0) == (f1 > 0.0)) continue;
      const double g0 = cross(dc, p0 - c0);
      const double g1 = cross(dc, p1 - c0);
      if ((g0 > 0.0) == (g1 > 0.0)) continue;
      const double denom = cross(dc, dp);
      if (denom == 0.0) continue;
      const double s = cross(p0 - c0, dp) / denom;  // along the vehicle step
      const double u = cross(p0 - c0, dc) / denom;  // along the pedestrian segment
      PsmValue out;
      out.conflict_point = c0 + s * dc;
      const double t_vehicle = c[k].world.t + s * (c[k + 1].world.t - c[k].world.t);
      const double t_pedestrian = p[i].world.t + u * (p[i + 1].world.t - p[i].world.t);
      out.seconds = t_vehicle - t_pedestrian;
      out.step_seconds = c[k].world.t - p[i].world.t;
      out.pedestrian_step = i;
      out.vehicle_step = k;
      return out;
    }
  }
  return std::nullopt;
}

SceneFeatures extract_scene_features(std::string scene_id, const Trajectory& vehicle,
                                     std::span<const Trajectory> pedestrians,
                                     const SpotConfig& config, const Calibration& calib,
                                     const FeatureParams& params) {
  params.validate();
  SceneFeatures f;
  f.scene_id = std::move(scene_id);
  f.spot_id = config.spot_id;
  f.frame_start = vehicle.first_frame();
  f.frame_end = vehicle.last_frame();
  f.frames = static_cast<int>(vehicle.points.size());
  f.duration_s = vehicle.points.back().world.t - vehicle.points.front().world.t;

  f.vehicle_speed_list = speed_list(vehicle, calib, params.distance_mode);
  f.vehicle_filtered_speed_list = low_pass(f.vehicle_speed_list, params.alpha);
  f.vehicle_position_list = classify_vehicle_zones(vehicle, config);
  f.crosswalk_distance_list = crosswalk_distance_list(vehicle, config);

  std::size_t approach = f.vehicle_filtered_speed_list.size();
  if (!params.acceleration_full_scene) {
    approach = 0;
    while (approach < f.vehicle_filtered_speed_list.size() &&
           f.vehicle_position_list[approach] == VehicleZone::BeforeCrosswalk)
      ++approach;
  }
  if (approach >= 2)
    f.vehicle_acceleration_list = acceleration_list(
        std::span<const double>(f.vehicle_filtered_speed_list).first(approach), params.epsilon_kmh);

  if (auto w = find_stop(f.vehicle_speed_list, f.vehicle_position_list, params.stop_tolerance_kmh,
                         params.stop_min_steps)) {
    f.stop = true;
    f.stop_distance_m = *std::min_element(f.crosswalk_distance_list.begin() + w->first_step,
                                          f.crosswalk_distance_list.begin() + w->last_step + 2);
  }
  f.mean_speed_kmh = std::accumulate(f.vehicle_speed_list.begin(), f.vehicle_speed_list.end(), 0.0) /
                     static_cast<double>(f.vehicle_speed_list.size());
  f.median_speed_kmh = median_of(f.vehicle_speed_list);

  const auto vehicle_frames = by_frame(vehicle);
  std::vector<const Trajectory*> present;
  for (const auto& ped : pedestrians) {
    if (ped.points.empty()) continue;
    bool shares = false;
    for (const auto& p : ped.points) shares = shares || vehicle_frames.count(p.frame);
    if (!shares) continue;
    present.push_back(&ped);
    PedestrianFeatures pf;
    pf.object_id = ped.object_id;
    if (ped.points.size() >= 2) pf.speed_list = speed_list(ped, calib, params.distance_mode);
    pf.position_list = classify_pedestrian_zones(ped, config);
    for (auto z : pf.position_list)
      if (z == PedestrianZone::Crosswalk || z == PedestrianZone::CIA) f.pedestrian_in_crossing_area = true;
    f.pedestrians.push_back(std::move(pf));
  }
  if (present.empty()) return f;

  std::vector<std::map<std::int64_t, const TrajectoryPoint*>> ped_frames;
  for (const auto* ped : present) ped_frames.push_back(by_frame(*ped));
  std::optional<std::vector<Vec2>> heading;
  try {
    heading = vehicle_headings(vehicle);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroHeading) throw;
  }

  std::map<int, double> min_distance;
  for (std::size_t k = 0; k < vehicle.points.size(); ++k) {
    const auto& v = vehicle.points[k];
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < present.size(); ++q) {
      auto it = ped_frames[q].find(v.frame);
      if (it == ped_frames[q].end()) continue;
      const double d = point_distance(v, *it->second, calib, params.distance_mode);
      auto [slot, fresh] = min_distance.try_emplace(present[q]->object_id, d);
      if (!fresh) slot->second = std::min(slot->second, d);
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    if (!best) continue;
    f.interaction_frames.push_back(v.frame);
    f.nearest_pedestrian.push_back(present[*best]->object_id);
    f.distance_list.push_back(best_d);
    if (heading) {
      const double ahead = dot(ped_frames[*best].at(v.frame)->world.xy() - v.world.xy(), (*heading)[k]);
      f.relative_position_list.push_back(ahead > 0.0 ? RelativePosition::Front : RelativePosition::Behind);
    }
  }

  const Trajectory* nearest = nullptr;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (const auto* ped : present) {
    const double d = min_distance.at(ped->object_id);
    if (d < nearest_d) {
      nearest_d = d;
      nearest = ped;
    }
  }
  if (nearest && nearest->points.size() >= 2 && vehicle.points.size() >= 2) {
    f.psm = psm(vehicle, *nearest);
    if (f.psm) f.psm_pedestrian = nearest->object_id;
  }
  return f;
}

}  // namespace pedrisk
