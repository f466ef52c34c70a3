#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedrisk/geometry.hpp"
#include "pedrisk/ingest.hpp"
#include "pedrisk/tracker.hpp"

namespace pedrisk {

enum class AccelState { Acc, Dec, NoChange };
enum class VehicleZone { BeforeCrosswalk, OnCrosswalk, AfterCrosswalk };
enum class PedestrianZone { Sidewalk, Crosswalk, CIA, Road };
enum class RelativePosition { Front, Behind };

std::string_view to_string(AccelState s);
std::string_view to_string(VehicleZone z);
std::string_view to_string(PedestrianZone z);
std::string_view to_string(RelativePosition r);
AccelState parse_accel_state(std::string_view s);
VehicleZone parse_vehicle_zone(std::string_view s);
PedestrianZone parse_pedestrian_zone(std::string_view s);
RelativePosition parse_relative_position(std::string_view s);

enum class DistanceMode {
  Homography,  // world coordinates through the fitted plane map
  PixelScale,  // raw pixel distance divided by P
};

struct FeatureParams {
  double epsilon_kmh = 0.5;        // acceleration dead-band per step
  double alpha = 0.3;              // low-pass smoothing factor
  double stop_tolerance_kmh = 2.0;
  int stop_min_steps = 3;
  bool acceleration_full_scene = false;
  DistanceMode distance_mode = DistanceMode::Homography;

  void validate() const;
};

/// km/h per consecutive step; length = points - 1. Throws TooShort.
std::vector<double> speed_list(const Trajectory& traj, const Calibration& calib,
                               DistanceMode mode = DistanceMode::Homography);

/// y0 = x0, y_t = alpha * x_t + (1 - alpha) * y_{t-1}.
std::vector<double> low_pass(std::span<const double> speeds, double alpha);

/// One state per consecutive pair of filtered speeds. Throws TooShort.
std::vector<AccelState> acceleration_list(std::span<const double> filtered, double epsilon_kmh);

/// Consecutive duplicates collapsed: [acc, acc, nc, acc] -> [acc, nc, acc].
template <typename T>
std::vector<T> collapse_runs(std::span<const T> values) {
  std::vector<T> out;
  for (const auto& v : values) {
    if (out.empty() || !(out.back() == v)) out.push_back(v);
  }
  return out;
}

// Geometry helpers shared with the synthetic generator and tests.
bool point_in_polygon(Vec2 p, const Polygon& polygon);
double distance_to_polygon_edges(Vec2 p, const Polygon& polygon);
bool segments_intersect(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1);

VehicleZone classify_vehicle_point(Vec2 world, const SpotConfig& config);
PedestrianZone classify_pedestrian_point(Vec2 world, const SpotConfig& config);

/// Zone per trajectory point. Throws MissingPolygons without a crosswalk polygon.
std::vector<VehicleZone> classify_vehicle_zones(const Trajectory& traj, const SpotConfig& config);
std::vector<PedestrianZone> classify_pedestrian_zones(const Trajectory& traj,
                                                      const SpotConfig& config);

struct StopWindow {
  std::size_t first_step = 0;  // inclusive speed index
  std::size_t last_step = 0;   // inclusive speed index
};

/// First run of at least min_steps speeds below tolerance whose steps all start
/// before the crosswalk. zones[j] is the zone of the point that starts step j.
std::optional<StopWindow> find_stop(std::span<const double> speeds,
                                    std::span<const VehicleZone> zones, double tolerance_kmh,
                                    int min_steps);
bool detect_stop(std::span<const double> speeds, std::span<const VehicleZone> zones,
                 double tolerance_kmh, int min_steps);

struct FrameDistance {
  std::int64_t frame = 0;
  double meters = 0.0;
};

/// Vehicle-pedestrian distance on every shared frame. Throws NoOverlap.
std::vector<FrameDistance> distance_list(const Trajectory& vehicle, const Trajectory& pedestrian,
                                         const Calibration& calib,
                                         DistanceMode mode = DistanceMode::Homography);

/// Vehicle distance to the nearest crosswalk edge per point; zero on the crosswalk.
std::vector<double> crosswalk_distance_list(const Trajectory& vehicle, const SpotConfig& config);

struct FrameRelativePosition {
  std::int64_t frame = 0;
  RelativePosition position = RelativePosition::Front;
};

/// Front iff the pedestrian is in the half-plane ahead of the vehicle's
/// heading (smoothed motion). A stationary vehicle keeps its last heading.
/// Throws NoOverlap, or ZeroHeading if the vehicle never moves.
std::vector<FrameRelativePosition> relative_positions(const Trajectory& vehicle,
                                                      const Trajectory& pedestrian);

struct PsmValue {
  double seconds = 0.0;       // sub-step refined; positive when the pedestrian arrives first
  double step_seconds = 0.0;  // integer-step value from the segment start indices
  Vec2 conflict_point;
  std::size_t pedestrian_step = 0;  // i
  std::size_t vehicle_step = 0;     // k
};

/// Sign-change scan over vehicle steps k (outer) and pedestrian segments i
/// (inner); the first pair whose segments cross defines the conflict point.
std::optional<PsmValue> psm(const Trajectory& vehicle, const Trajectory& pedestrian);

struct PedestrianFeatures {
  int object_id = 0;
  std::vector<double> speed_list;
  std::vector<PedestrianZone> position_list;
};

struct SceneFeatures {
  std::string scene_id;
  std::string spot_id;
  std::int64_t frame_start = 0;
  std::int64_t frame_end = 0;
  int frames = 0;  // sampled frames in the vehicle trajectory
  double duration_s = 0.0;

  std::vector<double> vehicle_speed_list;
  std::vector<double> vehicle_filtered_speed_list;
  std::vector<VehicleZone> vehicle_position_list;
  std::vector<AccelState> vehicle_acceleration_list;
  std::vector<double> crosswalk_distance_list;
  bool stop = false;
  std::optional<double> stop_distance_m;  // minimum crosswalk distance inside the stop window
  double mean_speed_kmh = 0.0;
  double median_speed_kmh = 0.0;

  std::vector<PedestrianFeatures> pedestrians;  // only those sharing frames with the vehicle

  bool pedestrian_in_crossing_area = false;  // crosswalk or CIA at some frame
  std::vector<std::int64_t> interaction_frames;
  std::vector<int> nearest_pedestrian;  // object id per interaction frame
  std::vector<double> distance_list;
  std::vector<RelativePosition> relative_position_list;
  std::optional<PsmValue> psm;
  std::optional<int> psm_pedestrian;

  bool interactive() const { return !pedestrians.empty(); }
  std::vector<AccelState> acceleration_runs() const {
    return collapse_runs<AccelState>(vehicle_acceleration_list);
  }
};

/// Feature bundle for one scene. Pedestrian trajectories that never share a
/// frame with the vehicle are ignored. Distances and relative positions follow
/// the nearest pedestrian per frame; PSM uses the pedestrian with the smallest
/// minimum distance.
SceneFeatures extract_scene_features(std::string scene_id, const Trajectory& vehicle,
                                     std::span<const Trajectory> pedestrians,
                                     const SpotConfig& config, const Calibration& calib,
                                     const FeatureParams& params);

inline constexpr std::string_view kFeaturesSchema = "pedrisk/features";

}  // namespace pedrisk
