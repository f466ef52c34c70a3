#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pedrisk/geometry.hpp"
#include "pedrisk/ingest.hpp"

namespace pedrisk {

// Where a track is expected in the next frame.
enum class AssociationMode {
  KalmanPrediction,  // constant-velocity prediction
  LastPosition,      // plain nearest neighbour from the last measurement
};

enum class MatchingMode {
  Greedy,   // globally smallest distance first
  Optimal,  // minimum total distance (Hungarian), for comparison
};

struct TrackerParams {
  double gate_threshold_vehicle = 60.0;     // px
  double gate_threshold_pedestrian = 20.0;  // px
  double process_noise = 1.0;               // px^2
  double measurement_noise = 2.0;           // px^2
  int max_coast_frames = 3;                 // sampled steps
  int frame_skip = 1;                       // raw frames per sampled step
  AssociationMode association = AssociationMode::KalmanPrediction;
  MatchingMode matching = MatchingMode::Greedy;

  void validate() const;
  double gate_for(ObjectClass c) const {
    return c == ObjectClass::Vehicle ? gate_threshold_vehicle : gate_threshold_pedestrian;
  }
};

struct TrackPoint {
  std::int64_t frame = 0;
  std::string detection_id;
  Vec2 raw_px;
  Vec2 smoothed_px;
};

// State is (x, y, vx, vy) in pixels and pixels per sampled step.
struct TrackState {
  int object_id = 0;
  ObjectClass object_class = ObjectClass::Vehicle;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  std::int64_t last_frame = 0;  // frame of the last measurement
  std::int64_t state_frame = 0;  // frame the mean currently refers to
  int updates = 0;
  std::vector<TrackPoint> points;

  Vec2 position() const { return {mean(0), mean(1)}; }
  Vec2 last_measurement() const { return points.empty() ? position() : points.back().raw_px; }
};

TrackState start_track(int object_id, const DetectionRecord& detection, const TrackerParams& params);

/// One constant-velocity step. Covariance grows by the white-acceleration
/// process noise scaled by process_noise.
TrackState kalman_predict(const TrackState& state, double process_noise);

/// Position-only measurement update (Joseph form). Does not append to points.
TrackState kalman_update(const TrackState& state, Vec2 measurement, double measurement_noise);

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track index, detection index)
  std::vector<std::size_t> new_tracks;                       // unmatched detection indices
  std::vector<std::size_t> coasting;                         // unmatched track indices
};

/// Tracks are expected to be predicted to the detections' frame already. Only
/// like-class pairs within the class gate are eligible. Ties in distance break
/// on the smaller detection_id, then the smaller object id.
Assignment assign(std::span<const TrackState> tracks, std::span<const DetectionRecord> detections,
                  const TrackerParams& params);

struct TrajectoryPoint {
  std::int64_t frame = 0;
  std::string detection_id;
  Vec2 raw_px;
  Vec2 smoothed_px;
  WorldPoint world;           // projected raw point
  WorldPoint world_smoothed;  // projected filter mean
};

struct Trajectory {
  int object_id = 0;
  ObjectClass object_class = ObjectClass::Vehicle;
  std::vector<TrajectoryPoint> points;

  std::int64_t first_frame() const { return points.front().frame; }
  std::int64_t last_frame() const { return points.back().frame; }
};

/// Frame-ordered detections in, trajectories out (sorted by object id, which
/// follows spawn order).
std::vector<Trajectory> track_scene(std::span<const DetectionRecord> detections,
                                    const TrackerParams& params, const Calibration& calib);

// Ground truth owner of each detection: (frame, detection_id) -> true object id.
using TruthMap = std::map<std::pair<std::int64_t, std::string>, std::string>;

struct SceneValidation {
  std::string scene_id;
  int connectivity = 0;
  int crossing = 0;
  int directivity = 0;

  bool violated() const { return connectivity + crossing + directivity > 0; }
};

struct TrajectoryReport {
  std::vector<SceneValidation> scenes;
  int connectivity = 0;
  int crossing = 0;
  int directivity = 0;
  int violating_scenes = 0;
  double accuracy = 1.0;
};

/// With truth:
///  - connectivity: a true object's consecutive detections land on different
///    track ids with more than max_coast_frames steps between them;
///  - crossing: two tracks that exchange two true identities (a then b / b then a);
///  - directivity: a track holding points of two or more true objects that is
///    not part of a counted crossing.
/// Without truth, heuristics: same-class track restarts after a gap, pairwise
/// path intersection while close, and per-step heading reversals over 120 deg.
SceneValidation validate_scene(std::string scene_id, std::span<const Trajectory> trajectories,
                               const TruthMap* truth, const TrackerParams& params);

TrajectoryReport summarize_validation(std::vector<SceneValidation> scenes);

struct ValidationInput {
  std::string scene_id;
  std::vector<Trajectory> trajectories;
  const TruthMap* truth = nullptr;
};

TrajectoryReport validate_trajectories(std::span<const ValidationInput> scenes,
                                       const TrackerParams& params);

}  // namespace pedrisk
