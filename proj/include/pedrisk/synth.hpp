#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pedrisk/geometry.hpp"
#include "pedrisk/ingest.hpp"
#include "pedrisk/motion_gate.hpp"
#include "pedrisk/tracker.hpp"

namespace pedrisk::synth {

struct Waypoint {
  double t = 0.0;  // seconds
  Vec2 world;
};

// Piecewise-linear world path; the agent exists from the first to the last
// waypoint time. Equal consecutive positions encode a dwell.
struct AgentScript {
  std::string agent_id;
  ObjectClass object_class = ObjectClass::Vehicle;
  std::vector<Waypoint> path;
  std::vector<std::pair<double, double>> hidden;  // [t0, t1] intervals with no detections

  Vec2 position_at(double t) const;
  double start() const { return path.front().t; }
  double end() const { return path.back().t; }
};

struct ScenarioSpec {
  std::string name;
  SpotConfig spot;
  std::vector<AgentScript> agents;
  double pixel_noise_sigma = 0.0;
  double drop_probability = 0.0;
  std::uint64_t seed = 0;
};

struct TrueTrack {
  std::string agent_id;
  ObjectClass object_class = ObjectClass::Vehicle;
  std::vector<std::int64_t> frames;
  std::vector<Vec2> world;
  std::vector<Vec2> pixel;
  std::vector<double> speeds_kmh;  // from consecutive true positions
};

struct TruePsm {
  std::string vehicle_id;
  std::string pedestrian_id;
  double seconds = 0.0;
  Vec2 conflict_point;
};

struct TrueStop {
  std::string vehicle_id;
  bool stop = false;
  std::optional<double> distance_m;
};

struct GroundTruth {
  std::vector<TrueTrack> tracks;
  std::vector<SceneSpan> spans;
  std::vector<TruePsm> psm;
  std::vector<TrueStop> stops;

  const TrueTrack* track(const std::string& agent_id) const;
};

struct SynthOutput {
  std::vector<DetectionRecord> detections;
  TruthMap owners;  // which agent produced each emitted detection
  GroundTruth truth;
};

/// Deterministic for a fixed seed. Ground truth does not depend on the seed.
/// True scene spans use the hangover of MotionParams::for_frame_skip unless
/// motion parameters are given. Throws InvalidSpec.
SynthOutput generate(const ScenarioSpec& spec);
SynthOutput generate(const ScenarioSpec& spec, const MotionParams& motion);

/// Oblique roadside camera over a two-lane road running along +x with a
/// crosswalk at x in [0, 4] and sidewalks beyond |y| = 4.
SpotConfig synthetic_spot(std::string spot_id, bool signalized = false, double fps = 25.0,
                          int frame_skip = 3);

/// World -> pixel map of the synthetic camera.
Eigen::Matrix3d synthetic_camera();

struct NamedScenario {
  ScenarioSpec spec;
  SynthOutput output;
};

/// single_pass, stop_and_go, crossing_pair, parallel_pair, occlusion_gap,
/// near_miss, vehicle_first, multi_pedestrian; zero noise and zero drops.
std::vector<NamedScenario> standard_corpus();

/// Two pedestrians passing each other head-on with a small lateral offset, plus
/// a vehicle; a stressor for nearest-neighbour association.
ScenarioSpec crossing_stress_scenario(std::uint64_t seed, double pixel_noise_sigma);

/// Random straight-line vehicle/pedestrian pair, crossing or not.
struct CrossingPair {
  Trajectory vehicle;
  Trajectory pedestrian;
  double seconds_per_step = 0.0;
};
CrossingPair random_crossing_pair(std::uint64_t seed);

struct CorpusParams {
  std::uint64_t seed = 7;
  int scenes_per_spot = 40;
  double pixel_noise_sigma = 1.0;
  double drop_probability = 0.0;
};

struct SpotCorpus {
  SpotConfig spot;
  SynthOutput output;
};

/// Five synthetic spots (two signalized, three unsignalized), each a sequence
/// of randomized scene instances laid end to end in time.
std::vector<SpotCorpus> synth_corpus(const CorpusParams& params);

/// A static background with a bright box at the given pixel position.
GrayFrame render_box_frame(std::int64_t frame_index, int width, int height, int box_x, int box_y,
                           int box_size, std::uint8_t background = 40, std::uint8_t box = 220);

}  // namespace pedrisk::synth
