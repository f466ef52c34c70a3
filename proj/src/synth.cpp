#include "pedrisk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "pedrisk/error.hpp"
#include "pedrisk/features.hpp"

namespace pedrisk::synth {

namespace {

constexpr double kMsToKmh = 3.6;
constexpr double kRoadHalfWidth = 4.0;
constexpr double kSidewalkOuter = 7.0;
constexpr double kNearLane = -2.0;

Vec2 apply(const Eigen::Matrix3d& h, Vec2 p) {
  const Eigen::Vector3d v = h * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v(0) / v(2), v(1) / v(2)};
}

void check_spec(const ScenarioSpec& spec) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::InvalidSpec, "scenario '" + spec.name + "': " + what);
  };
  if (!(spec.pixel_noise_sigma >= 0.0)) fail("pixel noise sigma must be >= 0");
  if (!(spec.drop_probability >= 0.0 && spec.drop_probability < 1.0))
    fail("drop probability must be in [0, 1)");
  if (!(spec.spot.fps > 0.0) || spec.spot.frame_skip < 1) fail("spot needs positive fps and frame_skip");
  std::set<std::string> ids;
  for (const auto& a : spec.agents) {
    if (a.agent_id.empty()) fail("agent without id");
    if (!ids.insert(a.agent_id).second) fail("duplicate agent id '" + a.agent_id + "'");
    if (a.path.size() < 2) fail("agent '" + a.agent_id + "' needs at least two waypoints");
    for (std::size_t i = 1; i < a.path.size(); ++i)
      if (!(a.path[i].t > a.path[i - 1].t)) fail("agent '" + a.agent_id + "' waypoint times must increase");
    for (const auto& [t0, t1] : a.hidden)
      if (!(t1 >= t0)) fail("agent '" + a.agent_id + "' has an inverted hidden interval");
  }
}

// Sampled frame indices inside [t0, t1].
std::vector<std::int64_t> sampled_frames(double t0, double t1, double fps, int skip) {
  const double s = static_cast<double>(skip);
  const auto k0 = static_cast<std::int64_t>(std::ceil(t0 * fps / s - 1e-9));
  const auto k1 = static_cast<std::int64_t>(std::floor(t1 * fps / s + 1e-9));
  std::vector<std::int64_t> out;
  for (std::int64_t k = k0; k <= k1; ++k) out.push_back(k * skip);
  return out;
}

bool hidden_at(const AgentScript& a, double t) {
  for (const auto& [t0, t1] : a.hidden)
    if (t >= t0 && t <= t1) return true;
  return false;
}

std::optional<TruePsm> analytic_psm(const AgentScript& vehicle, const AgentScript& pedestrian) {
  const auto& c = vehicle.path;
  const auto& p = pedestrian.path;
  for (std::size_t k = 0; k + 1 < c.size(); ++k) {
    const Vec2 dc = c[k + 1].world - c[k].world;
    if (norm(dc) == 0.0) continue;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const Vec2 dp = p[i + 1].world - p[i].world;
      const double denom = cross(dc, dp);
      if (norm(dp) == 0.0 || denom == 0.0) continue;
      const Vec2 w = p[i].world - c[k].world;
      const double s = cross(w, dp) / denom;
      const double u = cross(w, dc) / denom;
      if (s < 0.0 || s > 1.0 || u < 0.0 || u > 1.0) continue;
      TruePsm out;
      out.vehicle_id = vehicle.agent_id;
      out.pedestrian_id = pedestrian.agent_id;
      out.conflict_point = c[k].world + s * dc;
      const double tv = c[k].t + s * (c[k + 1].t - c[k].t);
      const double tp = p[i].t + u * (p[i + 1].t - p[i].t);
      out.seconds = tv - tp;
      return out;
    }
  }
  return std::nullopt;
}

TrueStop analytic_stop(const AgentScript& vehicle, const SpotConfig& spot) {
  TrueStop out{vehicle.agent_id, false, std::nullopt};
  const FeatureParams defaults;
  const double step = static_cast<double>(spot.frame_skip) / spot.fps;
  for (std::size_t i = 0; i + 1 < vehicle.path.size(); ++i) {
    const auto& a = vehicle.path[i];
    const auto& b = vehicle.path[i + 1];
    if (!(a.world == b.world)) continue;
    if (b.t - a.t < (defaults.stop_min_steps + 1) * step) continue;
    if (classify_vehicle_point(a.world, spot) != VehicleZone::BeforeCrosswalk) continue;
    out.stop = true;
    out.distance_m = distance_to_polygon_edges(a.world, spot.crosswalk_polygon_world);
    return out;
  }
  return out;
}

Waypoint wp(double t, double x, double y) { return {t, {x, y}}; }

AgentScript agent(std::string id, ObjectClass cls, std::vector<Waypoint> path) {
  AgentScript a;
  a.agent_id = std::move(id);
  a.object_class = cls;
  a.path = std::move(path);
  return a;
}

// Vehicle in the near lane travelling +x at constant speed, at x_at when t_at.
AgentScript straight_vehicle(std::string id, double speed, double x_at, double t_at,
                             double lane = kNearLane) {
  const double x0 = -24.0;
  const double x1 = 24.0;
  return agent(std::move(id), ObjectClass::Vehicle,
               {wp(t_at - (x_at - x0) / speed, x0, lane), wp(t_at + (x1 - x_at) / speed, x1, lane)});
}

// Pedestrian crossing at column x from y0 to y1, at y_at when t_at.
AgentScript crossing_pedestrian(std::string id, double x, double y0, double y1, double speed,
                                double y_at, double t_at) {
  const double before = std::abs(y_at - y0) / speed;
  const double total = std::abs(y1 - y0) / speed;
  return agent(std::move(id), ObjectClass::Pedestrian,
               {wp(t_at - before, x, y0), wp(t_at - before + total, x, y1)});
}

NamedScenario make(std::string name, std::vector<AgentScript> agents) {
  ScenarioSpec spec;
  spec.name = std::move(name);
  spec.spot = synthetic_spot("synth");
  spec.agents = std::move(agents);
  NamedScenario s{spec, generate(spec)};
  return s;
}

void shift(std::vector<AgentScript>& agents, double dt) {
  for (auto& a : agents) {
    for (auto& w : a.path) w.t += dt;
    for (auto& [t0, t1] : a.hidden) {
      t0 += dt;
      t1 += dt;
    }
  }
}

}  // namespace

Vec2 AgentScript::position_at(double t) const {
  if (t <= path.front().t) return path.front().world;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (t <= path[i].t) {
      const double s = (t - path[i - 1].t) / (path[i].t - path[i - 1].t);
      return path[i - 1].world + s * (path[i].world - path[i - 1].world);
    }
  }
  return path.back().world;
}

const TrueTrack* GroundTruth::track(const std::string& agent_id) const {
  for (const auto& t : tracks)
    if (t.agent_id == agent_id) return &t;
  return nullptr;
}

Eigen::Matrix3d synthetic_camera() {
  // Pinhole camera 18 m up, 16 m back from the road centreline, aimed at the
  // road just past the centreline.
  const Eigen::Vector3d centre(0.0, -16.0, 18.0);
  const Eigen::Vector3d target(0.0, 1.0, 0.0);
  const Eigen::Vector3d forward = (target - centre).normalized();
  const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  const Eigen::Vector3d t = -r * centre;
  Eigen::Matrix3d k;
  k << 560.0, 0.0, 640.0, 0.0, 560.0, 360.0, 0.0, 0.0, 1.0;
  Eigen::Matrix3d plane;
  plane.col(0) = r.col(0);
  plane.col(1) = r.col(1);
  plane.col(2) = t;
  Eigen::Matrix3d h = k * plane;
  return h / h(2, 2);
}

SpotConfig synthetic_spot(std::string spot_id, bool signalized, double fps, int frame_skip) {
  SpotConfig s;
  s.spot_id = std::move(spot_id);
  s.crosswalk_length_m = 2.0 * kRoadHalfWidth;
  s.lanes = 2;
  s.signalized = signalized;
  s.speed_limit_kmh = 30.0;
  s.frame_size = {1280, 720};
  s.fps = fps;
  s.frame_skip = frame_skip;
  const Eigen::Matrix3d h = synthetic_camera();
  for (Vec2 w : {Vec2{-20, -6}, Vec2{20, -6}, Vec2{20, 6}, Vec2{-20, 6}, Vec2{0, 0}, Vec2{4, -4}})
    s.calibration.push_back({apply(h, w), w});
  s.crosswalk_polygon_world = {{0, -kRoadHalfWidth}, {4, -kRoadHalfWidth}, {4, kRoadHalfWidth},
                               {0, kRoadHalfWidth}};
  s.sidewalk_polygons_world = {
      {{-30, -kSidewalkOuter}, {30, -kSidewalkOuter}, {30, -kRoadHalfWidth}, {-30, -kRoadHalfWidth}},
      {{-30, kRoadHalfWidth}, {30, kRoadHalfWidth}, {30, kSidewalkOuter}, {-30, kSidewalkOuter}}};
  return s;
}

SynthOutput generate(const ScenarioSpec& spec) {
  return generate(spec, MotionParams::for_frame_skip(spec.spot.frame_skip));
}

SynthOutput generate(const ScenarioSpec& spec, const MotionParams& motion) {
  check_spec(spec);
  const SpotConfig& spot = spec.spot;
  const Eigen::Matrix3d camera = synthetic_camera();
  const double w = spot.frame_size.width;
  const double h = spot.frame_size.height;

  struct Sample {
    std::size_t agent;
    Vec2 pixel;
  };
  std::map<std::int64_t, std::vector<Sample>> frames;
  SynthOutput out;
  for (std::size_t ai = 0; ai < spec.agents.size(); ++ai) {
    const auto& a = spec.agents[ai];
    TrueTrack tt{a.agent_id, a.object_class, {}, {}, {}, {}};
    for (std::int64_t f : sampled_frames(a.start(), a.end(), spot.fps, spot.frame_skip)) {
      const double t = static_cast<double>(f) / spot.fps;
      if (hidden_at(a, t)) continue;
      const Vec2 world = a.position_at(t);
      const Vec2 pixel = apply(camera, world);
      if (!(pixel.x >= 0.0 && pixel.x < w && pixel.y >= 0.0 && pixel.y < h))
        throw Error(ErrorCode::InvalidSpec, "scenario '" + spec.name + "': agent '" + a.agent_id +
                                                "' leaves the frame at t=" + std::to_string(t));
      if (!tt.frames.empty()) {
        const double dt = static_cast<double>(f - tt.frames.back()) / spot.fps;
        tt.speeds_kmh.push_back(distance(world, tt.world.back()) / dt * kMsToKmh);
      }
      tt.frames.push_back(f);
      tt.world.push_back(world);
      tt.pixel.push_back(pixel);
      frames[f].push_back({ai, pixel});
    }
    out.truth.tracks.push_back(std::move(tt));
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<DetectionRecord> visible;
  for (auto& [f, samples] : frames) {
    std::sort(samples.begin(), samples.end(), [&](const Sample& a, const Sample& b) {
      return std::tie(a.pixel.x, spec.agents[a.agent].agent_id) <
             std::tie(b.pixel.x, spec.agents[b.agent].agent_id);
    });
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& a = spec.agents[samples[k].agent];
      DetectionRecord d;
      d.spot_id = spot.spot_id;
      d.frame_index = f;
      d.object_class = a.object_class;
      d.detection_id = "d" + std::to_string(k);
      d.contact_point_px = samples[k].pixel;

      DetectionRecord hinted = d;
      if (a.object_class == ObjectClass::Vehicle) hinted.track_hint = a.agent_id;
      visible.push_back(std::move(hinted));

      const double nx = noise(rng);
      const double ny = noise(rng);
      const double draw = unit(rng);
      if (spec.drop_probability > 0.0 && draw < spec.drop_probability) continue;
      if (spec.pixel_noise_sigma > 0.0) {
        d.contact_point_px.x = std::clamp(d.contact_point_px.x + spec.pixel_noise_sigma * nx, 0.0, w - 1e-6);
        d.contact_point_px.y = std::clamp(d.contact_point_px.y + spec.pixel_noise_sigma * ny, 0.0, h - 1e-6);
      }
      out.owners[{f, d.detection_id}] = a.agent_id;
      out.detections.push_back(std::move(d));
    }
  }

  out.truth.spans = segment_scenes(visible, std::nullopt, motion);
  for (const auto& v : spec.agents) {
    if (v.object_class != ObjectClass::Vehicle) continue;
    if (spot.crosswalk_polygon_world.size() >= 3) out.truth.stops.push_back(analytic_stop(v, spot));
    for (const auto& p : spec.agents) {
      if (p.object_class != ObjectClass::Pedestrian) continue;
      if (auto psm = analytic_psm(v, p)) out.truth.psm.push_back(*psm);
    }
  }
  return out;
}

std::vector<NamedScenario> standard_corpus() {
  std::vector<NamedScenario> corpus;

  corpus.push_back(make("single_pass", {straight_vehicle("v1", 10.0, -24.0, 0.0)}));

  {
    // Approach at 10 m/s, wait 2 s five metres short of the crosswalk while a
    // pedestrian crosses, then leave at 7 m/s.
    auto v = agent("v1", ObjectClass::Vehicle,
                   {wp(0.0, -24.0, kNearLane), wp(1.9, -5.0, kNearLane), wp(3.9, -5.0, kNearLane),
                    wp(3.9 + 29.0 / 7.0, 24.0, kNearLane)});
    auto p = crossing_pedestrian("p1", 2.0, -6.5, 6.5, 1.4, -6.5, 0.6);
    corpus.push_back(make("stop_and_go", {v, p}));
  }

  {
    // Diagonal paths forming an X inside the crosswalk, half a second apart.
    auto a = agent("p1", ObjectClass::Pedestrian, {wp(0.0, 0.5, -6.5), wp(8.0, 3.5, 6.5)});
    auto b = agent("p2", ObjectClass::Pedestrian, {wp(0.5, 3.5, -6.5), wp(8.5, 0.5, 6.5)});
    auto v = straight_vehicle("v1", 6.0, -24.0, 0.0, 2.0);
    corpus.push_back(make("crossing_pair", {v, a, b}));
  }

  corpus.push_back(make("parallel_pair", {straight_vehicle("v1", 9.0, -24.0, 0.0, kNearLane),
                                          straight_vehicle("v2", 9.0, -24.0, 0.0, 2.0)}));

  {
    auto v = straight_vehicle("v1", 8.0, -24.0, 0.0);
    auto p = crossing_pedestrian("p1", 3.0, 6.5, -6.5, 1.4, 6.5, 0.0);
    p.hidden = {{2.35, 2.70}};  // three sampled steps
    corpus.push_back(make("occlusion_gap", {v, p}));
  }

  {
    // Pedestrian clears the conflict point 0.8 s ahead of the vehicle.
    const double t_ped = 4.0;
    auto p = crossing_pedestrian("p1", 2.0, -6.5, 6.5, 1.4, kNearLane, t_ped);
    auto v = straight_vehicle("v1", 10.0, 2.0, t_ped + 0.8);
    corpus.push_back(make("near_miss", {v, p}));
  }

  {
    // Vehicle passes the conflict point 1.5 s before the pedestrian.
    const double t_veh = 3.0;
    auto v = straight_vehicle("v1", 10.0, 1.0, t_veh);
    auto p = crossing_pedestrian("p1", 1.0, -6.5, 6.5, 1.3, kNearLane, t_veh + 1.5);
    corpus.push_back(make("vehicle_first", {v, p}));
  }

  {
    auto v = straight_vehicle("v1", 7.0, 3.0, 5.0);
    auto p1 = crossing_pedestrian("p1", 3.0, -6.5, 6.5, 1.4, kNearLane, 2.5);
    auto p2 = crossing_pedestrian("p2", 1.0, 6.5, -6.5, 1.2, 6.5, 0.5);
    auto p3 = agent("p3", ObjectClass::Pedestrian, {wp(0.0, -10.0, 5.5), wp(12.0, 6.0, 5.5)});
    corpus.push_back(make("multi_pedestrian", {v, p1, p2, p3}));
  }
  return corpus;
}

ScenarioSpec crossing_stress_scenario(std::uint64_t seed, double pixel_noise_sigma) {
  ScenarioSpec spec;
  spec.name = "crossing_stress";
  spec.spot = synthetic_spot("stress");
  spec.seed = seed;
  spec.pixel_noise_sigma = pixel_noise_sigma;
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> speed(1.2, 1.8);
  std::uniform_real_distribution<double> column(1.0, 3.0);
  std::uniform_real_distribution<double> offset(0.1, 0.2);
  std::uniform_real_distribution<double> delay(-0.3, 0.3);
  const double x = column(rng);
  const double dx = offset(rng);
  const double sa = speed(rng);
  const double sb = speed(rng);
  const double meet = 5.0 + delay(rng);
  spec.agents.push_back(crossing_pedestrian("p1", x, -6.5, 6.5, sa, 0.0, meet));
  spec.agents.push_back(crossing_pedestrian("p2", x + dx, 6.5, -6.5, sb, 0.0, meet));
  spec.agents.push_back(straight_vehicle("v1", 5.0, -24.0, 0.0, 2.0));
  double first = 0.0;
  for (const auto& a : spec.agents) first = std::min(first, a.start());
  shift(spec.agents, -first);
  return spec;
}

CrossingPair random_crossing_pair(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };
  const int skip = 1 + static_cast<int>(unit(rng) * 5.0);
  const double fps = 25.0;
  const double step = skip / fps;

  auto build = [&](ObjectClass cls, int id, Vec2 start, Vec2 velocity, std::int64_t first_step,
                   int steps) {
    Trajectory t;
    t.object_id = id;
    t.object_class = cls;
    for (int j = 0; j < steps; ++j) {
      const std::int64_t frame = (first_step + j) * skip;
      const double time = static_cast<double>(frame) / fps;
      const Vec2 p = start + (static_cast<double>(j) * step) * velocity;
      const WorldPoint w{p.x, p.y, time};
      t.points.push_back({frame, "d" + std::to_string(id), p, p, w, w});
    }
    return t;
  };

  // A shared point both paths may pass through, with independent arrival times.
  const Vec2 conflict{between(-5.0, 5.0), between(-5.0, 5.0)};
  const double hv = between(0.0, 2.0 * 3.14159265358979323846);
  const double hp = between(0.0, 2.0 * 3.14159265358979323846);
  const Vec2 vv = between(3.0, 15.0) * Vec2{std::cos(hv), std::sin(hv)};
  const Vec2 vp = between(0.8, 2.0) * Vec2{std::cos(hp), std::sin(hp)};
  const int nv = 10 + static_cast<int>(unit(rng) * 40.0);
  const int np = 10 + static_cast<int>(unit(rng) * 60.0);
  const std::int64_t v0 = static_cast<std::int64_t>(unit(rng) * 30.0);
  const std::int64_t p0 = static_cast<std::int64_t>(unit(rng) * 30.0);
  // Step at which each agent would reach the conflict point; outside the
  // sampled range the paths do not meet.
  const double kv = between(-5.0, nv + 5.0);
  const double kp = between(-5.0, np + 5.0);

  CrossingPair pair;
  pair.seconds_per_step = step;
  pair.vehicle = build(ObjectClass::Vehicle, 0, conflict - (kv * step) * vv, vv, v0, nv);
  pair.pedestrian = build(ObjectClass::Pedestrian, 1, conflict - (kp * step) * vp, vp, p0, np);
  return pair;
}

std::vector<SpotCorpus> synth_corpus(const CorpusParams& params) {
  struct SpotPlan {
    const char* id;
    bool signalized;
  };
  const SpotPlan plans[] = {{"A", true}, {"B", true}, {"D", false}, {"E", false}, {"G", false}};
  std::vector<SpotCorpus> out;
  std::uint64_t spot_index = 0;
  for (const auto& plan : plans) {
    ++spot_index;
    std::mt19937_64 rng(params.seed * 1000003ULL + spot_index);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };

    ScenarioSpec spec;
    spec.name = std::string("corpus-") + plan.id;
    spec.spot = synthetic_spot(plan.id, plan.signalized);
    spec.pixel_noise_sigma = params.pixel_noise_sigma;
    spec.drop_probability = params.drop_probability;
    spec.seed = params.seed * 7919ULL + spot_index;

    double clock = 1.0;
    for (int n = 0; n < params.scenes_per_spot; ++n) {
      const std::string tag = std::to_string(n);
      std::vector<AgentScript> scene;
      const double kind = unit(rng);
      if (kind < 0.4) {
        scene.push_back(straight_vehicle("v" + tag, between(6.0, 9.0), -24.0, 0.0));
      } else if (kind < 0.5) {
        // Pedestrian strolling along the far sidewalk, never near the crosswalk.
        const double speed = between(1.0, 1.6);
        scene.push_back(agent("p" + tag, ObjectClass::Pedestrian,
                              {wp(0.0, -10.0, 5.5), wp(16.0 / speed, 6.0, 5.5)}));
        scene.push_back(straight_vehicle("v" + tag, between(4.0, 7.0), 0.0, between(2.0, 6.0)));
      } else {
        const double column = between(0.6, 3.4);
        const bool up = unit(rng) < 0.5;
        const double y0 = up ? -6.5 : 6.5;
        const double ped_speed = between(1.1, 1.7);
        const double ped_at_lane = std::abs(kNearLane - y0) / ped_speed;
        scene.push_back(crossing_pedestrian("p" + tag, column, y0, -y0, ped_speed, y0, 0.0));

        const double speed = between(3.5, 6.5);
        const double margin = between(-4.5, 5.0);
        const double p_stop = plan.signalized ? 0.4 : std::clamp(0.9 - 0.17 * std::abs(margin), 0.03, 0.95);
        const double arrive = ped_at_lane + margin;
        if (unit(rng) < p_stop) {
          // The wait is absorbed before the conflict point, so the margin is
          // still the realized PSM.
          const double stop_x = -between(2.0, 8.0);
          const double dwell = between(1.0, 3.0);
          const double t_stop = arrive - (column - stop_x) / speed - dwell;
          const double t0 = t_stop - (stop_x + 24.0) / speed;
          scene.push_back(agent("v" + tag, ObjectClass::Vehicle,
                                {wp(t0, -24.0, kNearLane), wp(t_stop, stop_x, kNearLane),
                                 wp(t_stop + dwell, stop_x, kNearLane),
                                 wp(t_stop + dwell + (24.0 - stop_x) / speed, 24.0, kNearLane)}));
        } else {
          scene.push_back(straight_vehicle("v" + tag, speed, column, arrive));
        }
      }
      double first = scene.front().start();
      double last = scene.front().end();
      for (const auto& a : scene) {
        first = std::min(first, a.start());
        last = std::max(last, a.end());
      }
      shift(scene, clock - first);
      clock += (last - first) + between(1.0, 2.0);
      for (auto& a : scene) spec.agents.push_back(std::move(a));
    }
    out.push_back({spec.spot, generate(spec)});
  }
  return out;
}

GrayFrame render_box_frame(std::int64_t frame_index, int width, int height, int box_x, int box_y,
                           int box_size, std::uint8_t background, std::uint8_t box) {
  GrayFrame f;
  f.frame_index = frame_index;
  f.width = width;
  f.height = height;
  f.pixels.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), background);
  for (int y = std::max(0, box_y); y < std::min(height, box_y + box_size); ++y)
    for (int x = std::max(0, box_x); x < std::min(width, box_x + box_size); ++x)
      f.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = box;
  return f;
}

}  // namespace pedrisk::synth
