#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pedrisk/features.hpp"
#include "pedrisk/geometry.hpp"
#include "pedrisk/motion_gate.hpp"
#include "pedrisk/pipeline.hpp"
#include "pedrisk/synth.hpp"
#include "pedrisk/tracker.hpp"

namespace testsupport {

using namespace pedrisk;

// Trajectory whose pixel and world coordinates coincide (unit scale camera).
inline Trajectory world_track(int id, ObjectClass cls, const std::vector<Vec2>& points,
                              std::int64_t first_frame = 0, int frame_skip = 1, double fps = 5.0) {
  Trajectory t;
  t.object_id = id;
  t.object_class = cls;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const std::int64_t f = first_frame + static_cast<std::int64_t>(j) * frame_skip;
    const WorldPoint w{points[j].x, points[j].y, static_cast<double>(f) / fps};
    t.points.push_back({f, "d" + std::to_string(id), points[j], points[j], w, w});
  }
  return t;
}

inline std::vector<Vec2> line(Vec2 start, Vec2 step, int n) {
  std::vector<Vec2> out;
  for (int j = 0; j < n; ++j) out.push_back(start + static_cast<double>(j) * step);
  return out;
}

struct ScenarioRun {
  SegmentResult segment;
  std::vector<SceneTracks> tracks;
  std::vector<SceneFeatures> features;
};

inline ScenarioRun run_in_memory(const SpotConfig& spot, const std::vector<DetectionRecord>& detections,
                                 TrackerParams tracker = {}, FeatureParams features = {},
                                 unsigned workers = 1) {
  ScenarioRun r;
  r.segment = segment_spot(detections, spot, std::nullopt,
                           MotionParams::for_frame_skip(spot.frame_skip), tracker);
  r.tracks = track_spot(r.segment.detections, r.segment.spans, spot, tracker, workers);
  r.features = extract_spot(r.tracks, spot, features, workers);
  return r;
}

// Agent that owns every point of a trajectory, or nullopt when the points mix owners.
inline std::optional<std::string> sole_owner(const Trajectory& t, const TruthMap& owners) {
  std::set<std::string> seen;
  for (const auto& p : t.points) seen.insert(owners.at({p.frame, p.detection_id}));
  if (seen.size() != 1) return std::nullopt;
  return *seen.begin();
}

inline const SceneTracks* scene_tracks(const std::vector<SceneTracks>& all, const std::string& id) {
  for (const auto& s : all)
    if (s.span.scene_id == id) return &s;
  return nullptr;
}

inline const Trajectory* trajectory(const SceneTracks& s, int object_id) {
  for (const auto& t : s.trajectories)
    if (t.object_id == object_id) return &t;
  return nullptr;
}

// Dense-interpolation PSM: both tracks resampled at `resolution` sub-steps per
// sampled step; the vehicle's dense path is scanned for a side change against
// the pedestrian's dense path, and arrival times are read off the dense samples.
struct DensePsm {
  double seconds = 0.0;
  Vec2 point;
};

struct DenseSample {
  Vec2 p;
  double t;
};

inline std::vector<DenseSample> densify(const Trajectory& tr, int resolution) {
  std::vector<DenseSample> out;
  for (std::size_t j = 0; j + 1 < tr.points.size(); ++j) {
    const auto& a = tr.points[j].world;
    const auto& b = tr.points[j + 1].world;
    for (int s = 0; s < resolution; ++s) {
      const double u = static_cast<double>(s) / resolution;
      out.push_back({{a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)}, a.t + u * (b.t - a.t)});
    }
  }
  const auto& e = tr.points.back().world;
  out.push_back({{e.x, e.y}, e.t});
  return out;
}

// Valid for straight-line pedestrian paths, which is what the randomized
// crossing pairs produce.
inline std::optional<DensePsm> dense_psm_oracle(const Trajectory& vehicle, const Trajectory& pedestrian,
                                                int resolution = 1000) {
  const auto dv = densify(vehicle, resolution);
  const auto dp = densify(pedestrian, resolution);
  const Vec2 p0 = dp.front().p;
  const Vec2 dir = dp.back().p - p0;
  const double len = norm(dir);
  if (len == 0.0) return std::nullopt;
  const Vec2 u = (1.0 / len) * dir;
  auto side = [&](Vec2 q) { return u.x * (q.y - p0.y) - u.y * (q.x - p0.x); };
  for (std::size_t j = 0; j + 1 < dv.size(); ++j) {
    const double s0 = side(dv[j].p);
    const double s1 = side(dv[j + 1].p);
    if ((s0 > 0.0) == (s1 > 0.0)) continue;
    const double a = s0 / (s0 - s1);
    const Vec2 x = dv[j].p + a * (dv[j + 1].p - dv[j].p);
    const double tv = dv[j].t + a * (dv[j + 1].t - dv[j].t);
    const double along = dot(x - p0, u);
    if (along < 0.0 || along > len) return std::nullopt;
    std::size_t best = 0;
    double best_d = distance(dp[0].p, x);
    for (std::size_t i = 1; i < dp.size(); ++i) {
      const double d = distance(dp[i].p, x);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return DensePsm{tv - dp[best].t, x};
  }
  return std::nullopt;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(b));
}

}  // namespace testsupport
