#include "pedrisk/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "pedrisk/error.hpp"
#include "pedrisk/features.hpp"

namespace pedrisk {

namespace {

constexpr double kInitialVelocityVariance = 1e4;  // (px/step)^2, effectively uninformed

const Eigen::Matrix4d& transition() {
  static const Eigen::Matrix4d f = [] {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 2) = 1.0;
    m(1, 3) = 1.0;
    return m;
  }();
  return f;
}

// Piecewise-constant white acceleration over one step.
const Eigen::Matrix4d& unit_process_noise() {
  static const Eigen::Matrix4d q = [] {
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m(0, 0) = m(1, 1) = 0.25;
    m(0, 2) = m(2, 0) = m(1, 3) = m(3, 1) = 0.5;
    m(2, 2) = m(3, 3) = 1.0;
    return m;
  }();
  return q;
}

std::int64_t steps_between(std::int64_t from, std::int64_t to, int frame_skip) {
  const double steps = static_cast<double>(to - from) / static_cast<double>(frame_skip);
  return std::max<std::int64_t>(1, std::llround(steps));
}

// Square Hungarian (Jonker-Volgenant potentials form), minimizing total cost.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

void TrackerParams::validate() const {
  if (!(gate_threshold_vehicle > 0.0) || !(gate_threshold_pedestrian > 0.0))
    throw Error(ErrorCode::InvalidParameter, "gate thresholds must be positive");
  if (!(process_noise >= 0.0) || !(measurement_noise > 0.0))
    throw Error(ErrorCode::InvalidParameter, "noise levels must be non-negative (measurement > 0)");
  if (max_coast_frames < 0) throw Error(ErrorCode::InvalidParameter, "max_coast_frames must be >= 0");
  if (frame_skip < 1) throw Error(ErrorCode::InvalidParameter, "frame_skip must be >= 1");
}

TrackState start_track(int object_id, const DetectionRecord& d, const TrackerParams& params) {
  TrackState s;
  s.object_id = object_id;
  s.object_class = d.object_class;
  s.mean << d.contact_point_px.x, d.contact_point_px.y, 0.0, 0.0;
  s.covariance = Eigen::Vector4d(params.measurement_noise, params.measurement_noise,
                                 kInitialVelocityVariance, kInitialVelocityVariance)
                     .asDiagonal();
  s.last_frame = d.frame_index;
  s.state_frame = d.frame_index;
  s.updates = 1;
  s.points.push_back({d.frame_index, d.detection_id, d.contact_point_px, d.contact_point_px});
  return s;
}

TrackState kalman_predict(const TrackState& state, double process_noise) {
  TrackState out = state;
  const Eigen::Matrix4d& f = transition();
  out.mean = f * state.mean;
  out.covariance = f * state.covariance * f.transpose() + process_noise * unit_process_noise();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

TrackState kalman_update(const TrackState& state, Vec2 z, double measurement_noise) {
  TrackState out = state;
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = h(1, 1) = 1.0;
  const Eigen::Matrix2d r = measurement_noise * Eigen::Matrix2d::Identity();
  const Eigen::Matrix4d& p = state.covariance;

  const Eigen::Vector2d innovation(z.x - state.mean(0), z.y - state.mean(1));
  const Eigen::Matrix2d s = h * p * h.transpose() + r;
  const Eigen::Matrix<double, 4, 2> k = p * h.transpose() * s.inverse();
  out.mean = state.mean + k * innovation;

  const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - k * h;
  out.covariance = ikh * p * ikh.transpose() + k * r * k.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  out.updates = state.updates + 1;
  return out;
}

Assignment assign(std::span<const TrackState> tracks, std::span<const DetectionRecord> detections,
                  const TrackerParams& params) {
  Assignment result;
  std::vector<char> track_used(tracks.size(), 0), det_used(detections.size(), 0);

  auto anchor = [&](const TrackState& t) {
    return params.association == AssociationMode::KalmanPrediction ? t.position()
                                                                   : t.last_measurement();
  };

  if (params.matching == MatchingMode::Greedy) {
    struct Candidate {
      double dist;
      std::size_t track;
      std::size_t det;
    };
    std::vector<Candidate> candidates;
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
      const Vec2 a = anchor(tracks[ti]);
      for (std::size_t di = 0; di < detections.size(); ++di) {
        if (detections[di].object_class != tracks[ti].object_class) continue;
        const double dist = distance(a, detections[di].contact_point_px);
        if (dist > params.gate_for(tracks[ti].object_class)) continue;
        candidates.push_back({dist, ti, di});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& x, const Candidate& y) {
      return std::tie(x.dist, detections[x.det].detection_id, tracks[x.track].object_id) <
             std::tie(y.dist, detections[y.det].detection_id, tracks[y.track].object_id);
    });
    for (const auto& c : candidates) {
      if (track_used[c.track] || det_used[c.det]) continue;
      track_used[c.track] = det_used[c.det] = 1;
      result.matches.emplace_back(c.track, c.det);
    }
  } else {
    for (ObjectClass cls : {ObjectClass::Vehicle, ObjectClass::Pedestrian}) {
      std::vector<std::size_t> ts, ds;
      for (std::size_t i = 0; i < tracks.size(); ++i)
        if (tracks[i].object_class == cls) ts.push_back(i);
      for (std::size_t i = 0; i < detections.size(); ++i)
        if (detections[i].object_class == cls) ds.push_back(i);
      if (ts.empty() || ds.empty()) continue;
      std::sort(ts.begin(), ts.end(),
                [&](auto a, auto b) { return tracks[a].object_id < tracks[b].object_id; });
      std::sort(ds.begin(), ds.end(), [&](auto a, auto b) {
        return detections[a].detection_id < detections[b].detection_id;
      });
      const double gate = params.gate_for(cls);
      const double big = 1e6 * (gate + 1.0);
      const std::size_t n = std::max(ts.size(), ds.size());
      std::vector<std::vector<double>> cost(n, std::vector<double>(n, big));
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const Vec2 a = anchor(tracks[ts[i]]);
        for (std::size_t j = 0; j < ds.size(); ++j) {
          const double dist = distance(a, detections[ds[j]].contact_point_px);
          if (dist <= gate) cost[i][j] = dist;
        }
      }
      const auto match = hungarian(cost);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const int j = match[i];
        if (j < 0 || static_cast<std::size_t>(j) >= ds.size() || cost[i][j] >= big) continue;
        track_used[ts[i]] = det_used[ds[j]] = 1;
        result.matches.emplace_back(ts[i], ds[j]);
      }
    }
    std::sort(result.matches.begin(), result.matches.end());
  }

  for (std::size_t di = 0; di < detections.size(); ++di)
    if (!det_used[di]) result.new_tracks.push_back(di);
  std::sort(result.new_tracks.begin(), result.new_tracks.end(), [&](auto a, auto b) {
    return detections[a].detection_id < detections[b].detection_id;
  });
  for (std::size_t ti = 0; ti < tracks.size(); ++ti)
    if (!track_used[ti]) result.coasting.push_back(ti);
  return result;
}

std::vector<Trajectory> track_scene(std::span<const DetectionRecord> detections,
                                    const TrackerParams& params, const Calibration& calib) {
  params.validate();
  std::vector<TrackState> active;
  std::vector<TrackState> finished;
  int next_id = 0;

  std::size_t begin = 0;
  while (begin < detections.size()) {
    const std::int64_t frame = detections[begin].frame_index;
    std::size_t end = begin;
    while (end < detections.size() && detections[end].frame_index == frame) ++end;
    if (end < detections.size() && detections[end].frame_index < frame)
      throw Error(ErrorCode::NonMonotoneFrame, "detections must be frame ordered");
    const std::span<const DetectionRecord> batch = detections.subspan(begin, end - begin);

    // Close tracks that have coasted too long, predict the rest to this frame.
    std::vector<TrackState> still_active;
    for (auto& t : active) {
      const std::int64_t missed = steps_between(t.last_frame, frame, params.frame_skip) - 1;
      if (missed > params.max_coast_frames) {
        finished.push_back(std::move(t));
        continue;
      }
      const std::int64_t steps = steps_between(t.state_frame, frame, params.frame_skip);
      for (std::int64_t s = 0; s < steps; ++s) t = kalman_predict(t, params.process_noise);
      t.state_frame = frame;
      still_active.push_back(std::move(t));
    }
    active = std::move(still_active);

    const Assignment a = assign(active, batch, params);
    for (const auto& [ti, di] : a.matches) {
      TrackState& t = active[ti];
      const DetectionRecord& d = batch[di];
      t = kalman_update(t, d.contact_point_px, params.measurement_noise);
      t.last_frame = frame;
      t.points.push_back({frame, d.detection_id, d.contact_point_px, t.position()});
    }
    for (std::size_t di : a.new_tracks) active.push_back(start_track(next_id++, batch[di], params));
    begin = end;
  }
  for (auto& t : active) finished.push_back(std::move(t));

  std::sort(finished.begin(), finished.end(),
            [](const TrackState& a, const TrackState& b) { return a.object_id < b.object_id; });
  std::vector<Trajectory> out;
  out.reserve(finished.size());
  for (const auto& t : finished) {
    Trajectory traj;
    traj.object_id = t.object_id;
    traj.object_class = t.object_class;
    traj.points.reserve(t.points.size());
    for (const auto& p : t.points) {
      traj.points.push_back({p.frame, p.detection_id, p.raw_px, p.smoothed_px,
                             project(p.raw_px, p.frame, calib),
                             project(p.smoothed_px, p.frame, calib)});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::vector<std::string> compressed_labels(const Trajectory& t, const TruthMap& truth) {
  std::vector<std::string> runs;
  for (const auto& p : t.points) {
    auto it = truth.find({p.frame, p.detection_id});
    if (it == truth.end()) continue;
    if (runs.empty() || runs.back() != it->second) runs.push_back(it->second);
  }
  return runs;
}

bool precedes(const std::vector<std::string>& runs, const std::string& a, const std::string& b) {
  auto ia = std::find(runs.begin(), runs.end(), a);
  if (ia == runs.end()) return false;
  return std::find(ia + 1, runs.end(), b) != runs.end();
}

const TrajectoryPoint* point_at(const Trajectory& t, std::int64_t frame) {
  auto it = std::lower_bound(t.points.begin(), t.points.end(), frame,
                             [](const TrajectoryPoint& p, std::int64_t f) { return p.frame < f; });
  return it != t.points.end() && it->frame == frame ? &*it : nullptr;
}

SceneValidation validate_with_truth(std::string scene_id, std::span<const Trajectory> trajs,
                                    const TruthMap& truth, const TrackerParams& params) {
  SceneValidation v{std::move(scene_id)};
  std::vector<std::vector<std::string>> runs;
  for (const auto& t : trajs) runs.push_back(compressed_labels(t, truth));

  std::set<std::size_t> in_crossing;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t j = i + 1; j < trajs.size(); ++j) {
      bool swapped = false;
      for (const auto& a : runs[i]) {
        for (const auto& b : runs[i]) {
          if (a == b) continue;
          if (precedes(runs[i], a, b) && precedes(runs[j], b, a)) swapped = true;
        }
      }
      if (swapped) {
        ++v.crossing;
        in_crossing.insert(i);
        in_crossing.insert(j);
      }
    }
  }
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    std::set<std::string> distinct(runs[i].begin(), runs[i].end());
    if (distinct.size() >= 2 && !in_crossing.count(i)) ++v.directivity;
  }

  std::map<std::string, std::vector<std::pair<std::int64_t, int>>> coverage;
  for (const auto& t : trajs)
    for (const auto& p : t.points)
      if (auto it = truth.find({p.frame, p.detection_id}); it != truth.end())
        coverage[it->second].emplace_back(p.frame, t.object_id);
  for (auto& [object, seq] : coverage) {
    std::sort(seq.begin(), seq.end());
    for (std::size_t k = 1; k < seq.size(); ++k) {
      if (seq[k].second == seq[k - 1].second) continue;
      const std::int64_t missed = steps_between(seq[k - 1].first, seq[k].first, params.frame_skip) - 1;
      if (missed > params.max_coast_frames) ++v.connectivity;
    }
  }
  return v;
}

SceneValidation validate_heuristic(std::string scene_id, std::span<const Trajectory> trajs,
                                   const TrackerParams& params) {
  SceneValidation v{std::move(scene_id)};
  std::set<std::size_t> restarted;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t j = 0; j < trajs.size(); ++j) {
      if (i == j || trajs[i].object_class != trajs[j].object_class || restarted.count(j)) continue;
      const auto& a = trajs[i];
      const auto& b = trajs[j];
      if (b.first_frame() <= a.last_frame()) continue;
      const std::int64_t missed = steps_between(a.last_frame(), b.first_frame(), params.frame_skip) - 1;
      if (missed <= params.max_coast_frames || missed > 3 * params.max_coast_frames + 3) continue;
      const double reach = params.gate_for(a.object_class) * static_cast<double>(missed + 1);
      if (distance(a.points.back().raw_px, b.points.front().raw_px) <= reach) {
        ++v.connectivity;
        restarted.insert(j);
      }
    }
  }

  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t j = i + 1; j < trajs.size(); ++j) {
      const auto& a = trajs[i];
      const auto& b = trajs[j];
      if (a.object_class != b.object_class) continue;
      const double gate = params.gate_for(a.object_class);
      for (std::size_t k = 1; k < a.points.size(); ++k) {
        const auto* b0 = point_at(b, a.points[k - 1].frame);
        const auto* b1 = point_at(b, a.points[k].frame);
        if (!b0 || !b1) continue;
        const bool close = distance(a.points[k - 1].raw_px, b0->raw_px) < gate ||
                           distance(a.points[k].raw_px, b1->raw_px) < gate;
        if (close && segments_intersect(a.points[k - 1].raw_px, a.points[k].raw_px, b0->raw_px,
                                        b1->raw_px)) {
          ++v.crossing;
          break;
        }
      }
    }
  }

  const double cos_limit = std::cos(120.0 * 3.14159265358979323846 / 180.0);
  for (const auto& t : trajs) {
    const double min_step = params.gate_for(t.object_class) / 4.0;
    for (std::size_t k = 2; k < t.points.size(); ++k) {
      const Vec2 d0 = t.points[k - 1].raw_px - t.points[k - 2].raw_px;
      const Vec2 d1 = t.points[k].raw_px - t.points[k - 1].raw_px;
      if (norm(d0) < min_step || norm(d1) < min_step) continue;
      if (dot(d0, d1) / (norm(d0) * norm(d1)) < cos_limit) {
        ++v.directivity;
        break;
      }
    }
  }
  return v;
}

}  // namespace

SceneValidation validate_scene(std::string scene_id, std::span<const Trajectory> trajectories,
                               const TruthMap* truth, const TrackerParams& params) {
  return truth ? validate_with_truth(std::move(scene_id), trajectories, *truth, params)
               : validate_heuristic(std::move(scene_id), trajectories, params);
}

TrajectoryReport summarize_validation(std::vector<SceneValidation> scenes) {
  TrajectoryReport r;
  for (const auto& s : scenes) {
    r.connectivity += s.connectivity;
    r.crossing += s.crossing;
    r.directivity += s.directivity;
    if (s.violated()) ++r.violating_scenes;
  }
  r.accuracy = scenes.empty() ? 1.0
                              : 1.0 - static_cast<double>(r.violating_scenes) /
                                          static_cast<double>(scenes.size());
  r.scenes = std::move(scenes);
  return r;
}

TrajectoryReport validate_trajectories(std::span<const ValidationInput> scenes,
                                       const TrackerParams& params) {
  std::vector<SceneValidation> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(validate_scene(s.scene_id, s.trajectories, s.truth, params));
  return summarize_validation(std::move(out));
}

}  // namespace pedrisk
