#include <doctest.h>

#include <random>
#include <set>

#include "pedrisk/synth.hpp"
#include "pedrisk/tracker.hpp"

using namespace pedrisk;

namespace {

DetectionRecord det(std::int64_t frame, ObjectClass cls, std::string id, Vec2 p) {
  DetectionRecord d;
  d.spot_id = "S";
  d.frame_index = frame;
  d.object_class = cls;
  d.contact_point_px = p;
  d.detection_id = std::move(id);
  return d;
}

TrackState state_at(Vec2 p, Vec2 v, ObjectClass cls = ObjectClass::Pedestrian, int id = 0) {
  TrackState s;
  s.object_id = id;
  s.object_class = cls;
  s.mean << p.x, p.y, v.x, v.y;
  s.covariance = Eigen::Matrix4d::Identity();
  return s;
}

const Calibration kUnit = Calibration::from_scale(1.0, 25.0, 1);

// Two pedestrians on an X: A rises, B falls, paths cross between steps 2 and 3.
struct XScene {
  std::vector<DetectionRecord> detections;
  TruthMap owners;
};

XScene x_scene() {
  XScene s;
  for (int f = 0; f < 8; ++f) {
    const Vec2 a{100.0 + 10.0 * f, 100.0 + 10.0 * f};
    const Vec2 b{100.0 + 10.0 * f, 145.0 - 10.0 * f};
    // Ids follow image x then y, as a detector would emit them.
    const bool a_first = a.y < b.y;
    s.detections.push_back(det(f, ObjectClass::Pedestrian, "d0", a_first ? a : b));
    s.detections.push_back(det(f, ObjectClass::Pedestrian, "d1", a_first ? b : a));
    s.owners[{f, "d0"}] = a_first ? "A" : "B";
    s.owners[{f, "d1"}] = a_first ? "B" : "A";
  }
  return s;
}

}  // namespace

TEST_CASE("constant-velocity prediction") {
  const auto s = kalman_predict(state_at({0, 0}, {1, 0}), 0.0);
  CHECK(s.mean(0) == 1.0);
  CHECK(s.mean(1) == 0.0);
  CHECK(s.mean(2) == 1.0);
  CHECK(s.mean(3) == 0.0);
  const auto still = kalman_predict(state_at({4, 5}, {0, 0}), 1.0);
  CHECK(still.position() == Vec2{4, 5});
  CHECK(still.covariance.trace() > state_at({4, 5}, {0, 0}).covariance.trace());
}

TEST_CASE("measurement update limits") {
  const auto s = kalman_predict(state_at({10, 20}, {2, -1}), 1.0);
  const auto same = kalman_update(s, s.position(), 2.0);
  CHECK((same.mean - s.mean).cwiseAbs().maxCoeff() < 1e-12);

  const auto vague = kalman_update(s, {50, 60}, 1e12);
  CHECK((vague.mean - s.mean).cwiseAbs().maxCoeff() < 1e-9);

  const auto sharp = kalman_update(s, {50, 60}, 1e-12);
  CHECK(sharp.mean(0) == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(sharp.mean(1) == doctest::Approx(60.0).epsilon(1e-9));
}

TEST_CASE("velocity converges on noise-free constant velocity input") {
  TrackerParams p;
  const Vec2 v{-4.5, 2.25};
  TrackState t = start_track(0, det(0, ObjectClass::Vehicle, "d0", {500, 300}), p);
  for (int k = 1; k <= 20; ++k) {
    t = kalman_predict(t, p.process_noise);
    t = kalman_update(t, Vec2{500, 300} + static_cast<double>(k) * v, p.measurement_noise);
  }
  CHECK(std::abs(t.mean(2) - v.x) < 1e-6);
  CHECK(std::abs(t.mean(3) - v.y) < 1e-6);
}

TEST_CASE("assignment gating and matching") {
  TrackerParams p;
  std::vector<TrackState> tracks = {state_at({0, 0}, {0, 0})};
  SUBCASE("single in-gate detection is matched") {
    std::vector<DetectionRecord> d = {det(1, ObjectClass::Pedestrian, "d0", {5, 5})};
    const auto a = assign(tracks, d, p);
    REQUIRE(a.matches.size() == 1);
    CHECK(a.new_tracks.empty());
    CHECK(a.coasting.empty());
  }
  SUBCASE("detection just beyond the gate spawns a track") {
    std::vector<DetectionRecord> d = {det(1, ObjectClass::Pedestrian, "d0", {p.gate_threshold_pedestrian + 1, 0})};
    const auto a = assign(tracks, d, p);
    CHECK(a.matches.empty());
    CHECK(a.new_tracks == std::vector<std::size_t>{0});
    CHECK(a.coasting == std::vector<std::size_t>{0});
  }
  SUBCASE("classes never mix") {
    std::vector<DetectionRecord> d = {det(1, ObjectClass::Vehicle, "d0", {1, 0})};
    CHECK(assign(tracks, d, p).matches.empty());
  }
  SUBCASE("equal distances break on detection id") {
    std::vector<DetectionRecord> d = {det(1, ObjectClass::Pedestrian, "d1", {3, 0}),
                                      det(1, ObjectClass::Pedestrian, "d0", {-3, 0})};
    const auto a = assign(tracks, d, p);
    REQUIRE(a.matches.size() == 1);
    CHECK(d[a.matches[0].second].detection_id == "d0");
  }
}

TEST_CASE("prediction keeps crossing identities apart") {
  // Fig 5 situation: each track takes the detection nearest its prediction.
  std::vector<TrackState> tracks = {state_at({20, 20}, {10, 10}, ObjectClass::Pedestrian, 0),
                                    state_at({20, 25}, {10, -10}, ObjectClass::Pedestrian, 1)};
  tracks[0].points.push_back({2, "d0", {20, 20}, {20, 20}});
  tracks[1].points.push_back({2, "d1", {20, 25}, {20, 25}});
  std::vector<TrackState> predicted;
  for (const auto& t : tracks) predicted.push_back(kalman_predict(t, 1.0));
  std::vector<DetectionRecord> d = {det(3, ObjectClass::Pedestrian, "d0", {30, 15}),
                                    det(3, ObjectClass::Pedestrian, "d1", {30, 30})};
  TrackerParams p;
  const auto a = assign(predicted, d, p);
  REQUIRE(a.matches.size() == 2);
  for (auto [ti, di] : a.matches) CHECK(d[di].detection_id == (ti == 0 ? "d1" : "d0"));

  p.association = AssociationMode::LastPosition;
  const auto naive = assign(predicted, d, p);
  for (auto [ti, di] : naive.matches) CHECK(d[di].detection_id == (ti == 0 ? "d0" : "d1"));
}

TEST_CASE("X crossing: Kalman keeps identities, last position swaps them") {
  const auto s = x_scene();
  TrackerParams p;
  const auto kalman = track_scene(s.detections, p, kUnit);
  const auto kv = validate_scene("x", kalman, &s.owners, p);
  CHECK(kalman.size() == 2);
  CHECK_FALSE(kv.violated());

  p.association = AssociationMode::LastPosition;
  const auto naive = track_scene(s.detections, p, kUnit);
  const auto nv = validate_scene("x", naive, &s.owners, p);
  CHECK(nv.crossing == 1);
  CHECK(nv.directivity == 0);

  p.association = AssociationMode::KalmanPrediction;
  p.matching = MatchingMode::Optimal;
  CHECK_FALSE(validate_scene("x", track_scene(s.detections, p, kUnit), &s.owners, p).violated());
}

TEST_CASE("linear object gives one trajectory") {
  std::vector<DetectionRecord> d;
  for (int f = 0; f < 10; ++f) d.push_back(det(f, ObjectClass::Vehicle, "d0", {100.0 + 30.0 * f, 300.0}));
  const auto t = track_scene(d, TrackerParams{}, kUnit);
  REQUIRE(t.size() == 1);
  CHECK(t[0].points.size() == 10);
  CHECK(t[0].points[9].world.x == 370.0);
  CHECK(t[0].points[9].world.t == doctest::Approx(9.0 / 25.0));
}

TEST_CASE("parallel objects 200 px apart keep their identities") {
  std::vector<DetectionRecord> d;
  TruthMap owners;
  for (int f = 0; f < 30; ++f) {
    d.push_back(det(f, ObjectClass::Vehicle, "d0", {100.0 + 25.0 * f, 200.0}));
    d.push_back(det(f, ObjectClass::Vehicle, "d1", {100.0 + 25.0 * f, 400.0}));
    owners[{f, "d0"}] = "top";
    owners[{f, "d1"}] = "bottom";
  }
  const auto t = track_scene(d, TrackerParams{}, kUnit);
  CHECK(t.size() == 2);
  CHECK_FALSE(validate_scene("p", t, &owners, TrackerParams{}).violated());
}

TEST_CASE("tracking is invariant to detection order within a frame") {
  const auto spec = synth::crossing_stress_scenario(5, 1.5);
  const auto out = synth::generate(spec);
  const auto calib = calibrate(spec.spot);
  TrackerParams p;
  p.frame_skip = spec.spot.frame_skip;
  const auto base = track_scene(out.detections, p, calib);

  std::mt19937 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = out.detections;
    std::size_t b = 0;
    while (b < shuffled.size()) {
      std::size_t e = b;
      while (e < shuffled.size() && shuffled[e].frame_index == shuffled[b].frame_index) ++e;
      std::shuffle(shuffled.begin() + static_cast<std::ptrdiff_t>(b),
                   shuffled.begin() + static_cast<std::ptrdiff_t>(e), rng);
      b = e;
    }
    const auto again = track_scene(shuffled, p, calib);
    REQUIRE(again.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      REQUIRE(again[i].points.size() == base[i].points.size());
      for (std::size_t k = 0; k < base[i].points.size(); ++k)
        CHECK(again[i].points[k].detection_id == base[i].points[k].detection_id);
    }
  }

  // Every detection lands in exactly one trajectory.
  std::set<std::pair<std::int64_t, std::string>> used;
  std::size_t total = 0;
  for (const auto& t : base)
    for (const auto& pt : t.points) {
      used.insert({pt.frame, pt.detection_id});
      ++total;
    }
  CHECK(total == used.size());
  CHECK(total == out.detections.size());
}

TEST_CASE("frame order is enforced") {
  std::vector<DetectionRecord> d = {det(3, ObjectClass::Vehicle, "a", {1, 1}),
                                    det(2, ObjectClass::Vehicle, "a", {1, 1})};
  CHECK_THROWS_AS(track_scene(d, TrackerParams{}, kUnit), Error);
}

TEST_CASE("validation with truth") {
  auto track = [](int id, std::int64_t f0, std::int64_t f1, const std::string& prefix) {
    Trajectory t;
    t.object_id = id;
    t.object_class = ObjectClass::Pedestrian;
    for (std::int64_t f = f0; f <= f1; ++f)
      t.points.push_back({f, prefix + std::to_string(f), {double(f), double(id)}, {}, {}, {}});
    return t;
  };
  TruthMap owners;
  for (std::int64_t f = 0; f < 20; ++f) {
    owners[{f, "a" + std::to_string(f)}] = "A";
    owners[{f, "b" + std::to_string(f)}] = "B";
  }
  TrackerParams p;

  SUBCASE("perfect tracking") {
    std::vector<Trajectory> t = {track(0, 0, 19, "a"), track(1, 0, 19, "b")};
    const ValidationInput in{"s", t, &owners};
    const auto r = validate_trajectories(std::span<const ValidationInput>(&in, 1), p);
    CHECK(r.connectivity + r.crossing + r.directivity == 0);
    CHECK(r.accuracy == 1.0);
  }
  SUBCASE("forced identity swap") {
    auto t0 = track(0, 0, 9, "a");
    auto t1 = track(1, 0, 9, "b");
    for (auto& pt : track(0, 10, 19, "b").points) t0.points.push_back(pt);
    for (auto& pt : track(1, 10, 19, "a").points) t1.points.push_back(pt);
    const std::vector<Trajectory> t = {t0, t1};
    const auto v = validate_scene("s", t, &owners, p);
    CHECK(v.crossing == 1);
    CHECK(v.directivity == 0);
    CHECK(v.connectivity == 0);
  }
  SUBCASE("track split by a five-step gap") {
    std::vector<Trajectory> t = {track(0, 0, 6, "a"), track(1, 12, 19, "a")};
    const auto v = validate_scene("s", t, &owners, p);
    CHECK(v.connectivity == 1);
    CHECK(v.crossing == 0);
    CHECK(v.directivity == 0);
  }
  SUBCASE("a track invading another path") {
    auto t0 = track(0, 0, 9, "a");
    for (auto& pt : track(0, 10, 19, "b").points) t0.points.push_back(pt);
    std::vector<Trajectory> t = {t0, track(1, 0, 9, "b")};
    const auto v = validate_scene("s", t, &owners, p);
    CHECK(v.directivity == 1);
    CHECK(v.crossing == 0);
  }
  SUBCASE("accuracy is the share of clean scenes") {
    std::vector<Trajectory> clean = {track(0, 0, 19, "a")};
    std::vector<Trajectory> broken = {track(0, 0, 6, "a"), track(1, 12, 19, "a")};
    std::vector<ValidationInput> in = {{"s1", clean, &owners}, {"s2", broken, &owners},
                                       {"s3", clean, &owners}, {"s4", clean, &owners}};
    const auto r = validate_trajectories(in, p);
    CHECK(r.violating_scenes == 1);
    CHECK(r.accuracy == 0.75);
  }
}

TEST_CASE("heuristic validation without truth") {
  TrackerParams p;
  auto line = [](int id, std::int64_t f0, int n, Vec2 start, Vec2 step) {
    Trajectory t;
    t.object_id = id;
    t.object_class = ObjectClass::Pedestrian;
    for (int k = 0; k < n; ++k)
      t.points.push_back({f0 + k, "d", start + static_cast<double>(k) * step, {}, {}, {}});
    return t;
  };
  std::vector<Trajectory> clean = {line(0, 0, 10, {0, 0}, {10, 0}), line(1, 0, 10, {0, 100}, {10, 0})};
  CHECK_FALSE(validate_scene("h", clean, nullptr, p).violated());

  std::vector<Trajectory> restart = {line(0, 0, 5, {0, 0}, {10, 0}), line(1, 10, 5, {100, 0}, {10, 0})};
  CHECK(validate_scene("h", restart, nullptr, p).connectivity == 1);

  std::vector<Trajectory> cross = {line(0, 0, 6, {0, 0}, {10, 3}), line(1, 0, 6, {0, 15}, {10, -3})};
  CHECK(validate_scene("h", cross, nullptr, p).crossing == 1);

  auto reversal = line(0, 0, 4, {0, 0}, {10, 0});
  reversal.points.push_back({4, "d", {20, 0}, {}, {}, {}});
  std::vector<Trajectory> rev = {reversal};
  CHECK(validate_scene("h", rev, nullptr, p).directivity == 1);
}
