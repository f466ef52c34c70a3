#include <doctest.h>

#include <random>

#include "pedrisk/features.hpp"
#include "pedrisk/synth.hpp"
#include "support.hpp"

using namespace pedrisk;
using testsupport::line;
using testsupport::world_track;

namespace {

const Calibration kUnit = Calibration::from_scale(1.0, 5.0, 1);  // F = 0.2 s

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidParameter;
}

Trajectory straight(int id, ObjectClass cls, Vec2 through, Vec2 velocity, double t_at, double t0, double t1,
                    double fps = 5.0) {
  std::vector<Vec2> pts;
  const auto f0 = static_cast<std::int64_t>(std::llround(t0 * fps));
  const auto f1 = static_cast<std::int64_t>(std::llround(t1 * fps));
  for (auto f = f0; f <= f1; ++f) pts.push_back(through + (static_cast<double>(f) / fps - t_at) * velocity);
  return world_track(id, cls, pts, f0, 1, fps);
}

}  // namespace

TEST_CASE("speed from pixel steps") {
  // 64 px per metre, 0.2 s per step, 64 px per step: 5 m/s.
  const auto calib = Calibration::from_scale(64.0, 5.0, 1);
  std::vector<DetectionRecord> d;
  for (int f = 0; f < 4; ++f) {
    DetectionRecord r;
    r.frame_index = f;
    r.object_class = ObjectClass::Vehicle;
    r.contact_point_px = {100.0 + 64.0 * f, 50.0};
    r.detection_id = "d0";
    d.push_back(r);
  }
  TrackerParams tp;
  tp.gate_threshold_vehicle = 100.0;  // one 64 px step must stay inside the gate
  const auto t = track_scene(d, tp, calib);
  REQUIRE(t.size() == 1);
  for (auto mode : {DistanceMode::Homography, DistanceMode::PixelScale}) {
    const auto s = speed_list(t[0], calib, mode);
    REQUIRE(s.size() == 3);
    for (double v : s) CHECK(v == doctest::Approx(18.0).epsilon(1e-12));
  }
}

TEST_CASE("speed list shape") {
  const auto still = world_track(0, ObjectClass::Vehicle, line({3, 3}, {0, 0}, 6));
  for (double v : speed_list(still, kUnit)) CHECK(v == 0.0);
  CHECK(speed_list(world_track(0, ObjectClass::Vehicle, line({0, 0}, {1, 0}, 3)), kUnit).size() == 2);
  CHECK(code_of([] { speed_list(world_track(0, ObjectClass::Vehicle, line({0, 0}, {1, 0}, 1)), kUnit); }) ==
        ErrorCode::TooShort);
}

TEST_CASE("speeds use the actual time between kept points") {
  // A missed sample doubles the elapsed time, not the speed.
  auto t = world_track(0, ObjectClass::Vehicle, {{0, 0}, {1, 0}, {3, 0}, {4, 0}});
  t.points[2].frame = 3;
  t.points[2].world.t = t.points[2].world_smoothed.t = 0.6;
  t.points[3].frame = 4;
  t.points[3].world.t = t.points[3].world_smoothed.t = 0.8;
  const auto s = speed_list(t, kUnit);
  CHECK(s[0] == doctest::Approx(18.0));
  CHECK(s[1] == doctest::Approx(18.0));
  CHECK(s[2] == doctest::Approx(18.0));
}

TEST_CASE("low-pass filter") {
  const std::vector<double> x = {3.0, 9.0, -1.0, 4.5};
  CHECK(low_pass(x, 1.0) == x);
  const std::vector<double> flat(7, 42.0);
  CHECK(low_pass(flat, 0.3) == flat);
  const std::vector<double> impulse = {0.0, 1.0, 0.0, 0.0, 0.0};
  const auto y = low_pass(impulse, 0.5);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.5);
  CHECK(y[2] == 0.25);
  CHECK(y[3] == 0.125);
  CHECK(y[4] == 0.0625);
  CHECK_THROWS_AS(low_pass(x, 0.0), Error);
  CHECK_THROWS_AS(low_pass(x, 1.5), Error);
}

TEST_CASE("acceleration states") {
  const std::vector<double> rising = {10, 12, 14, 16};
  for (auto s : acceleration_list(rising, 0.5)) CHECK(s == AccelState::Acc);
  const std::vector<double> flat = {10, 10, 10};
  for (auto s : acceleration_list(flat, 0.5)) CHECK(s == AccelState::NoChange);
  const std::vector<double> small = {10, 10.25, 10.5, 10.75};
  for (auto s : acceleration_list(small, 0.5)) CHECK(s == AccelState::NoChange);
  const std::vector<double> mixed = {10, 12, 14, 14.1, 16, 13};
  const auto runs = collapse_runs<AccelState>(acceleration_list(mixed, 0.5));
  CHECK(runs == std::vector<AccelState>{AccelState::Acc, AccelState::NoChange, AccelState::Acc, AccelState::Dec});
  CHECK(code_of([] { acceleration_list(std::vector<double>{1.0}, 0.5); }) == ErrorCode::TooShort);
}

TEST_CASE("speed reversal and shift invariance") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> pts = {{0, 0}};
    for (int j = 0; j < 12; ++j) pts.push_back(pts.back() + Vec2{u(rng), u(rng)});
    const auto fwd = speed_list(world_track(0, ObjectClass::Vehicle, pts), kUnit);
    std::reverse(pts.begin(), pts.end());
    auto bwd = speed_list(world_track(0, ObjectClass::Vehicle, pts), kUnit);
    std::reverse(bwd.begin(), bwd.end());
    for (std::size_t j = 0; j < fwd.size(); ++j) CHECK(fwd[j] == doctest::Approx(bwd[j]).epsilon(1e-12));

    std::vector<double> s(10), shifted(10);
    const double c = 50.0 * u(rng);
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = 30.0 + 4.0 * u(rng);
      shifted[j] = s[j] + c;
    }
    const auto fa = low_pass(s, 0.3);
    const auto fb = low_pass(shifted, 0.3);
    const auto a = acceleration_list(fa, 0.5);
    const auto b = acceleration_list(fb, 0.5);
    for (std::size_t j = 0; j < a.size(); ++j)
      if (std::abs(std::abs(fa[j + 1] - fa[j]) - 0.5) > 1e-9) CHECK(a[j] == b[j]);
  }
}

TEST_CASE("zones on the synthetic spot") {
  const auto spot = synth::synthetic_spot("Z");
  SUBCASE("vehicle order along the approach") {
    const auto v = world_track(0, ObjectClass::Vehicle, line({-10, -2}, {2, 0}, 12));
    const auto zones = classify_vehicle_zones(v, spot);
    auto runs = collapse_runs<VehicleZone>(zones);
    CHECK(runs == std::vector<VehicleZone>{VehicleZone::BeforeCrosswalk, VehicleZone::OnCrosswalk,
                                           VehicleZone::AfterCrosswalk});
  }
  SUBCASE("pedestrian zones") {
    const auto p = world_track(1, ObjectClass::Pedestrian, line({2, -3.5}, {0, 0.5}, 15));
    for (auto z : classify_pedestrian_zones(p, spot)) CHECK(z == PedestrianZone::Crosswalk);
    CHECK(classify_pedestrian_point({-1.0, 0.0}, spot) == PedestrianZone::CIA);
    CHECK(classify_pedestrian_point({5.0, 1.0}, spot) == PedestrianZone::CIA);
    CHECK(classify_pedestrian_point({-4.0, 0.0}, spot) == PedestrianZone::Road);
    CHECK(classify_pedestrian_point({-10.0, 5.0}, spot) == PedestrianZone::Sidewalk);
    CHECK(classify_pedestrian_point({2.0, 5.0}, spot) == PedestrianZone::Sidewalk);
  }
  SUBCASE("no crosswalk polygon") {
    auto bare = spot;
    bare.crosswalk_polygon_world.clear();
    CHECK(code_of([&] { classify_vehicle_point({0, 0}, bare); }) == ErrorCode::MissingPolygons);
  }
}

TEST_CASE("polygon helpers") {
  const Polygon sq = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
  CHECK(point_in_polygon({2, 2}, sq));
  CHECK_FALSE(point_in_polygon({5, 2}, sq));
  CHECK(distance_to_polygon_edges({2, 1}, sq) == doctest::Approx(1.0));
  CHECK(distance_to_polygon_edges({7, 8}, sq) == doctest::Approx(5.0));
  CHECK(segments_intersect({0, 0}, {2, 2}, {0, 2}, {2, 0}));
  CHECK_FALSE(segments_intersect({0, 0}, {1, 1}, {0, 2}, {2, 3}));
}

TEST_CASE("stop detection") {
  const std::vector<double> dip = {30, 20, 10, 0.5, 0.5, 0.5, 0.5, 10, 20};
  const std::vector<VehicleZone> before(dip.size(), VehicleZone::BeforeCrosswalk);
  CHECK(detect_stop(dip, before, 2.0, 3));
  const auto w = find_stop(dip, before, 2.0, 3);
  REQUIRE(w);
  CHECK(w->first_step == 3);
  CHECK(w->last_step == 6);
  const std::vector<double> never = {30, 20, 10, 5, 3, 10};
  CHECK_FALSE(detect_stop(never, std::vector<VehicleZone>(never.size(), VehicleZone::BeforeCrosswalk), 2.0, 3));
  const std::vector<VehicleZone> after(dip.size(), VehicleZone::AfterCrosswalk);
  CHECK_FALSE(detect_stop(dip, after, 2.0, 3));
  const std::vector<double> short_dip = {30, 1, 1, 30};
  CHECK_FALSE(detect_stop(short_dip, std::vector<VehicleZone>(4, VehicleZone::BeforeCrosswalk), 2.0, 3));
}

TEST_CASE("distances") {
  const auto v = world_track(0, ObjectClass::Vehicle, {{0, 0}});
  const auto p = world_track(1, ObjectClass::Pedestrian, {{3, 4}});
  CHECK(distance_list(v, p, kUnit)[0].meters == 5.0);
  CHECK(distance_list(v, world_track(1, ObjectClass::Pedestrian, {{0, 0}}), kUnit)[0].meters == 0.0);

  const auto approach = world_track(0, ObjectClass::Vehicle, line({-20, -2}, {1.5, 0}, 10));
  const auto waiting = world_track(1, ObjectClass::Pedestrian, line({2, 5}, {0, 0}, 10));
  const auto d = distance_list(approach, waiting, kUnit);
  for (std::size_t j = 1; j < d.size(); ++j) CHECK(d[j].meters < d[j - 1].meters);

  const auto later = world_track(1, ObjectClass::Pedestrian, line({2, 5}, {0, 0}, 3), 50);
  CHECK(code_of([&] { distance_list(approach, later, kUnit); }) == ErrorCode::NoOverlap);

  const auto spot = synth::synthetic_spot("Z");
  const auto cw = crosswalk_distance_list(world_track(0, ObjectClass::Vehicle, {{-7, -2}, {2, -2}, {9, -2}}), spot);
  CHECK(cw[0] == doctest::Approx(7.0));
  CHECK(cw[1] == 0.0);
  CHECK(cw[2] == doctest::Approx(5.0));
}

TEST_CASE("relative position follows the heading") {
  const auto v = world_track(0, ObjectClass::Vehicle, line({0, 0}, {1, 0}, 2));
  CHECK(relative_positions(v, world_track(1, ObjectClass::Pedestrian, {{10, 0}, {10, 0}}))[0].position ==
        RelativePosition::Front);
  CHECK(relative_positions(v, world_track(1, ObjectClass::Pedestrian, {{-10, 0}, {-10, 0}}))[0].position ==
        RelativePosition::Behind);

  const auto pass = world_track(0, ObjectClass::Vehicle, line({-10, -2}, {2, 0}, 10));
  const auto ped = world_track(1, ObjectClass::Pedestrian, line({1, 3}, {0, 0}, 10));
  std::vector<RelativePosition> got;
  for (const auto& r : relative_positions(pass, ped)) got.push_back(r.position);
  CHECK(collapse_runs<RelativePosition>(got) ==
        std::vector<RelativePosition>{RelativePosition::Front, RelativePosition::Behind});

  // A stopped vehicle keeps its heading.
  const auto halted = world_track(0, ObjectClass::Vehicle, {{0, 0}, {1, 0}, {1, 0}, {1, 0}});
  const auto ahead = world_track(1, ObjectClass::Pedestrian, line({5, 1}, {0, 0}, 4));
  for (const auto& r : relative_positions(halted, ahead)) CHECK(r.position == RelativePosition::Front);

  const auto parked = world_track(0, ObjectClass::Vehicle, line({0, 0}, {0, 0}, 4));
  CHECK(code_of([&] { relative_positions(parked, ahead); }) == ErrorCode::ZeroHeading);
}

TEST_CASE("PSM examples") {
  // Pedestrian along +y reaches the origin at 2.0 s, vehicle along +x at 5.2 s.
  const auto ped = straight(1, ObjectClass::Pedestrian, {0, 0}, {0, 1}, 2.0, 0.0, 5.0);
  const auto veh = straight(0, ObjectClass::Vehicle, {0, 0}, {5, 0}, 5.2, 3.0, 8.0);
  const auto r = psm(veh, ped);
  REQUIRE(r);
  CHECK(r->seconds == doctest::Approx(3.2).epsilon(1e-9));
  CHECK(std::abs(r->step_seconds - 3.2) <= 0.2 + 1e-9);  // within one step
  CHECK(r->conflict_point.x == doctest::Approx(0.0).scale(1.0));
  CHECK(r->conflict_point.y == doctest::Approx(0.0).scale(1.0));

  const auto late = straight(1, ObjectClass::Pedestrian, {0, 0}, {0, 1}, 6.7, 3.0, 9.0);
  const auto first = psm(veh, late);
  REQUIRE(first);
  CHECK(first->seconds == doctest::Approx(-1.5).epsilon(1e-9));

  const auto apart = straight(1, ObjectClass::Pedestrian, {30, 0}, {0, 1}, 2.0, 0.0, 1.0);
  CHECK_FALSE(psm(veh, apart));
}

TEST_CASE("PSM sign flips when the arrival order swaps") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double gap = 0.3 + 3.0 * u(rng);
    const double tv = 6.0 + u(rng);
    const Vec2 x{u(rng) * 4.0, u(rng) * 4.0 - 2.0};
    const Vec2 vv{6.0 + 4.0 * u(rng), 0.0};
    const Vec2 vp{0.0, 1.0 + u(rng)};
    const auto veh = straight(0, ObjectClass::Vehicle, x, vv, tv, tv - 3.0, tv + 3.0);
    const auto ped_first = straight(1, ObjectClass::Pedestrian, x, vp, tv - gap, tv - gap - 4.0, tv - gap + 4.0);
    const auto ped_second = straight(1, ObjectClass::Pedestrian, x, vp, tv + gap, tv + gap - 4.0, tv + gap + 4.0);
    const auto a = psm(veh, ped_first);
    const auto b = psm(veh, ped_second);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->seconds > 0.0);
    CHECK(b->seconds < 0.0);
    CHECK(a->seconds == doctest::Approx(-b->seconds).epsilon(1e-9));
  }
}

TEST_CASE("PSM matches the dense oracle on perpendicular tracks") {
  for (int trial = 0; trial < 50; ++trial) {
    const double sv = 4.0 + 0.2 * trial;
    const double sp = 1.0 + 0.01 * trial;
    const double tv = 5.0 + 0.013 * trial, tp = 3.0 + 0.031 * trial;
    const auto veh = straight(0, ObjectClass::Vehicle, {0, 0}, {sv, 0}, tv, 0.0, 10.0);
    const auto ped = straight(1, ObjectClass::Pedestrian, {0, 0}, {0, sp}, tp, 0.0, 10.0);
    const auto scan = psm(veh, ped);
    const auto dense = testsupport::dense_psm_oracle(veh, ped, 1000);
    REQUIRE(scan);
    REQUIRE(dense);
    CHECK(std::abs(scan->seconds - dense->seconds) <= 0.2);
    CHECK(std::abs(scan->seconds - (tv - tp)) <= 0.2);
  }
}

TEST_CASE("scene features") {
  const auto spot = synth::synthetic_spot("F", false, 5.0, 1);
  const Calibration calib = calibrate(spot);
  const FeatureParams params;
  const auto veh = straight(0, ObjectClass::Vehicle, {2, -2}, {5, 0}, 4.0, 0.0, 8.0);

  SUBCASE("car-only scene leaves interaction empty") {
    const auto f = extract_scene_features("F-0", veh, {}, spot, calib, params);
    CHECK_FALSE(f.interactive());
    CHECK(f.interaction_frames.empty());
    CHECK(f.distance_list.empty());
    CHECK(f.relative_position_list.empty());
    CHECK_FALSE(f.psm);
    CHECK(f.vehicle_speed_list.size() == veh.points.size() - 1);
    CHECK(f.mean_speed_kmh == doctest::Approx(18.0));
    CHECK_FALSE(f.stop);
  }
  SUBCASE("nearest pedestrian per frame") {
    std::vector<Trajectory> peds = {straight(1, ObjectClass::Pedestrian, {1, 0}, {0, 1.2}, 4.0, 0.0, 8.0),
                                    straight(2, ObjectClass::Pedestrian, {3, 5}, {0, -1.0}, 2.0, 1.0, 7.0)};
    const auto f = extract_scene_features("F-1", veh, peds, spot, calib, params);
    REQUIRE(f.interaction_frames.size() == f.distance_list.size());
    REQUIRE(f.nearest_pedestrian.size() == f.distance_list.size());
    for (std::size_t k = 0; k < f.interaction_frames.size(); ++k) {
      const auto frame = f.interaction_frames[k];
      const Vec2 vp = veh.points[static_cast<std::size_t>(frame - veh.first_frame())].world.xy();
      double best = std::numeric_limits<double>::infinity();
      int who = -1;
      for (const auto& p : peds) {
        for (const auto& pt : p.points) {
          if (pt.frame != frame) continue;
          const double d = distance(vp, pt.world.xy());
          if (d < best) {
            best = d;
            who = p.object_id;
          }
        }
      }
      CHECK(f.distance_list[k] == doctest::Approx(best));
      CHECK(f.nearest_pedestrian[k] == who);
    }
    CHECK(f.pedestrians.size() == 2);
    CHECK(f.pedestrian_in_crossing_area);
    REQUIRE(f.psm);
  }
}

TEST_CASE("feature parameters are checked") {
  FeatureParams p;
  p.alpha = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.stop_min_steps = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  for (auto s : {AccelState::Acc, AccelState::Dec, AccelState::NoChange}) CHECK(parse_accel_state(to_string(s)) == s);
  for (auto z : {PedestrianZone::Sidewalk, PedestrianZone::Crosswalk, PedestrianZone::CIA, PedestrianZone::Road})
    CHECK(parse_pedestrian_zone(to_string(z)) == z);
  CHECK(to_string(VehicleZone::BeforeCrosswalk) == "before crosswalk");
}
