#include <doctest.h>

#include <random>

#include "pedrisk/motion_gate.hpp"
#include "pedrisk/synth.hpp"

using namespace pedrisk;

namespace {

DetectionRecord det(std::int64_t frame, ObjectClass cls, std::string id, std::string hint = {}) {
  DetectionRecord d;
  d.spot_id = "S";
  d.frame_index = frame;
  d.object_class = cls;
  d.contact_point_px = {10.0, 10.0};
  d.detection_id = std::move(id);
  d.track_hint = std::move(hint);
  return d;
}

std::vector<DetectionRecord> sorted(std::vector<DetectionRecord> v) {
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  return v;
}

MotionParams no_hangover() {
  MotionParams p;
  p.hangover_frames = 0;
  return p;
}

}  // namespace

TEST_CASE("frame differences") {
  GrayFrame a(0, 8, 6, 10), b(1, 8, 6, 25);
  for (auto v : frame_diff(a, a).values) CHECK(v == 0);
  for (auto v : frame_diff(a, b).values) CHECK(v == 15);

  GrayFrame z(0, 8, 6, 0), one = z;
  one.at(3, 5) = 200;
  const auto d = frame_diff(z, one);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) CHECK(d.at(r, c) == ((r == 3 && c == 5) ? 200 : 0));

  CHECK_THROWS_AS(frame_diff(a, GrayFrame(0, 7, 6)), Error);
}

TEST_CASE("frame difference is symmetric") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    GrayFrame a(0, 16, 9), b(1, 16, 9);
    for (auto& p : a.pixels) p = static_cast<std::uint8_t>(rng());
    for (auto& p : b.pixels) p = static_cast<std::uint8_t>(rng());
    CHECK(frame_diff(a, b).values == frame_diff(b, a).values);
  }
}

TEST_CASE("motion decision counts exceeding cells") {
  DeltaGrid g{100, 100, std::vector<std::uint8_t>(10000, 0)};
  MotionParams p;
  CHECK_FALSE(detect_motion(g, p));
  // 1 % of cells at delta 100: 100 cells against a 50-cell requirement.
  for (int i = 0; i < 100; ++i) g.values[static_cast<std::size_t>(i * 97)] = 100;
  int exceeding = 0;
  for (auto v : g.values) exceeding += v > p.pixel_threshold;
  REQUIRE(exceeding == 100);
  CHECK(detect_motion(g, p));
  p.active_fraction = 0.02;
  CHECK_FALSE(detect_motion(g, p));
  // The threshold is exclusive.
  DeltaGrid at{10, 10, std::vector<std::uint8_t>(100, 30)};
  CHECK_FALSE(detect_motion(at, MotionParams{}));
}

TEST_CASE("motion flags from a moving box and a static background") {
  std::vector<GrayFrame> frames;
  for (int f = 0; f < 6; ++f) {
    const int x = f < 3 ? 10 + 8 * f : 26;  // moves, then holds still
    frames.push_back(synth::render_box_frame(f, 64, 48, x, 20, 6));
  }
  const auto flags = motion_flags(frames, MotionParams{});
  CHECK(flags.at(0));
  CHECK(flags.at(1));
  CHECK(flags.at(2));
  CHECK(flags.at(3) == false);
  CHECK(flags.at(5) == false);

  const GrayFrame background(0, 64, 48, 40);
  CHECK(motion_against_background(frames[4], background, MotionParams{}));
  CHECK_FALSE(motion_against_background(background, background, MotionParams{}));

  std::vector<DetectionRecord> dets = {det(1, ObjectClass::Vehicle, "a"), det(4, ObjectClass::Vehicle, "a"),
                                       det(9, ObjectClass::Vehicle, "a")};
  const auto kept = apply_motion_gate(dets, flags);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].frame_index == 1);
  CHECK(kept[1].frame_index == 9);  // no flag, kept
}

TEST_CASE("scene segmentation examples") {
  SUBCASE("one vehicle 10-40 with a pedestrian 20-30") {
    std::vector<DetectionRecord> d;
    for (int f = 10; f <= 40; ++f) d.push_back(det(f, ObjectClass::Vehicle, "d0", "v1"));
    for (int f = 20; f <= 30; ++f) d.push_back(det(f, ObjectClass::Pedestrian, "d1"));
    const auto spans = segment_scenes(sorted(d), std::nullopt, no_hangover());
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].frame_start == 10);
    CHECK(spans[0].frame_end == 40);
    CHECK(spans[0].interactive);
    CHECK(spans[0].scene_id == "S-000001");
  }
  SUBCASE("two overlapping vehicles give two scenes") {
    std::vector<DetectionRecord> d;
    for (int f = 0; f <= 20; ++f) d.push_back(det(f, ObjectClass::Vehicle, "a", "v1"));
    for (int f = 10; f <= 30; ++f) d.push_back(det(f, ObjectClass::Vehicle, "b", "v2"));
    const auto spans = segment_scenes(sorted(d), std::nullopt, no_hangover());
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].vehicle_track_hint == "v1");
    CHECK(spans[1].vehicle_track_hint == "v2");
    CHECK_FALSE(spans[0].interactive);
  }
  SUBCASE("pedestrians alone give no scene") {
    std::vector<DetectionRecord> d;
    for (int f = 0; f <= 20; ++f) d.push_back(det(f, ObjectClass::Pedestrian, "p"));
    CHECK(segment_scenes(d, std::nullopt, MotionParams{}).empty());
  }
  SUBCASE("vehicles without hints are rejected") {
    std::vector<DetectionRecord> d = {det(0, ObjectClass::Vehicle, "a")};
    CHECK_THROWS_AS(segment_scenes(d, std::nullopt, MotionParams{}), Error);
  }
}

TEST_CASE("hangover bridges short absences and extends the span") {
  std::vector<DetectionRecord> d;
  for (int f : {0, 3, 6, 12, 15, 30, 33}) d.push_back(det(f, ObjectClass::Vehicle, "a", "v1"));
  const auto spans = segment_scenes(d, std::nullopt, MotionParams::for_frame_skip(3));
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].frame_start == 0);
  CHECK(spans[0].frame_end == 21);
  CHECK(spans[1].frame_start == 30);
  CHECK(spans[1].frame_end == 39);
}

TEST_CASE("span properties on random presence patterns") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DetectionRecord> d;
    std::map<std::string, std::vector<std::int64_t>> present;
    for (int f = 0; f < 200; ++f) {
      for (int v = 0; v < 3; ++v) {
        if (rng() % 3 == 0) {
          const std::string hint = "v" + std::to_string(v);
          d.push_back(det(f, ObjectClass::Vehicle, "d" + std::to_string(v), hint));
          present[hint].push_back(f);
        }
      }
    }
    const auto params = MotionParams::for_frame_skip(1 + trial % 3);
    const auto spans = segment_scenes(d, std::nullopt, params);
    for (const auto& [hint, frames] : present) {
      std::vector<SceneSpan> mine;
      for (const auto& s : spans)
        if (s.vehicle_track_hint == hint) mine.push_back(s);
      for (std::size_t i = 1; i < mine.size(); ++i) CHECK(mine[i - 1].frame_end < mine[i].frame_start);
      for (auto f : frames) {
        bool covered = false;
        for (const auto& s : mine) covered = covered || (s.frame_start <= f && f <= s.frame_end);
        CHECK(covered);
      }
    }

    // A pedestrian inside a span flips only the interactive flag.
    if (spans.empty()) continue;
    const auto target = spans[trial % spans.size()];
    auto with_ped = d;
    with_ped.push_back(det(target.frame_start, ObjectClass::Pedestrian, "ped"));
    const auto again = segment_scenes(sorted(with_ped), std::nullopt, params);
    REQUIRE(again.size() == spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
      CHECK(again[i].frame_start == spans[i].frame_start);
      CHECK(again[i].frame_end == spans[i].frame_end);
      CHECK(again[i].vehicle_track_hint == spans[i].vehicle_track_hint);
    }
    CHECK(std::any_of(again.begin(), again.end(), [](const auto& s) { return s.interactive; }));
  }
}

TEST_CASE("scene spans round-trip") {
  SceneSpan s{"S-000004", "v3", 12, 99, true};
  CHECK(parse_scene_span(format_scene_span(s)) == s);
}
