#include <doctest.h>

#include <sstream>

#include "pedrisk/ingest.hpp"
#include "pedrisk/synth.hpp"

using namespace pedrisk;

namespace {

SpotConfig spot_1920() {
  SpotConfig c = synth::synthetic_spot("T");
  c.frame_size = {1920, 1080};
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidParameter;
}

}  // namespace

TEST_CASE("detection line maps fields directly") {
  std::istringstream in(R"({"frame":0,"class":"vehicle","x":512.0,"y":400.0,"id":"d0"})");
  const auto r = parse_detections(in, spot_1920());
  REQUIRE(r.ok());
  REQUIRE(r.records.size() == 1);
  const auto& d = r.records[0];
  CHECK(d.frame_index == 0);
  CHECK(d.object_class == ObjectClass::Vehicle);
  CHECK(d.contact_point_px == Vec2{512.0, 400.0});
  CHECK(d.detection_id == "d0");
  CHECK(d.spot_id == "T");
}

TEST_CASE("empty stream gives no records") {
  std::istringstream in("");
  const auto r = parse_detections(in, spot_1920());
  CHECK(r.records.empty());
  CHECK(r.diagnostics.empty());
}

TEST_CASE("point outside the frame is OutOfBounds") {
  std::istringstream in(R"({"frame":0,"class":"pedestrian","x":2000,"y":100,"id":"a"})");
  const auto r = parse_detections(in, spot_1920());
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].code == ErrorCode::OutOfBounds);
  std::istringstream again(R"({"frame":0,"class":"pedestrian","x":2000,"y":100,"id":"a"})");
  CHECK(code_of([&] { parse_detections_strict(again, spot_1920()); }) == ErrorCode::OutOfBounds);
}

TEST_CASE("every non-blank line yields one record or one diagnostic") {
  const std::string text =
      "{\"schema\":\"pedrisk/detections\",\"version\":1}\n"
      "{\"frame\":1,\"class\":\"car\",\"x\":10,\"y\":10,\"id\":\"a\",\"score\":0.4}\n"
      "\n"
      "not json\n"
      "{\"frame\":1,\"class\":\"truck\",\"x\":10,\"y\":10,\"id\":\"b\"}\n"
      "{\"frame\":1,\"class\":\"person\",\"x\":10,\"y\":10,\"id\":\"a\"}\n"
      "{\"frame\":0,\"class\":\"person\",\"x\":10,\"y\":10,\"id\":\"c\"}\n"
      "{\"frame\":2,\"class\":\"person\",\"x\":10,\"y\":10}\n"
      "{\"frame\":3,\"class\":\"person\",\"x\":10,\"y\":10,\"id\":7,\"track\":\"t9\"}\n";
  std::istringstream in(text);
  const auto r = parse_detections(in, spot_1920());
  CHECK(r.records.size() + r.diagnostics.size() == 7);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[1].detection_id == "7");
  CHECK(r.records[1].track_hint == "t9");
  REQUIRE(r.diagnostics.size() == 5);
  CHECK(r.diagnostics[0].line == 4);
  CHECK(r.diagnostics[0].code == ErrorCode::MalformedRecord);
  CHECK(r.diagnostics[2].code == ErrorCode::MalformedRecord);  // duplicate id in a frame
  CHECK(r.diagnostics[3].code == ErrorCode::NonMonotoneFrame);
  CHECK(r.diagnostics[4].code == ErrorCode::MalformedRecord);
}

TEST_CASE("detections round-trip through the line format") {
  const auto spot = spot_1920();
  std::vector<DetectionRecord> records;
  for (int f = 0; f < 20; ++f) {
    for (int k = 0; k < 3; ++k) {
      DetectionRecord d;
      d.spot_id = "T";
      d.frame_index = f * 2;
      d.object_class = k == 0 ? ObjectClass::Vehicle : ObjectClass::Pedestrian;
      d.contact_point_px = {100.0 + f * 13.1 + k / 3.0, 200.0 + 0.1 * k + 1e-7 * f};
      d.detection_id = "d" + std::to_string(k);
      if (k == 0) d.track_hint = "v1";
      records.push_back(d);
    }
  }
  std::ostringstream out;
  write_detections(out, "T", records);
  std::istringstream in(out.str());
  CHECK(parse_detections_strict(in, spot) == records);
}

TEST_CASE("spot config from a Table 1 row") {
  const std::string doc = R"({
    "spot_id": "H", "crosswalk_length_m": 15.0, "lanes": 2, "signalized": false,
    "school_zone": true, "speed_camera": false, "speed_limit_kmh": 30,
    "frame_size": [1280, 720], "fps": 11, "frame_skip": 5, "crosswalk_length_px": 960
  })";
  const auto c = parse_spot_config(doc);
  CHECK(c.spot_id == "H");
  CHECK(c.fps == 11.0);
  CHECK(c.frame_size == FrameSize{1280, 720});
  CHECK(c.lanes == 2);
  CHECK(c.speed_limit_kmh == 30.0);
  CHECK(c.frame_skip == 5);
  CHECK(c.crosswalk_length_px == 960.0);
  CHECK(parse_spot_config(format_spot_config(c)) == c);

  const std::string spot_c = R"({
    "spot_id": "C", "crosswalk_length_m": 20.0, "lanes": 4, "signalized": false,
    "school_zone": true, "speed_camera": false, "speed_limit_kmh": 30,
    "frame_size": {"width": 1920, "height": 1080}, "fps": 15, "crosswalk_length_px": 700
  })";
  const auto cc = parse_spot_config(spot_c);
  CHECK(cc.crosswalk_length_m == 20.0);
  CHECK(cc.lanes == 4);
  CHECK_FALSE(cc.signalized);
  CHECK(cc.school_zone);
  CHECK_FALSE(cc.speed_camera);
}

TEST_CASE("spot config validation") {
  const std::string missing_fps = R"({
    "spot_id": "X", "crosswalk_length_m": 15.0, "lanes": 2, "signalized": false,
    "school_zone": false, "speed_camera": false, "speed_limit_kmh": 30,
    "frame_size": [1280, 720], "crosswalk_length_px": 960
  })";
  CHECK(code_of([&] { parse_spot_config(missing_fps); }) == ErrorCode::MissingField);

  auto c = synth::synthetic_spot("S");
  c.frame_skip = 0;
  CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidParameter);
  c = synth::synthetic_spot("S");
  c.crosswalk_length_m = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = synth::synthetic_spot("S");
  for (std::size_t i = 0; i < c.calibration.size(); ++i) c.calibration[i].world = {double(i), 2.0 * i};
  CHECK(code_of([&] { validate(c); }) == ErrorCode::DegenerateCalibration);
  CHECK_NOTHROW(validate(synth::synthetic_spot("S")));
  CHECK(parse_spot_config(format_spot_config(synth::synthetic_spot("S"))) == synth::synthetic_spot("S"));
}

TEST_CASE("gray frames round-trip and check their size") {
  GrayFrame f(42, 5, 3, 7);
  f.at(2, 4) = 200;
  std::stringstream buf;
  write_gray_frame(buf, f);
  const auto g = read_gray_frame(buf);
  CHECK(g.frame_index == 42);
  CHECK(g.width == 5);
  CHECK(g.height == 3);
  CHECK(g.pixels == f.pixels);

  std::stringstream bad;
  write_gray_frame(bad, f);
  CHECK(code_of([&] { read_gray_frame(bad, synth::synthetic_spot("S")); }) == ErrorCode::DimensionMismatch);

  std::stringstream truncated(std::string("\x05\x00\x00\x00", 4));
  CHECK_THROWS_AS(read_gray_frame(truncated), Error);
}
