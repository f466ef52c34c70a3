#include "pedrisk/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedrisk/geometry.hpp"
#include "json_util.hpp"

namespace pedrisk {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(ObjectClass c) {
  return c == ObjectClass::Vehicle ? "vehicle" : "pedestrian";
}

ObjectClass parse_object_class(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "vehicle" || lower == "car") return ObjectClass::Vehicle;
  if (lower == "pedestrian" || lower == "person") return ObjectClass::Pedestrian;
  throw Error(ErrorCode::MalformedRecord, "unknown object class '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Spot configuration

namespace {

Vec2 parse_vec2(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::MalformedRecord, std::string(what) + " must be a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

Polygon parse_polygon(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedRecord, std::string(what) + " must be a list");
  Polygon poly;
  for (const auto& v : j) poly.push_back(parse_vec2(v, what));
  return poly;
}

const json& require(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null())
    throw Error(ErrorCode::MissingField, std::string("spot config is missing '") + key + "'");
  return *it;
}

template <typename T>
T require_as(const json& doc, const char* key) {
  const json& v = require(doc, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::MalformedRecord, std::string("spot config field '") + key +
                                                "' has the wrong type");
  }
}

ordered_json vec2_json(Vec2 v) { return ordered_json::array({v.x, v.y}); }

}  // namespace

void validate(const SpotConfig& c) {
  if (c.spot_id.empty()) throw Error(ErrorCode::MissingField, "spot_id is empty");
  if (!(c.fps > 0.0)) throw Error(ErrorCode::InvalidParameter, "fps must be positive");
  if (c.frame_skip < 1) throw Error(ErrorCode::InvalidParameter, "frame_skip must be >= 1");
  if (!(c.crosswalk_length_m > 0.0))
    throw Error(ErrorCode::InvalidParameter, "crosswalk_length_m must be positive");
  if (c.frame_size.width <= 0 || c.frame_size.height <= 0)
    throw Error(ErrorCode::InvalidParameter, "frame_size must be positive");
  if (c.lanes < 0) throw Error(ErrorCode::InvalidParameter, "lanes must be non-negative");
  if (!(c.cia_buffer_m >= 0.0))
    throw Error(ErrorCode::InvalidParameter, "cia_buffer_m must be non-negative");
  if (!(norm(c.approach_direction_world) > 0.0))
    throw Error(ErrorCode::InvalidParameter, "approach_direction_world must be non-zero");
  if (c.calibration.empty()) {
    if (!c.crosswalk_length_px)
      throw Error(ErrorCode::MissingField,
                  "spot config needs 'calibration' correspondences or 'crosswalk_length_px'");
    if (!(*c.crosswalk_length_px > 0.0))
      throw Error(ErrorCode::InvalidParameter, "crosswalk_length_px must be positive");
  } else {
    check_non_degenerate(c.calibration);
  }
}

SpotConfig parse_spot_config(std::string_view document) {
  json doc = json::parse(document, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    throw Error(ErrorCode::MalformedRecord, "spot config is not a JSON object");

  SpotConfig c;
  c.spot_id = require_as<std::string>(doc, "spot_id");
  c.crosswalk_length_m = require_as<double>(doc, "crosswalk_length_m");
  c.lanes = require_as<int>(doc, "lanes");
  c.signalized = require_as<bool>(doc, "signalized");
  c.school_zone = require_as<bool>(doc, "school_zone");
  c.speed_camera = require_as<bool>(doc, "speed_camera");
  c.speed_limit_kmh = require_as<double>(doc, "speed_limit_kmh");
  c.fps = require_as<double>(doc, "fps");
  c.frame_skip = doc.value("frame_skip", 1);

  const json& fs = require(doc, "frame_size");
  if (fs.is_array() && fs.size() == 2 && fs[0].is_number_integer() && fs[1].is_number_integer()) {
    c.frame_size = {fs[0].get<int>(), fs[1].get<int>()};
  } else if (fs.is_object() && fs.contains("width") && fs.contains("height")) {
    c.frame_size = {fs["width"].get<int>(), fs["height"].get<int>()};
  } else {
    throw Error(ErrorCode::MalformedRecord, "frame_size must be [width, height]");
  }

  if (auto it = doc.find("calibration"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::MalformedRecord, "calibration must be a list");
    for (const auto& pair : *it) {
      if (!pair.is_object() || !pair.contains("pixel") || !pair.contains("world"))
        throw Error(ErrorCode::MalformedRecord,
                    "calibration entries need 'pixel' and 'world' points");
      c.calibration.push_back(
          {parse_vec2(pair["pixel"], "calibration.pixel"), parse_vec2(pair["world"], "calibration.world")});
    }
  }
  if (auto it = doc.find("crosswalk_length_px"); it != doc.end() && !it->is_null())
    c.crosswalk_length_px = it->get<double>();
  if (auto it = doc.find("crosswalk_polygon_world"); it != doc.end() && !it->is_null())
    c.crosswalk_polygon_world = parse_polygon(*it, "crosswalk_polygon_world");
  if (auto it = doc.find("sidewalk_polygons_world"); it != doc.end() && !it->is_null()) {
    if (!it->is_array())
      throw Error(ErrorCode::MalformedRecord, "sidewalk_polygons_world must be a list");
    for (const auto& p : *it) c.sidewalk_polygons_world.push_back(parse_polygon(p, "sidewalk polygon"));
  }
  if (auto it = doc.find("approach_direction_world"); it != doc.end() && !it->is_null()) {
    Vec2 d = parse_vec2(*it, "approach_direction_world");
    double n = norm(d);
    if (n > 0.0) d = (1.0 / n) * d;
    c.approach_direction_world = d;
  }
  c.cia_buffer_m = doc.value("cia_buffer_m", 3.0);

  validate(c);
  return c;
}

std::string format_spot_config(const SpotConfig& c) {
  ordered_json doc;
  doc["spot_id"] = c.spot_id;
  doc["crosswalk_length_m"] = c.crosswalk_length_m;
  doc["lanes"] = c.lanes;
  doc["signalized"] = c.signalized;
  doc["school_zone"] = c.school_zone;
  doc["speed_camera"] = c.speed_camera;
  doc["speed_limit_kmh"] = c.speed_limit_kmh;
  doc["frame_size"] = ordered_json::array({c.frame_size.width, c.frame_size.height});
  doc["fps"] = c.fps;
  doc["frame_skip"] = c.frame_skip;
  ordered_json calib = ordered_json::array();
  for (const auto& corr : c.calibration)
    calib.push_back({{"pixel", vec2_json(corr.pixel)}, {"world", vec2_json(corr.world)}});
  doc["calibration"] = calib;
  if (c.crosswalk_length_px) doc["crosswalk_length_px"] = *c.crosswalk_length_px;
  ordered_json cw = ordered_json::array();
  for (Vec2 v : c.crosswalk_polygon_world) cw.push_back(vec2_json(v));
  doc["crosswalk_polygon_world"] = cw;
  ordered_json sw = ordered_json::array();
  for (const auto& poly : c.sidewalk_polygons_world) {
    ordered_json p = ordered_json::array();
    for (Vec2 v : poly) p.push_back(vec2_json(v));
    sw.push_back(p);
  }
  doc["sidewalk_polygons_world"] = sw;
  doc["approach_direction_world"] = vec2_json(c.approach_direction_world);
  doc["cia_buffer_m"] = c.cia_buffer_m;
  return doc.dump(2) + "\n";
}

SpotConfig load_spot_config(const std::filesystem::path& path) {
  return parse_spot_config(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Detection records

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); });
}

}  // namespace

DetectionParseResult parse_detections(std::istream& in, const SpotConfig& config) {
  DetectionParseResult result;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::int64_t> last_frame;
  std::set<std::string> ids_in_frame;

  auto diag = [&](ErrorCode code, std::string message) {
    result.diagnostics.push_back({line_no, code, std::move(message)});
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;

    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      diag(ErrorCode::MalformedRecord, "not a JSON object");
      continue;
    }
    if (auto it = j.find("schema"); it != j.end()) {
      if (!it->is_string() || it->get<std::string>() != kDetectionsSchema)
        diag(ErrorCode::SchemaMismatch, "unexpected schema header");
      continue;
    }

    const auto frame = j.find("frame");
    const auto cls = j.find("class");
    const auto x = j.find("x");
    const auto y = j.find("y");
    const auto id = j.find("id");
    if (frame == j.end() || cls == j.end() || x == j.end() || y == j.end() || id == j.end()) {
      diag(ErrorCode::MalformedRecord, "record needs frame, class, x, y and id");
      continue;
    }
    if (!frame->is_number_integer() || frame->get<std::int64_t>() < 0 || !cls->is_string() ||
        !x->is_number() || !y->is_number() || !(id->is_string() || id->is_number_integer())) {
      diag(ErrorCode::MalformedRecord, "record field has the wrong type");
      continue;
    }

    DetectionRecord r;
    r.frame_index = frame->get<std::int64_t>();
    try {
      r.object_class = parse_object_class(cls->get<std::string>());
    } catch (const Error& e) {
      diag(e.code(), e.what());
      continue;
    }
    r.contact_point_px = {x->get<double>(), y->get<double>()};
    r.detection_id = id->is_string() ? id->get<std::string>() : std::to_string(id->get<std::int64_t>());
    r.spot_id = config.spot_id;
    if (auto s = j.find("spot"); s != j.end() && s->is_string()) r.spot_id = s->get<std::string>();
    if (auto t = j.find("track"); t != j.end()) {
      if (t->is_string()) r.track_hint = t->get<std::string>();
      else if (t->is_number_integer()) r.track_hint = std::to_string(t->get<std::int64_t>());
    }
    // "score" and any other extra field are accepted and ignored.

    const Vec2 p = r.contact_point_px;
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < config.frame_size.width &&
          p.y < config.frame_size.height)) {
      diag(ErrorCode::OutOfBounds, "contact point outside the " +
                                       std::to_string(config.frame_size.width) + "x" +
                                       std::to_string(config.frame_size.height) + " frame");
      continue;
    }
    if (last_frame && r.frame_index < *last_frame) {
      diag(ErrorCode::NonMonotoneFrame, "frame " + std::to_string(r.frame_index) +
                                            " after frame " + std::to_string(*last_frame));
      continue;
    }
    if (!last_frame || r.frame_index != *last_frame) ids_in_frame.clear();
    if (!ids_in_frame.insert(r.detection_id).second) {
      diag(ErrorCode::MalformedRecord, "duplicate detection id '" + r.detection_id + "' in frame " +
                                           std::to_string(r.frame_index));
      continue;
    }
    last_frame = r.frame_index;
    result.records.push_back(std::move(r));
  }
  return result;
}

std::vector<DetectionRecord> parse_detections_strict(std::istream& in, const SpotConfig& config) {
  auto result = parse_detections(in, config);
  if (!result.ok()) {
    const auto& d = result.diagnostics.front();
    throw Error(d.code, "line " + std::to_string(d.line) + ": " + d.message);
  }
  return std::move(result.records);
}

std::string format_detection(const DetectionRecord& r) {
  ordered_json j;
  j["frame"] = r.frame_index;
  j["class"] = to_string(r.object_class);
  j["x"] = r.contact_point_px.x;
  j["y"] = r.contact_point_px.y;
  j["id"] = r.detection_id;
  if (!r.spot_id.empty()) j["spot"] = r.spot_id;
  if (!r.track_hint.empty()) j["track"] = r.track_hint;
  return j.dump();
}

void write_detections(std::ostream& out, std::string_view spot_id,
                      std::span<const DetectionRecord> records) {
  ordered_json header;
  header["schema"] = kDetectionsSchema;
  header["version"] = 1;
  header["spot"] = spot_id;
  out << header.dump() << '\n';
  for (const auto& r : records) out << format_detection(r) << '\n';
}

// ---------------------------------------------------------------------------
// Grayscale frames

namespace {

std::int32_t read_i32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw Error(ErrorCode::MalformedRecord, "truncated frame header");
  const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                          (static_cast<std::uint32_t>(b[2]) << 16) |
                          (static_cast<std::uint32_t>(b[3]) << 24);
  std::int32_t v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}

void write_i32(std::ostream& out, std::int32_t v) {
  std::uint32_t u;
  std::memcpy(&u, &v, sizeof u);
  const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                              static_cast<unsigned char>((u >> 8) & 0xff),
                              static_cast<unsigned char>((u >> 16) & 0xff),
                              static_cast<unsigned char>((u >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

GrayFrame read_gray_frame(std::istream& in) {
  const std::int32_t w = read_i32(in);
  const std::int32_t h = read_i32(in);
  const std::int32_t index = read_i32(in);
  if (w <= 0 || h <= 0 || index < 0)
    throw Error(ErrorCode::MalformedRecord, "invalid frame header");
  GrayFrame f(index, w, h);
  if (!in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size())))
    throw Error(ErrorCode::MalformedRecord, "truncated frame pixels");
  return f;
}

GrayFrame read_gray_frame(std::istream& in, const SpotConfig& config) {
  GrayFrame f = read_gray_frame(in);
  if (f.width != config.frame_size.width || f.height != config.frame_size.height)
    throw Error(ErrorCode::DimensionMismatch, "frame size differs from the spot configuration");
  return f;
}

void write_gray_frame(std::ostream& out, const GrayFrame& frame) {
  if (frame.frame_index > std::numeric_limits<std::int32_t>::max())
    throw Error(ErrorCode::InvalidParameter, "frame index does not fit the header");
  write_i32(out, frame.width);
  write_i32(out, frame.height);
  write_i32(out, static_cast<std::int32_t>(frame.frame_index));
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing frame");
}

}  // namespace pedrisk
