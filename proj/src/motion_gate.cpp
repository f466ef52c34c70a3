#include "pedrisk/motion_gate.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "pedrisk/error.hpp"

namespace pedrisk {

void MotionParams::validate() const {
  if (pixel_threshold <= 0 || pixel_threshold >= 255)
    throw Error(ErrorCode::InvalidParameter, "pixel_threshold must be in (0, 255)");
  if (!(active_fraction > 0.0 && active_fraction <= 1.0))
    throw Error(ErrorCode::InvalidParameter, "active_fraction must be in (0, 1]");
  if (hangover_frames < 0) throw Error(ErrorCode::InvalidParameter, "hangover_frames must be >= 0");
}

MotionParams MotionParams::for_frame_skip(int frame_skip) {
  MotionParams p;
  p.hangover_frames = 2 * std::max(frame_skip, 1);
  return p;
}

DeltaGrid frame_diff(const GrayFrame& a, const GrayFrame& b) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size())
    throw Error(ErrorCode::DimensionMismatch, "frames differ in size");
  DeltaGrid out{a.width, a.height, std::vector<std::uint8_t>(a.pixels.size())};
  std::transform(a.pixels.begin(), a.pixels.end(), b.pixels.begin(), out.values.begin(),
                 [](std::uint8_t x, std::uint8_t y) {
                   return static_cast<std::uint8_t>(std::abs(int{x} - int{y}));
                 });
  return out;
}

bool detect_motion(const DeltaGrid& diff, const MotionParams& params) {
  if (diff.values.empty()) return false;
  const auto active = std::count_if(diff.values.begin(), diff.values.end(), [&](std::uint8_t v) {
    return int{v} > params.pixel_threshold;
  });
  return static_cast<double>(active) >=
         params.active_fraction * static_cast<double>(diff.values.size());
}

MotionFlags motion_flags(std::span<const GrayFrame> frames, const MotionParams& params) {
  MotionFlags flags;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].frame_index <= frames[i - 1].frame_index)
      throw Error(ErrorCode::NonMonotoneFrame, "frames must be in increasing index order");
    flags[frames[i].frame_index] = detect_motion(frame_diff(frames[i - 1], frames[i]), params);
  }
  if (frames.size() == 1) flags[frames[0].frame_index] = false;
  else if (frames.size() > 1) flags[frames[0].frame_index] = flags[frames[1].frame_index];
  return flags;
}

bool motion_against_background(const GrayFrame& frame, const GrayFrame& background,
                               const MotionParams& params) {
  return detect_motion(frame_diff(frame, background), params);
}

std::vector<DetectionRecord> apply_motion_gate(std::span<const DetectionRecord> detections,
                                               const MotionFlags& flags) {
  std::vector<DetectionRecord> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    auto it = flags.find(d.frame_index);
    if (it != flags.end() && !it->second) continue;
    out.push_back(d);
  }
  return out;
}

std::vector<SceneSpan> segment_scenes(std::span<const DetectionRecord> detections,
                                      const std::optional<MotionFlags>& motion_flags,
                                      const MotionParams& params) {
  params.validate();
  std::vector<DetectionRecord> gated;
  std::span<const DetectionRecord> input = detections;
  if (motion_flags) {
    gated = apply_motion_gate(detections, *motion_flags);
    input = gated;
  }

  std::string spot_id;
  std::map<std::string, std::vector<std::int64_t>> vehicle_frames;
  std::vector<std::int64_t> pedestrian_frames;
  for (const auto& d : input) {
    if (spot_id.empty()) spot_id = d.spot_id;
    if (d.object_class == ObjectClass::Pedestrian) {
      pedestrian_frames.push_back(d.frame_index);
      continue;
    }
    if (d.track_hint.empty())
      throw Error(ErrorCode::InvalidParameter,
                  "vehicle detection '" + d.detection_id + "' in frame " +
                      std::to_string(d.frame_index) + " has no track hint");
    vehicle_frames[d.track_hint].push_back(d.frame_index);
  }
  std::sort(pedestrian_frames.begin(), pedestrian_frames.end());

  std::vector<SceneSpan> spans;
  for (auto& [hint, frames] : vehicle_frames) {
    std::sort(frames.begin(), frames.end());
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= frames.size(); ++i) {
      // Absent frames strictly between two detections of the same vehicle.
      const bool closes = i == frames.size() || frames[i] - frames[i - 1] - 1 > params.hangover_frames;
      if (!closes) continue;
      SceneSpan s;
      s.vehicle_track_hint = hint;
      s.frame_start = frames[begin];
      s.frame_end = frames[i - 1] + params.hangover_frames;
      auto it = std::lower_bound(pedestrian_frames.begin(), pedestrian_frames.end(), s.frame_start);
      s.interactive = it != pedestrian_frames.end() && *it <= s.frame_end;
      spans.push_back(std::move(s));
      begin = i;
    }
  }

  std::sort(spans.begin(), spans.end(), [](const SceneSpan& a, const SceneSpan& b) {
    return std::tie(a.frame_start, a.vehicle_track_hint) < std::tie(b.frame_start, b.vehicle_track_hint);
  });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i + 1);
    spans[i].scene_id = (spot_id.empty() ? std::string("scene") : spot_id) + "-" + buf;
  }
  return spans;
}

std::string format_scene_span(const SceneSpan& span) {
  nlohmann::ordered_json j;
  j["scene"] = span.scene_id;
  j["vehicle"] = span.vehicle_track_hint;
  j["start"] = span.frame_start;
  j["end"] = span.frame_end;
  j["interactive"] = span.interactive;
  return j.dump();
}

SceneSpan parse_scene_span(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::MalformedRecord, "scene line is not a JSON object");
  try {
    SceneSpan s;
    s.scene_id = j.at("scene").get<std::string>();
    s.vehicle_track_hint = j.at("vehicle").get<std::string>();
    s.frame_start = j.at("start").get<std::int64_t>();
    s.frame_end = j.at("end").get<std::int64_t>();
    s.interactive = j.at("interactive").get<bool>();
    if (s.frame_start > s.frame_end) throw Error(ErrorCode::MalformedRecord, "scene start after end");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("scene line: ") + e.what());
  }
}

}  // namespace pedrisk
