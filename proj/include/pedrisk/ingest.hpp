#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedrisk/error.hpp"
#include "pedrisk/vec2.hpp"

namespace pedrisk {

enum class ObjectClass { Vehicle, Pedestrian };

std::string_view to_string(ObjectClass c);
ObjectClass parse_object_class(std::string_view text);

// One detected object in one frame. The contact point is the ground tip: under
// the front bumper for vehicles, between the feet for pedestrians.
struct DetectionRecord {
  std::string spot_id;
  std::int64_t frame_index = 0;
  ObjectClass object_class = ObjectClass::Vehicle;
  Vec2 contact_point_px;
  std::string detection_id;
  // Stable identity when the producer (or an earlier tracking pass) has one.
  std::string track_hint;

  bool operator==(const DetectionRecord&) const = default;
};

struct FrameSize {
  int width = 0;
  int height = 0;
  bool operator==(const FrameSize&) const = default;
};

struct Correspondence {
  Vec2 pixel;
  Vec2 world;
  bool operator==(const Correspondence&) const = default;
};

using Polygon = std::vector<Vec2>;

struct SpotConfig {
  std::string spot_id;
  double crosswalk_length_m = 0.0;
  int lanes = 0;
  bool signalized = false;
  bool school_zone = false;
  bool speed_camera = false;
  double speed_limit_kmh = 0.0;
  FrameSize frame_size;
  double fps = 0.0;
  int frame_skip = 1;
  std::vector<Correspondence> calibration;
  // Scalar fallback when no point correspondences are available.
  std::optional<double> crosswalk_length_px;
  Polygon crosswalk_polygon_world;
  std::vector<Polygon> sidewalk_polygons_world;
  Vec2 approach_direction_world{1.0, 0.0};
  double cia_buffer_m = 3.0;

  bool operator==(const SpotConfig&) const = default;
};

/// Throws MissingField / InvalidParameter / DegenerateCalibration.
void validate(const SpotConfig& config);

SpotConfig parse_spot_config(std::string_view document);
std::string format_spot_config(const SpotConfig& config);
SpotConfig load_spot_config(const std::filesystem::path& path);

struct Diagnostic {
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::MalformedRecord;
  std::string message;
};

struct DetectionParseResult {
  std::vector<DetectionRecord> records;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

inline constexpr std::string_view kDetectionsSchema = "pedrisk/detections";

// Each non-blank line yields exactly one record or one diagnostic. A schema
// header line, when present, is consumed without producing either.
DetectionParseResult parse_detections(std::istream& in, const SpotConfig& config);

// Same as parse_detections but throws on the first diagnostic.
std::vector<DetectionRecord> parse_detections_strict(std::istream& in, const SpotConfig& config);

std::string format_detection(const DetectionRecord& record);
void write_detections(std::ostream& out, std::string_view spot_id,
                      std::span<const DetectionRecord> records);

struct GrayFrame {
  std::int64_t frame_index = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width * height

  GrayFrame() = default;
  GrayFrame(std::int64_t index, int w, int h, std::uint8_t fill = 0)
      : frame_index(index), width(w), height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
};

// Binary layout: three little-endian int32 (width, height, frame_index) then
// width*height bytes.
GrayFrame read_gray_frame(std::istream& in);
void write_gray_frame(std::ostream& out, const GrayFrame& frame);
GrayFrame read_gray_frame(std::istream& in, const SpotConfig& config);

}  // namespace pedrisk
