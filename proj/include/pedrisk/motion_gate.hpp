#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedrisk/ingest.hpp"

namespace pedrisk {

struct MotionParams {
  int pixel_threshold = 30;       // intensity delta, exclusive
  double active_fraction = 0.005;  // share of cells that must exceed the threshold
  int hangover_frames = 2;         // frames a scene stays open after the vehicle's last detection

  void validate() const;
  // Hangover of two sampled steps.
  static MotionParams for_frame_skip(int frame_skip);
};

struct DeltaGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
};

// Per-frame motion decision keyed by frame index.
using MotionFlags = std::map<std::int64_t, bool>;

/// |a - b| per pixel. Throws DimensionMismatch.
DeltaGrid frame_diff(const GrayFrame& a, const GrayFrame& b);

bool detect_motion(const DeltaGrid& diff, const MotionParams& params);

/// Consecutive-frame gate: frame t is flagged by diff(t-1, t). The first frame
/// takes the flag of the first pair. Frames must be in increasing index order.
MotionFlags motion_flags(std::span<const GrayFrame> frames, const MotionParams& params);

/// Static-background form: the same test with the second operand fixed.
bool motion_against_background(const GrayFrame& frame, const GrayFrame& background,
                               const MotionParams& params);

/// Drops detections on frames flagged motionless. Frames without a flag are kept.
std::vector<DetectionRecord> apply_motion_gate(std::span<const DetectionRecord> detections,
                                               const MotionFlags& flags);

struct SceneSpan {
  std::string scene_id;
  std::string vehicle_track_hint;
  std::int64_t frame_start = 0;
  std::int64_t frame_end = 0;
  bool interactive = false;

  bool operator==(const SceneSpan&) const = default;
};

/// One span per contiguous presence of each vehicle identity. A presence ends
/// once the vehicle has been absent for more than hangover_frames frames; the
/// span closes at its last detection plus the hangover. Vehicle records must
/// carry a track_hint. Output is sorted by (frame_start, hint) and scene ids are
/// "<spot>-<ordinal>".
std::vector<SceneSpan> segment_scenes(std::span<const DetectionRecord> detections,
                                      const std::optional<MotionFlags>& motion_flags,
                                      const MotionParams& params);

inline constexpr std::string_view kScenesSchema = "pedrisk/scenes";

std::string format_scene_span(const SceneSpan& span);
SceneSpan parse_scene_span(std::string_view line);

}  // namespace pedrisk
