#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "pedrisk/ingest.hpp"
#include "pedrisk/vec2.hpp"

namespace pedrisk {

struct HomographyFit {
  Eigen::Matrix3d matrix;         // pixel -> world, normalized so that h33 == 1 when possible
  double rms_reprojection_px = 0.0;
  double max_reprojection_px = 0.0;
};

/// Throws DegenerateCalibration when fewer than four correspondences are given
/// or the points cannot pin down a projective map.
void check_non_degenerate(std::span<const Correspondence> correspondences);

/// Normalized DLT least-squares fit. Reprojection error is measured by mapping
/// the world points back into the image.
HomographyFit fit_homography(std::span<const Correspondence> correspondences);

/// Homogeneous transform with perspective divide; throws PointAtInfinity on the
/// vanishing line.
Vec2 apply_homography(const Eigen::Matrix3d& h, Vec2 p);

struct WorldPoint {
  double x = 0.0;  // meters
  double y = 0.0;  // meters
  double t = 0.0;  // seconds since frame 0

  Vec2 xy() const { return {x, y}; }
  bool operator==(const WorldPoint&) const = default;
};

struct Calibration {
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();  // pixel -> world
  Eigen::Matrix3d inverse = Eigen::Matrix3d::Identity();     // world -> pixel
  double pixels_per_meter = 1.0;                             // P
  double seconds_per_step = 1.0;                             // F
  double fps = 1.0;
  int frame_skip = 1;

  double seconds_at(std::int64_t frame) const { return static_cast<double>(frame) / fps; }

  static Calibration from_homography(const Eigen::Matrix3d& h, double pixels_per_meter, double fps,
                                     int frame_skip);
  // Fronto-parallel camera: world = pixel / P.
  static Calibration from_scale(double pixels_per_meter, double fps, int frame_skip);
};

double pixels_per_meter(double l_pixel, double l_world);
double seconds_per_step(int frame_skip, double fps);

/// Homography from the correspondences when present, otherwise the scalar
/// crosswalk_length_px / crosswalk_length_m fallback.
Calibration calibrate(const SpotConfig& config);

Vec2 project(Vec2 point_px, const Calibration& calib);
WorldPoint project(Vec2 point_px, std::int64_t frame, const Calibration& calib);
Vec2 unproject(Vec2 world, const Calibration& calib);

}  // namespace pedrisk
