#include "pedrisk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pedrisk/error.hpp"

namespace pedrisk {

namespace {

bool collinear(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 u = b - a;
  const Vec2 v = c - a;
  const double scale = std::max({dot(u, u), dot(v, v), dot(c - b, c - b)});
  if (scale == 0.0) return true;
  return std::abs(cross(u, v)) <= 1e-9 * scale;
}

bool general_position(std::span<const Vec2> pts) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k)
        if (collinear(pts[i], pts[j], pts[k])) return false;
  return true;
}

bool quad_ok(std::span<const Correspondence> c, std::size_t a, std::size_t b, std::size_t d,
             std::size_t e) {
  const Vec2 w[4] = {c[a].world, c[b].world, c[d].world, c[e].world};
  const Vec2 p[4] = {c[a].pixel, c[b].pixel, c[d].pixel, c[e].pixel};
  return general_position(w) && general_position(p);
}

// Translate to the centroid and scale to mean distance sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Vec2> pts) {
  Vec2 mean{};
  for (Vec2 p : pts) mean = mean + p;
  mean = (1.0 / static_cast<double>(pts.size())) * mean;
  double d = 0.0;
  for (Vec2 p : pts) d += distance(p, mean);
  d /= static_cast<double>(pts.size());
  const double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x, 0, s, -s * mean.y, 0, 0, 1;
  return t;
}

Vec2 transform(const Eigen::Matrix3d& t, Vec2 p) {
  return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

}  // namespace

void check_non_degenerate(std::span<const Correspondence> c) {
  const std::size_t n = c.size();
  if (n < 4)
    throw Error(ErrorCode::DegenerateCalibration,
                "need at least 4 correspondences, got " + std::to_string(n));
  if (n == 4) {
    if (!quad_ok(c, 0, 1, 2, 3))
      throw Error(ErrorCode::DegenerateCalibration, "three of the four points are collinear");
    return;
  }
  // Larger sets only need one minimal subset in general position.
  const std::size_t limit = std::min<std::size_t>(n, 24);
  for (std::size_t a = 0; a < limit; ++a)
    for (std::size_t b = a + 1; b < limit; ++b)
      for (std::size_t d = b + 1; d < limit; ++d)
        for (std::size_t e = d + 1; e < limit; ++e)
          if (quad_ok(c, a, b, d, e)) return;
  throw Error(ErrorCode::DegenerateCalibration, "no four points in general position");
}

HomographyFit fit_homography(std::span<const Correspondence> c) {
  check_non_degenerate(c);
  const std::size_t n = c.size();

  std::vector<Vec2> px(n), wd(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = c[i].pixel;
    wd[i] = c[i].world;
  }
  const Eigen::Matrix3d tp = normalizer(px);
  const Eigen::Matrix3d tw = normalizer(wd);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = transform(tp, px[i]);
    const Vec2 w = transform(tw, wd[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -p.x, -p.y, -1, 0, 0, 0, w.x * p.x, w.x * p.y, w.x;
    a.row(r + 1) << 0, 0, 0, -p.x, -p.y, -1, w.y * p.x, w.y * p.y, w.y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space is required; rank < 8 means the points do not
  // determine the map.
  if (sv.size() >= 8 && sv(7) <= 1e-12 * sv(0))
    throw Error(ErrorCode::DegenerateCalibration, "correspondences do not determine a homography");

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d m = tw.inverse() * hn * tp;
  if (std::abs(m(2, 2)) > 1e-12 * m.norm()) m /= m(2, 2);
  else m /= m.norm();

  HomographyFit fit{m, 0.0, 0.0};
  const Eigen::Matrix3d inv = m.inverse();
  double sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = distance(apply_homography(inv, wd[i]), px[i]);
    sum2 += e * e;
    fit.max_reprojection_px = std::max(fit.max_reprojection_px, e);
  }
  fit.rms_reprojection_px = std::sqrt(sum2 / static_cast<double>(n));
  return fit;
}

Vec2 apply_homography(const Eigen::Matrix3d& h, Vec2 p) {
  const double x = h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2);
  const double y = h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2);
  const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
  const double scale = std::abs(h(2, 0) * p.x) + std::abs(h(2, 1) * p.y) + std::abs(h(2, 2));
  if (!(std::abs(w) > 1e-12 * scale))
    throw Error(ErrorCode::PointAtInfinity, "point lies on the vanishing line");
  return {x / w, y / w};
}

Calibration Calibration::from_homography(const Eigen::Matrix3d& h, double ppm, double fps,
                                         int frame_skip) {
  Calibration c;
  c.homography = h;
  c.inverse = h.inverse();
  c.pixels_per_meter = ppm;
  c.seconds_per_step = pedrisk::seconds_per_step(frame_skip, fps);
  c.fps = fps;
  c.frame_skip = frame_skip;
  if (!(ppm > 0.0)) throw Error(ErrorCode::NonPositiveLength, "pixels per meter must be positive");
  if (!std::isfinite(c.inverse.sum()) || std::abs(h.determinant()) < 1e-300)
    throw Error(ErrorCode::DegenerateCalibration, "homography is not invertible");
  return c;
}

Calibration Calibration::from_scale(double ppm, double fps, int frame_skip) {
  if (!(ppm > 0.0)) throw Error(ErrorCode::NonPositiveLength, "pixels per meter must be positive");
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h(0, 0) = h(1, 1) = 1.0 / ppm;
  return from_homography(h, ppm, fps, frame_skip);
}

double pixels_per_meter(double l_pixel, double l_world) {
  if (!(l_pixel > 0.0) || !(l_world > 0.0))
    throw Error(ErrorCode::NonPositiveLength, "lengths must be positive");
  return l_pixel / l_world;
}

double seconds_per_step(int frame_skip, double fps) {
  if (frame_skip <= 0 || !(fps > 0.0))
    throw Error(ErrorCode::NonPositiveRate, "frame_skip and fps must be positive");
  return static_cast<double>(frame_skip) / fps;
}

Calibration calibrate(const SpotConfig& config) {
  if (config.calibration.empty()) {
    if (!config.crosswalk_length_px)
      throw Error(ErrorCode::MissingField, "no calibration and no crosswalk_length_px");
    return Calibration::from_scale(
        pixels_per_meter(*config.crosswalk_length_px, config.crosswalk_length_m), config.fps,
        config.frame_skip);
  }

  const Eigen::Matrix3d h = fit_homography(config.calibration).matrix;
  const Eigen::Matrix3d inv = h.inverse();
  double ppm = 0.0;
  if (config.crosswalk_length_px) {
    ppm = pixels_per_meter(*config.crosswalk_length_px, config.crosswalk_length_m);
  } else if (config.crosswalk_polygon_world.size() >= 3) {
    // Pixel length of the crosswalk centreline, measured across the road.
    const Vec2 d = config.approach_direction_world;
    const Vec2 across{-d.y, d.x};
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double along = 0.0;
    for (Vec2 v : config.crosswalk_polygon_world) {
      lo = std::min(lo, dot(v, across));
      hi = std::max(hi, dot(v, across));
      along += dot(v, d);
    }
    along /= static_cast<double>(config.crosswalk_polygon_world.size());
    const Vec2 a = along * d + lo * across;
    const Vec2 b = along * d + hi * across;
    ppm = pixels_per_meter(distance(apply_homography(inv, a), apply_homography(inv, b)),
                           config.crosswalk_length_m);
  } else {
    double pix = 0.0;
    double world = 0.0;
    const auto& c = config.calibration;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      pix += distance(c[i].pixel, c[i + 1].pixel);
      world += distance(c[i].world, c[i + 1].world);
    }
    ppm = pixels_per_meter(pix, world);
  }
  return Calibration::from_homography(h, ppm, config.fps, config.frame_skip);
}

Vec2 project(Vec2 point_px, const Calibration& calib) {
  return apply_homography(calib.homography, point_px);
}

WorldPoint project(Vec2 point_px, std::int64_t frame, const Calibration& calib) {
  const Vec2 w = project(point_px, calib);
  return {w.x, w.y, calib.seconds_at(frame)};
}

Vec2 unproject(Vec2 world, const Calibration& calib) {
  return apply_homography(calib.inverse, world);
}

}  // namespace pedrisk
