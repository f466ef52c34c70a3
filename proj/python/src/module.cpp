#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pedrisk/analytics.hpp"
#include "pedrisk/error.hpp"
#include "pedrisk/features.hpp"
#include "pedrisk/geometry.hpp"
#include "pedrisk/pipeline.hpp"
#include "pedrisk/synth.hpp"

namespace py = pybind11;
using namespace pedrisk;

namespace {

using XY = std::pair<double, double>;
using XYT = std::tuple<double, double, double>;

// World-coordinate trajectory; the pixel fields mirror the world point.
Trajectory to_trajectory(const std::vector<XYT>& points, ObjectClass cls) {
  Trajectory t;
  t.object_class = cls;
  std::int64_t frame = 0;
  for (const auto& [x, y, s] : points) {
    TrajectoryPoint p;
    p.frame = frame++;
    p.raw_px = p.smoothed_px = {x, y};
    p.world = p.world_smoothed = {x, y, s};
    t.points.push_back(p);
  }
  return t;
}

std::vector<XYT> from_trajectory(const Trajectory& t) {
  std::vector<XYT> out;
  for (const auto& p : t.points) out.emplace_back(p.world.x, p.world.y, p.world.t);
  return out;
}

std::vector<SpotSamples> to_spots(const std::map<std::string, std::vector<double>>& spots) {
  std::vector<SpotSamples> out;
  for (const auto& [id, samples] : spots) out.push_back({id, samples, std::nullopt});
  return out;
}

py::dict distribution_dict(const PsmDistribution& d) {
  py::dict r;
  r["group"] = d.group;
  r["samples"] = d.samples;
  r["weights"] = d.weights;
  r["sample_spot"] = d.sample_spot;
  r["spot_weights"] = d.spot_weights;
  r["degenerate"] = d.degenerate;
  r["edges"] = d.histogram.edges;
  r["masses"] = d.histogram.masses;
  return r;
}

PipelineConfig make_config(const std::optional<std::filesystem::path>& config_path,
                           const std::optional<std::filesystem::path>& in_dir,
                           const std::optional<std::filesystem::path>& out_dir,
                           std::optional<std::uint64_t> seed, std::optional<unsigned> workers,
                           std::optional<int> scenes_per_spot, std::optional<double> noise_sigma,
                           const std::vector<std::string>& spots) {
  PipelineConfig c = config_path ? load_pipeline_config(*config_path) : PipelineConfig{};
  if (in_dir) c.in_dir = *in_dir;
  if (out_dir) c.out_dir = *out_dir;
  if (seed) c.seed = *seed;
  if (workers) c.workers = *workers;
  if (scenes_per_spot) c.synth_scenes_per_spot = *scenes_per_spot;
  if (noise_sigma) c.synth_noise_sigma = *noise_sigma;
  if (!spots.empty()) c.spot_filter = spots;
  c.validate();
  return c;
}

template <void (*Stage)(const PipelineConfig&, const StageLog&)>
void bind_stage(py::module_& m, const char* name, const char* doc) {
  m.def(
      name,
      [](const std::optional<std::filesystem::path>& config,
         const std::optional<std::filesystem::path>& in_dir,
         const std::optional<std::filesystem::path>& out_dir, std::optional<std::uint64_t> seed,
         std::optional<unsigned> workers, std::optional<int> scenes_per_spot,
         std::optional<double> noise_sigma, const std::vector<std::string>& spots) {
        const auto c = make_config(config, in_dir, out_dir, seed, workers, scenes_per_spot, noise_sigma, spots);
        std::vector<std::string> log;
        {
          py::gil_scoped_release release;
          Stage(c, [&](const std::string& line) { log.push_back(line); });
        }
        return log;
      },
      doc, py::arg("config") = py::none(), py::arg("in_dir") = py::none(), py::arg("out_dir") = py::none(),
      py::arg("seed") = py::none(), py::arg("workers") = py::none(), py::arg("scenes_per_spot") = py::none(),
      py::arg("noise_sigma") = py::none(), py::arg("spots") = std::vector<std::string>{});
}

}  // namespace

PYBIND11_MODULE(_pedrisk, m) {
  m.doc() = "Pedestrian-vehicle risk analysis over CCTV detections";

  static py::exception<Error> error(m, "PedriskError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def(
      "fit_homography",
      [](const std::vector<XY>& pixels, const std::vector<XY>& world) {
        if (pixels.size() != world.size())
          throw Error(ErrorCode::DimensionMismatch, "pixel and world point counts differ");
        std::vector<Correspondence> c;
        for (std::size_t i = 0; i < pixels.size(); ++i)
          c.push_back({{pixels[i].first, pixels[i].second}, {world[i].first, world[i].second}});
        const auto fit = fit_homography(c);
        return py::make_tuple(fit.matrix, fit.rms_reprojection_px, fit.max_reprojection_px);
      },
      "Pixel -> world homography from four or more correspondences: (H, rms_px, max_px).",
      py::arg("pixels"), py::arg("world"));
  m.def(
      "apply_homography",
      [](const Eigen::Matrix3d& h, const std::vector<XY>& points) {
        std::vector<XY> out;
        for (const auto& [x, y] : points) {
          const Vec2 p = apply_homography(h, {x, y});
          out.emplace_back(p.x, p.y);
        }
        return out;
      },
      py::arg("h"), py::arg("points"));
  m.def("pixels_per_meter", &pixels_per_meter, py::arg("l_pixel"), py::arg("l_world"));
  m.def("seconds_per_step", &seconds_per_step, py::arg("frame_skip"), py::arg("fps"));

  m.def(
      "speed_list",
      [](const std::vector<XYT>& points) {
        return speed_list(to_trajectory(points, ObjectClass::Vehicle), Calibration::from_scale(1.0, 1.0, 1));
      },
      "Speeds in km/h between consecutive world points (x m, y m, t s).", py::arg("points"));
  m.def(
      "low_pass", [](const std::vector<double>& s, double alpha) { return low_pass(s, alpha); },
      py::arg("speeds"), py::arg("alpha"));
  m.def(
      "acceleration_list",
      [](const std::vector<double>& filtered, double epsilon_kmh) {
        std::vector<std::string> out;
        for (auto s : acceleration_list(filtered, epsilon_kmh)) out.emplace_back(to_string(s));
        return out;
      },
      py::arg("filtered"), py::arg("epsilon_kmh"));
  m.def(
      "psm",
      [](const std::vector<XYT>& vehicle, const std::vector<XYT>& pedestrian) -> py::object {
        const auto r = psm(to_trajectory(vehicle, ObjectClass::Vehicle),
                           to_trajectory(pedestrian, ObjectClass::Pedestrian));
        if (!r) return py::none();
        py::dict d;
        d["seconds"] = r->seconds;
        d["step_seconds"] = r->step_seconds;
        d["conflict_point"] = XY{r->conflict_point.x, r->conflict_point.y};
        d["pedestrian_step"] = r->pedestrian_step;
        d["vehicle_step"] = r->vehicle_step;
        return std::move(d);
      },
      "Post-encroachment time between two world paths, or None when they never cross.",
      py::arg("vehicle"), py::arg("pedestrian"));

  m.def(
      "weighted_quantile",
      [](const std::vector<double>& x, const std::vector<double>& w, double q) {
        return weighted_quantile(x, w, q);
      },
      py::arg("samples"), py::arg("weights"), py::arg("q"));
  m.def(
      "weighted_merge",
      [](const std::map<std::string, std::vector<double>>& spots, const std::string& group) {
        auto d = weighted_merge(group, to_spots(spots));
        d.histogram = freedman_diaconis_histogram(d.samples, d.weights);
        return distribution_dict(d);
      },
      "Merge per-spot PSM samples with spot weights (total - size) / total, binned by Freedman-Diaconis.", py::arg("spots"),
      py::arg("group") = "merged");
  m.def(
      "psm_ranges",
      [](const std::map<std::string, std::vector<double>>& spots) {
        const auto r = psm_ranges(weighted_merge("merged", to_spots(spots)));
        return std::vector<double>(r.boundaries.begin(), r.boundaries.end());
      },
      "Seven ascending range boundaries from the merged distribution.", py::arg("spots"));
  m.def(
      "range_of",
      [](const std::vector<double>& boundaries, double psm_seconds) {
        if (boundaries.size() != 7) throw Error(ErrorCode::InvalidParameter, "expected seven boundaries");
        PsmRanges r;
        std::copy(boundaries.begin(), boundaries.end(), r.boundaries.begin());
        return r.range_of(psm_seconds);
      },
      py::arg("boundaries"), py::arg("psm_seconds"));

  m.def(
      "random_crossing_pair",
      [](std::uint64_t seed) {
        const auto p = synth::random_crossing_pair(seed);
        py::dict d;
        d["vehicle"] = from_trajectory(p.vehicle);
        d["pedestrian"] = from_trajectory(p.pedestrian);
        d["seconds_per_step"] = p.seconds_per_step;
        return d;
      },
      py::arg("seed"));
  m.def("standard_scenarios", [] {
    std::vector<std::string> names;
    for (const auto& s : synth::standard_corpus()) names.push_back(s.spec.name);
    return names;
  });

  bind_stage<run_synth>(m, "run_synth", "Write a synthetic corpus under out_dir.");
  bind_stage<run_segment>(m, "run_segment", "Motion gating and scene segmentation.");
  bind_stage<run_track>(m, "run_track", "Per-scene tracking and validation.");
  bind_stage<run_extract>(m, "run_extract", "Scene-level features.");
  bind_stage<run_analyze>(m, "run_analyze", "Spot statistics and PSM distributions.");
  bind_stage<run_report>(m, "run_report", "CSV tables and plot data.");
  bind_stage<run_all>(m, "run_all", "Every stage in order.");
}
