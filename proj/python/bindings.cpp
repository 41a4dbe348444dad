#include <certignc/gnc.h>
#include <certignc/io.h>
#include <certignc/pipeline.h>
#include <certignc/report.h>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace certignc;

namespace {

py::object json_to_py(const nlohmann::json &j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict estimate_to_dict(const Estimate &e) {
  py::dict poses, landmarks;
  for (const auto &[id, pose] : e.poses)
    poses[py::int_(id)] = py::make_tuple(pose.R, pose.t);
  for (const auto &[id, l] : e.landmarks)
    landmarks[py::int_(id)] = l;
  py::dict out;
  out["d"] = e.d;
  out["poses"] = poses;
  out["landmarks"] = landmarks;
  return out;
}

Estimate estimate_from_dict(const py::dict &src) {
  Estimate e;
  e.d = src["d"].cast<int>();
  for (const auto &[id, pose] : src["poses"].cast<py::dict>()) {
    const auto rt = pose.cast<py::tuple>();
    e.poses[id.cast<int>()] = {rt[0].cast<Matrix>(), rt[1].cast<Vector>()};
  }
  if (src.contains("landmarks"))
    for (const auto &[id, l] : src["landmarks"].cast<py::dict>())
      e.landmarks[id.cast<int>()] = l.cast<Vector>();
  return e;
}

PipelineConfig make_config(const std::string &mode, const std::string &init,
                           std::uint64_t seed, std::optional<double> cbar,
                           double gamma, int p_max, int max_outer) {
  PipelineConfig cfg;
  cfg.mode = parse_solve_mode(mode);
  if (init != "odometry" && init != "random")
    throw std::invalid_argument("init must be 'odometry' or 'random'");
  cfg.gnc.init = init == "random" ? InitKind::Random : InitKind::Odometry;
  cfg.gnc.cbar = cbar;
  cfg.gnc.gamma = gamma;
  cfg.gnc.max_outer = max_outer;
  cfg.staircase.p_max = p_max;
  cfg.seed = seed;
  return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Certifiable graduated non-convexity for pose-graph SLAM";

  py::register_exception<G2oParseError>(m, "G2oParseError", PyExc_ValueError);

  py::class_<Problem>(m, "Problem")
      .def_readonly("d", &Problem::d)
      .def_readonly("source", &Problem::source)
      .def_readonly("scene_scale", &Problem::scene_scale)
      .def_readonly("precisions_isotropized", &Problem::precisions_isotropized)
      .def_property_readonly("num_poses", [](const Problem &p) { return p.poses.size(); })
      .def_property_readonly("num_landmarks",
                             [](const Problem &p) { return p.landmarks.size(); })
      .def_property_readonly("num_edges", [](const Problem &p) { return p.edges.size(); })
      .def_property_readonly("robust_edge_indices", &Problem::robust_edge_indices)
      .def_property_readonly("edge_classes",
                             [](const Problem &p) {
                               std::vector<std::string> out;
                               for (const auto &e : p.edges)
                                 out.push_back(to_string(e.cls));
                               return out;
                             })
      .def_property_readonly("vertices",
                             [](const Problem &p) { return estimate_to_dict(vertices_of(p)); })
      .def_property_readonly("ground_truth", [](const Problem &p) -> py::object {
        if (!p.ground_truth)
          return py::none();
        return estimate_to_dict(*p.ground_truth);
      });

  m.def("parse_g2o", &parse_g2o, py::arg("text"), py::arg("source") = "");
  m.def("load_g2o", [](const std::string &path) { return parse_g2o(read_file(path), path); },
        py::arg("path"));
  m.def(
      "serialize_g2o",
      [](const Problem &p, std::optional<py::dict> vertices) {
        if (vertices)
          return serialize_g2o(p, estimate_from_dict(*vertices));
        return serialize_g2o(p);
      },
      py::arg("problem"), py::arg("vertices") = py::none());

  m.def(
      "generate_synthetic",
      [](int d, int poses, const std::string &world, double sigma_r, double sigma_t,
         double lc_prob, double lc_distance, int landmarks, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.d = d;
        spec.poses = poses;
        if (world != "ring" && world != "grid")
          throw std::invalid_argument("world must be 'ring' or 'grid'");
        spec.world = world == "grid" ? World::Grid : World::Ring;
        spec.sigma_r = sigma_r;
        spec.sigma_t = sigma_t;
        spec.lc_prob = lc_prob;
        spec.lc_distance = lc_distance;
        spec.landmarks = landmarks;
        spec.validate();
        return generate_synthetic(spec, derive_seed(seed, 0));
      },
      py::arg("d") = 2, py::arg("poses") = 20, py::arg("world") = "ring",
      py::arg("sigma_r") = 0.01, py::arg("sigma_t") = 0.05, py::arg("lc_prob") = 0.5,
      py::arg("lc_distance") = 1.5, py::arg("landmarks") = 0, py::arg("seed") = 0);

  m.def(
      "inject_outliers",
      [](const Problem &p, double rate, std::uint64_t seed) {
        auto [corrupted, report] = inject_outliers(p, rate, derive_seed(seed, 1));
        return py::make_tuple(corrupted, json_to_py(to_json(report)));
      },
      py::arg("problem"), py::arg("rate"), py::arg("seed") = 0);

  m.def(
      "solve",
      [](const Problem &p, const std::string &mode, const std::string &init,
         std::uint64_t seed, std::optional<double> cbar, double gamma, int p_max,
         int max_outer, bool timings) {
        const PipelineConfig cfg = make_config(mode, init, seed, cbar, gamma, p_max, max_outer);
        cfg.gnc.validate();
        cfg.staircase.validate(p.d);
        PipelineResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(p, cfg);
        }
        RunReportInput in;
        in.config = config_json(cfg, p, r.cbar.empty() ? resolve_cbar(p, cfg.gnc) : r.cbar);
        in.problem = &p;
        in.result = &r;
        in.timings = timings;
        const bool failed = r.termination == "solver_failure" || !r.estimate;
        in.status = failed ? "solver_failure"
                    : promises_certification(cfg.mode) && !r.certified ? "uncertified"
                                                                        : "ok";
        py::dict out;
        out["report"] = json_to_py(run_report(in));
        out["estimate"] = r.estimate ? py::object(estimate_to_dict(*r.estimate)) : py::none();
        out["weights"] = r.weights;
        out["trace_csv"] = trace_csv(r.trace, timings);
        return out;
      },
      py::arg("problem"), py::arg("mode") = "certi-gnc", py::arg("init") = "odometry",
      py::arg("seed") = 0, py::arg("cbar") = py::none(), py::arg("gamma") = 1.4,
      py::arg("p_max") = 30, py::arg("max_outer") = 100, py::arg("timings") = true);

  m.def(
      "rmse_ate",
      [](const py::dict &estimate, const py::dict &ground_truth) {
        return json_to_py(
            to_json(rmse_ate(estimate_from_dict(estimate), estimate_from_dict(ground_truth))));
      },
      py::arg("estimate"), py::arg("ground_truth"));

  m.def(
      "score_outliers",
      [](const std::vector<std::size_t> &classified, const std::vector<std::size_t> &injected) {
        const OutlierScores s = score_outliers(classified, injected);
        return py::make_tuple(s.precision, s.recall);
      },
      py::arg("classified"), py::arg("injected"));

  m.def("tls_weight_update", &tls_weight_update, py::arg("r2"), py::arg("mu"),
        py::arg("cbar"));
  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("stream"));
}
