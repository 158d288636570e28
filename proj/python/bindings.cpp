#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "hypstat/automaton.hpp"
#include "hypstat/busemann.hpp"
#include "hypstat/counting.hpp"
#include "hypstat/experiment.hpp"
#include "hypstat/green.hpp"
#include "hypstat/hilbert.hpp"
#include "hypstat/symbolic.hpp"

namespace py = pybind11;
using namespace hypstat;

namespace {

// A metric on a free group together with the group, so words can be given as strings.
struct PyMetric {
  FreeGroup group;
  MetricModel model;

  double distance(const std::string& word) const { return model(group.element(word)); }
  double translation_length(const std::string& word, int max_power) const {
    return hypstat::translation_length(model, group, group.element(word), max_power).estimate;
  }
};

void same_group(const PyMetric& d, const PyMetric& d_star) {
  if (d.group.rank() != d_star.group.rank()) throw Error("metrics live on free groups of different rank");
}

PotentialPair make_pair(const AutomaticStructure& a, const PyMetric& d, const PyMetric& d_star, int depth) {
  auto maximal = word_maximal_components(a);
  BusemannOptions opt;
  opt.depth = depth;
  opt.horizon = 3 * depth;
  return PotentialPair(refine_to_blocks(a, maximal.front(), depth), busemann_potential(d.model, a, opt),
                       busemann_potential(d_star.model, a, opt));
}

py::dict validate_coding(int rank, int depth) {
  AutomaticStructure a = build_free_group_coding(rank);
  MarkovValidation v = validate_strongly_markov(a, depth);
  auto maximal = word_maximal_components(a);
  py::dict out;
  out["passed"] = v.passed;
  out["sphere_counts"] = v.sphere_counts;
  out["violations"] = v.violations;
  out["spectral_radius"] = maximal.front().spectral_radius;
  out["period"] = maximal.front().period;
  return out;
}

py::dict constants(const PyMetric& d, const PyMetric& d_star, int depth) {
  same_group(d, d_star);
  AutomaticStructure a = build_free_group_coding(d.group.rank());
  DistortionConstants c = distortion_constants(make_pair(a, d, d_star, depth));
  py::dict out;
  out["growth_d"] = c.growth_d;
  out["growth_d_star"] = c.growth_star;
  out["tau"] = c.tau;
  out["sigma2"] = c.sigma2;
  out["tau_curve"] = c.tau_curve;
  out["sigma2_curve"] = c.sigma2_curve;
  out["tau_error"] = c.tau_error;
  out["routes_agree"] = c.routes_agree;
  return out;
}

std::vector<std::pair<double, double>> manhattan(const PyMetric& d, const PyMetric& d_star, int points, int depth) {
  same_group(d, d_star);
  AutomaticStructure a = build_free_group_coding(d.group.rank());
  PotentialPair pair = make_pair(a, d, d_star, depth);
  const double top = pair.growth_rate_star();
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) grid.push_back(top * i / std::max(1, points - 1));
  std::vector<std::pair<double, double>> out;
  for (const auto& s : manhattan_curve(pair, grid).samples) out.emplace_back(s.s, s.theta);
  return out;
}

py::dict ball_statistics(const PyMetric& d, const PyMetric& d_star, double T, double tau, double sigma2,
                         std::size_t max_elements) {
  same_group(d, d_star);
  AutomaticStructure a = build_free_group_coding(d.group.rank());
  BallOptions opt;
  opt.max_elements = max_elements;
  BallEnumeration ball = enumerate_ball(a, d.model, &d_star.model, T, opt);
  const auto grid = fit_grid(T);
  GrowthFit fit = growth_rate(grid, ball_counts(ball, grid));
  MomentReport r = clt_report(ball, T, tau, sigma2);
  py::dict out;
  out["size"] = ball.size();
  out["growth_rate"] = fit.rate;
  out["tau_hat"] = r.tau_hat;
  out["tau_ratio"] = r.tau_ratio;
  out["ks"] = r.distortion.ks;
  out["moments"] = r.distortion.moments;
  return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_hypstat, m) {
  m.doc() = "Distortion statistics of pairs of metrics on free groups";
  m.attr("__version__") = kVersion;

  // Translators run newest first, so the subclass goes last.
  py::register_exception<Error>(m, "HypstatError", PyExc_RuntimeError);
  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);

  py::class_<PyMetric>(m, "Metric")
      .def("distance", &PyMetric::distance, py::arg("word"), "d(o, g) for g given as a word such as 'abA'")
      .def("translation_length", &PyMetric::translation_length, py::arg("word"), py::arg("max_power") = 16)
      .def_property_readonly("rank", [](const PyMetric& p) { return p.group.rank(); })
      .def_property_readonly("description", [](const PyMetric& p) { return p.model.description(); })
      .def("__repr__", [](const PyMetric& p) { return "<Metric " + p.model.description() + ">"; });

  m.def(
      "word_metric", [](int rank) { FreeGroup g = FreeGroup::of_rank(rank); return PyMetric{g, word_metric(g.alphabet())}; },
      py::arg("rank") = 2);
  m.def(
      "green_metric",
      [](const std::vector<double>& weights) {
        FreeGroup g = FreeGroup::of_rank(static_cast<int>(weights.size()));
        return PyMetric{g, green_metric(nearest_neighbour_measure(g, weights)).metric};
      },
      py::arg("weights"), "Green metric of the nearest-neighbour walk with mu(x) = mu(x^-1) = weights[i]");
  m.def(
      "hilbert_schottky",
      [](double half_length) {
        FreeGroup g = FreeGroup::of_rank(2);
        return PyMetric{g, hilbert_length(schottky_representation(half_length))};
      },
      py::arg("half_length") = 1.0);
  m.def(
      "scaled", [](const PyMetric& d, double c) { return PyMetric{d.group, scale_metric(d.model, c)}; },
      py::arg("metric"), py::arg("factor"));

  m.def("validate_coding", &validate_coding, py::arg("rank") = 2, py::arg("depth") = 10);
  m.def("constants", &constants, py::arg("d"), py::arg("d_star"), py::arg("depth") = 4);
  m.def("manhattan_curve", &manhattan, py::arg("d"), py::arg("d_star"), py::arg("points") = 11, py::arg("depth") = 4);
  m.def("ball_statistics", &ball_statistics, py::arg("d"), py::arg("d_star"), py::arg("T"), py::arg("tau"),
        py::arg("sigma2"), py::arg("max_elements") = 5'000'000);
  m.def(
      "similar",
      [](const PyMetric& d, const PyMetric& d_star, int samples, std::uint64_t seed) {
        same_group(d, d_star);
        return rough_similarity_test(d.model, d_star.model, d.group, samples, seed).similar;
      },
      py::arg("d"), py::arg("d_star"), py::arg("samples") = 100, py::arg("seed") = 1);

  m.def(
      "run",
      [](const std::filesystem::path& spec) {
        RunResult r = run_experiment(load_experiment_spec(spec));
        return to_python(r.manifest);
      },
      py::arg("spec"), "Runs an experiment spec and returns its manifest");
  m.def(
      "validate_spec", [](const std::filesystem::path& spec) { return to_python(prepare_experiment(load_experiment_spec(spec))); },
      py::arg("spec"));
  m.def(
      "diff", [](const std::filesystem::path& a, const std::filesystem::path& b) { return to_python(diff_manifests(a, b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "plot_data",
      [](const std::filesystem::path& report, const std::string& kind, std::optional<std::filesystem::path> out_dir) {
        return emit_plot_data(report, kind, out_dir);
      },
      py::arg("report"), py::arg("kind"), py::arg("out_dir") = std::nullopt);
}
