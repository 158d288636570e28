#include <CLI11.hpp>

#include <iostream>

#include "hypstat/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kTaskFailure = 1;
constexpr int kSpecError = 2;

int cmd_run(const std::string& path) {
  hypstat::ExperimentSpec spec = hypstat::load_experiment_spec(path);
  hypstat::RunResult result = hypstat::run_experiment(spec);
  for (const auto& t : result.tasks) {
    std::cout << (t.ok ? "ok      " : "FAILED  ") << t.name;
    if (!t.ok) std::cout << ": " << t.error;
    std::cout << "\n";
  }
  std::cout << "manifest: " << (spec.output / "manifest.json").string() << "\n";
  return result.ok() ? kOk : kTaskFailure;
}

int cmd_validate(const std::string& path) {
  hypstat::ExperimentSpec spec = hypstat::load_experiment_spec(path);
  nlohmann::json info = hypstat::prepare_experiment(spec);
  std::cout << "spec ok: " << info["spec_hash"].get<std::string>() << "\n";
  std::cout << "group: " << info["group"].get<std::string>() << "\n";
  std::cout << "d: " << info["d"].get<std::string>() << "\n";
  std::cout << "d_star: " << info["d_star"].get<std::string>() << "\n";
  std::cout << "tasks:";
  for (const auto& t : spec.tasks) std::cout << " " << t;
  std::cout << "\n";
  return kOk;
}

int cmd_diff(const std::string& a, const std::string& b) {
  std::cout << hypstat::format_diff(hypstat::diff_manifests(a, b));
  return kOk;
}

int cmd_plotdata(const std::string& report, const std::string& kind, const std::string& out) {
  std::optional<std::filesystem::path> dir;
  if (!out.empty()) dir = out;
  std::cout << hypstat::emit_plot_data(report, kind, dir).string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hypstat: distortion statistics for metrics on hyperbolic groups"};
  app.set_version_flag("--version", std::string(hypstat::kVersion));
  app.require_subcommand(1);
  app.footer("Cache root: the spec's \"cache\" key, else $HYPSTAT_CACHE, else ~/.cache/hypstat.\n"
             "Exit codes: 0 ok, 1 task failure, 2 spec error.");

  std::string spec_path, report, kind, out, m1, m2;
  auto* run = app.add_subcommand("run", "run the tasks of an experiment spec");
  run->add_option("spec", spec_path, "experiment spec (JSON)")->required();
  auto* validate = app.add_subcommand("validate", "check a spec and build its coding and metrics");
  validate->add_option("spec", spec_path, "experiment spec (JSON)")->required();
  auto* diff = app.add_subcommand("diff", "compare the constants of two runs");
  diff->add_option("m1", m1, "manifest or output directory")->required();
  diff->add_option("m2", m2, "manifest or output directory")->required();
  auto* plot = app.add_subcommand("plotdata", "write plot-ready CSV from a report");
  plot->add_option("report", report, "manifest or output directory")->required();
  plot->add_option("--kind", kind, "cdf | manhattan | moments | growth")->required();
  plot->add_option("--out", out, "output directory (default: next to the report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kSpecError;
  }

  try {
    if (*run) return cmd_run(spec_path);
    if (*validate) return cmd_validate(spec_path);
    if (*diff) return cmd_diff(m1, m2);
    if (*plot) return cmd_plotdata(report, kind, out);
  } catch (const hypstat::SpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kSpecError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTaskFailure;
  }
  return kOk;
}
