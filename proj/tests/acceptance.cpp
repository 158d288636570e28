// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "hypstat/automaton.hpp"
#include "hypstat/busemann.hpp"
#include "hypstat/counting.hpp"
#include "hypstat/experiment.hpp"
#include "hypstat/green.hpp"
#include "hypstat/hilbert.hpp"
#include "hypstat/symbolic.hpp"

using namespace hypstat;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
  bool pass = true;
  std::ostringstream detail;

  // Records a sub-check; the criterion passes only if all of them do.
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
  }
};

std::string fmt(double x, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Line&)>& body) {
  Line line;
  const auto t0 = Clock::now();
  try {
    body(line);
  } catch (const std::exception& e) {
    line.require(false, std::string("exception: ") + e.what());
  }
  if (!line.pass) ++failures;
  std::cout << (line.pass ? "PASS" : "FAIL") << " C" << id << " " << name << ": " << line.detail.str() << " ("
            << fmt(seconds_since(t0), 3) << " s)" << std::endl;
}

const ComponentInfo& maximal_component(const AutomaticStructure& a) {
  static std::vector<ComponentInfo> keep;
  keep = word_maximal_components(a);
  if (keep.empty()) throw Error("no word-maximal component");
  return keep.front();
}

PotentialPair make_pair(const AutomaticStructure& a, const MetricModel& d, const MetricModel& d_star, int depth = 4) {
  BusemannOptions opt;
  opt.depth = depth;
  opt.horizon = 3 * depth;
  return PotentialPair(refine_to_blocks(a, maximal_component(a), depth), busemann_potential(d, a, opt),
                       busemann_potential(d_star, a, opt));
}

std::vector<double> s_grid(double upper, int points = 11) {
  std::vector<double> s;
  for (int i = 0; i < points; ++i) s.push_back(upper * i / (points - 1));
  return s;
}

// Hyperbolic distance from i to rho(g) i via the Moebius action, in long double.
long double orbit_distance(const MatrixRep& rep, const Word& w) {
  using cld = std::complex<long double>;
  cld z(0.0L, 1.0L);
  for (auto it = w.rbegin(); it != w.rend(); ++it) {
    const Eigen::MatrixXd& m = rep.generators[*it];
    z = (cld(m(0, 0)) * z + cld(m(0, 1))) / (cld(m(1, 0)) * z + cld(m(1, 1)));
  }
  const long double num = std::norm(z - cld(0.0L, 1.0L));
  return std::acosh(1.0L + num / (2.0L * z.imag()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> report_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "runtime.json")
      files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

constexpr double kTMax = 15.0;
const std::vector<double> kPairWeights = {0.35, 0.15};
const std::vector<double> kUniform = {0.25, 0.25};

json pair_spec() {
  return {{"schema", kExperimentSchema},
          {"group", {{"free_rank", 2}}},
          {"d", {{"kind", "green"}, {"weights", kPairWeights}}},
          {"d_star", {{"kind", "green"}, {"weights", kUniform}}},
          {"tasks", {"all"}},
          {"knobs", {{"T_max", kTMax}, {"ball_cap", 5'000'000}}},
          {"output", "out"},
          {"cache", "cache"}};
}

RunResult run_in(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "spec.json") << pair_spec().dump(2);
  return run_experiment(load_experiment_spec(dir / "spec.json"));
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / ("hypstat-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(scratch);

  AutomaticStructure f2 = build_free_group_coding(2);
  const FreeGroup group = f2.free_group();
  const MetricModel word = word_metric(f2.alphabet());

  report(1, "coding validity", [&](Line& l) {
    const auto t0 = Clock::now();
    AutomaticStructure a = build_free_group_coding(2);
    MarkovValidation v = validate_strongly_markov(a, 10);
    l.require(v.passed && v.violation_count == 0, "strongly Markov to depth 10");
    bool counts = v.sphere_counts.size() == 11 && v.sphere_counts[0] == 1;
    std::uint64_t expected = 4;
    for (int n = 1; counts && n <= 10; ++n, expected *= 3) counts = v.sphere_counts[static_cast<std::size_t>(n)] == expected;
    l.require(counts, "sphere counts 4*3^(n-1)");
    const double rho = maximal_component(a).spectral_radius;
    l.require(std::abs(rho - 3.0) <= 1e-8, "rho=" + fmt(rho, 15));
    const double secs = seconds_since(t0);
    l.require(secs < 10.0, "runtime " + fmt(secs, 3) + " s < 10 s");
  });

  report(2, "pressure sanity", [&](Line& l) {
    BlockSystem b = refine_to_blocks(f2, maximal_component(f2), 4);
    const double p0 = pressure_of(b, std::vector<double>(b.transition_count(), 0.0)).value;
    l.require(std::abs(p0 - std::log(3.0)) <= 1e-8, "|P(0)-log 3|=" + fmt(std::abs(p0 - std::log(3.0)), 3));
    double shift = 0.0;
    for (double c : {-3.0, 0.5, 2.25}) {
      shift = std::max(shift, std::abs(pressure_of(b, std::vector<double>(b.transition_count(), c)).value - p0 - c));
    }
    l.require(shift <= 1e-10, "shift error " + fmt(shift, 3));

    Alphabet one = Alphabet::free(1);
    const Letter x = one.letter("a");
    AutomaticStructure toy(one, GroupKind::external, 0, 4,
                           {{0, 2, x}, {2, 3, x}, {3, 2, x}, {2, 1, std::nullopt}, {3, 1, std::nullopt}});
    ComponentInfo cycle;
    for (const auto& c : scc_decomposition(toy))
      if (c.has_cycle) cycle = c;
    BlockSystem tb = refine_to_blocks(toy, cycle, 1);
    const double pt = pressure_of(tb, std::vector<double>(tb.transition_count(), 0.0)).value;
    l.require(cycle.period == 2 && std::abs(pt) <= 1e-10, "period-2 P=" + fmt(pt, 3));
  });

  report(3, "degenerate pair", [&](Line& l) {
    PotentialPair pair = make_pair(f2, word, scale_metric(word, 2.0));
    DistortionConstants c = distortion_constants(pair);
    ManhattanCurve curve = manhattan_curve(pair, s_grid(c.growth_star));
    l.require(curve.max_chord_deviation <= 1e-8, "chord deviation " + fmt(curve.max_chord_deviation, 3));
    l.require(std::abs(c.tau - 2.0) <= 1e-8, "tau=" + fmt(c.tau, 12));
    l.require(c.sigma2 <= 1e-8 && std::abs(c.sigma2_curve) <= 1e-8,
              "sigma2 spectral " + fmt(c.sigma2, 3) + " curve " + fmt(c.sigma2_curve, 3));
    SimilarityReport sim = rough_similarity_test(word, scale_metric(word, 2.0), group, 200, 1);
    l.require(sim.similar && sim.spread <= 1e-10, std::string(sim.similar ? "SIMILAR" : "NOT SIMILAR") +
                                                      " spread " + fmt(sim.spread, 3));
  });

  // Shared by criteria 4 and 7.
  BallEnumeration srw_ball;
  DistortionConstants srw_constants;

  report(4, "simple random walk Green metric", [&](Line& l) {
    const auto t0 = Clock::now();
    MetricModel srw = green_metric(nearest_neighbour_measure(group, kUniform)).metric;
    // First passage of simple random walk on the 4-regular tree: r = 1/3.
    const double oracle = -std::log(1.0 / 3.0);
    double worst = 0.0;
    for_each_coding_word(f2, 6, [&](const Word& w) {
      if (!w.empty()) worst = std::max(worst, std::abs(srw.distance(w) / static_cast<double>(w.size()) - oracle));
    });
    l.require(worst <= 1e-3, "max |d/|g| - log 3|=" + fmt(worst, 3));

    srw_ball = enumerate_ball(f2, srw, &word, kTMax);
    const auto grid = fit_grid(kTMax);
    GrowthFit fit = growth_rate(grid, ball_counts(srw_ball, grid));
    l.require(std::abs(fit.rate - 1.0) <= 0.03, "v=" + fmt(fit.rate) + " (N=" + std::to_string(srw_ball.size()) + ")");

    srw_constants = distortion_constants(make_pair(f2, srw, word));
    l.require(srw_constants.sigma2 <= 1e-4, "sigma2=" + fmt(srw_constants.sigma2, 3));
    SimilarityReport sim = rough_similarity_test(srw, word, group, 200, 2);
    l.require(sim.similar, sim.similar ? "SIMILAR" : "NOT SIMILAR");
    const double secs = seconds_since(t0);
    l.require(secs < 120.0, "runtime " + fmt(secs, 3) + " s < 120 s");
  });

  report(5, "non-degenerate pair", [&](Line& l) {
    MetricModel d = green_metric(nearest_neighbour_measure(group, kPairWeights)).metric;
    MetricModel d_star = green_metric(nearest_neighbour_measure(group, kUniform)).metric;
    PotentialPair pair = make_pair(f2, d, d_star, 4);
    DistortionConstants c = distortion_constants(pair);
    const double agree = std::abs(c.sigma2 - c.sigma2_curve);
    l.require(c.sigma2 > 0.0 && c.sigma2_curve > 0.0, "sigma2 spectral " + fmt(c.sigma2, 6) + " curve " +
                                                          fmt(c.sigma2_curve, 6));
    l.require(agree <= std::max(1e-4, 0.02 * c.sigma2), "route gap " + fmt(agree, 3));
    // Error bar: resolution error, route disagreement and the cylinder-depth
    // change of both tau and v_d / v_d*.
    DistortionConstants c5 = distortion_constants(make_pair(f2, d, d_star, 5));
    const double ratio = c.growth_d / c.growth_star;
    const double err = c.tau_error + std::abs(c.tau - c.tau_curve) + std::abs(c5.tau - c.tau) +
                       std::abs(c5.growth_d / c5.growth_star - ratio);
    const double margin = c.tau - ratio;
    l.require(margin > 10.0 * err, "tau-v_d/v*=" + fmt(margin) + " vs 10*err=" + fmt(10.0 * err, 3));
    ManhattanCurve curve = manhattan_curve(pair, s_grid(c.growth_star));
    l.require(curve.min_second_difference > 1e-8, "min second difference " + fmt(curve.min_second_difference, 3));
  });

  json clt;
  double clt_seconds = 0.0;
  report(6, "CLT convergence", [&](Line& l) {
    const auto t0 = Clock::now();
    RunResult r = run_in(scratch / "a");
    clt_seconds = seconds_since(t0);
    for (const auto& t : r.tasks) l.require(t.ok, t.name + (t.ok ? " ok" : " failed: " + t.error));
    clt = json::parse(slurp(scratch / "a" / "out" / "clt" / "report.json"));
    const std::size_t N = clt["enumeration"]["size"];
    l.require(N <= 5'000'000, "T_max=" + fmt(clt["enumeration"]["T"]) + " N=" + std::to_string(N));
    const auto& reps = clt["reports"];
    std::vector<double> ks;
    for (const auto& rep : reps) ks.push_back(rep["distortion"]["ks"]);
    bool monotone = ks.size() >= 4;
    for (std::size_t i = ks.size() - 3; monotone && i < ks.size(); ++i) monotone = ks[i] <= ks[i - 1] + 0.02;
    std::string trail;
    for (std::size_t i = ks.size() >= 4 ? ks.size() - 4 : 0; i < ks.size(); ++i) trail += (trail.empty() ? "" : ",") + fmt(ks[i], 3);
    l.require(monotone, "KS tail " + trail + " non-increasing");
    l.require(ks.back() <= 0.08, "final KS " + fmt(ks.back(), 3) + " <= 0.08");
    const auto& last = reps.back();
    std::vector<double> m = last["distortion"]["moments"];
    const double s2 = clt["reference"]["sigma2"];
    const double target[4] = {0.0, s2, 0.0, 3.0 * s2 * s2};
    l.require(std::abs(m[0]) <= 0.05, "m1=" + fmt(m[0], 3));
    l.require(std::abs(m[1] - target[1]) <= 0.1 * target[1], "m2=" + fmt(m[1], 4) + " vs " + fmt(target[1], 4));
    l.require(std::abs(m[2]) <= 0.1, "m3=" + fmt(m[2], 3));
    l.require(std::abs(m[3] - target[3]) <= 0.2 * target[3], "m4=" + fmt(m[3], 4) + " vs " + fmt(target[3], 4));
    l.require(clt_seconds < 900.0, "runtime " + fmt(clt_seconds, 3) + " s < 900 s");
  });

  report(7, "mean distortion", [&](Line& l) {
    MomentReport srw = clt_report(srw_ball, kTMax, srw_constants.tau, srw_constants.sigma2);
    const double e4 = std::abs(srw.tau_hat - srw_constants.tau);
    l.require(e4 <= 0.05, "SRW/word tau_hat=" + fmt(srw.tau_hat) + " tau=" + fmt(srw_constants.tau) +
                              " (sum ratio " + fmt(srw.tau_ratio) + ")");
    if (clt.is_null()) throw Error("criterion 6 run produced no report");
    const auto& last = clt["reports"].back();
    const double tau = clt["reference"]["tau"], tau_hat = last["tau_hat"];
    l.require(std::abs(tau_hat - tau) <= 0.05, "Green pair tau_hat=" + fmt(tau_hat) + " tau=" + fmt(tau) +
                                                   " (sum ratio " + fmt(last["tau_ratio"].get<double>()) + ")");
  });

  report(8, "Busemann coherence", [&](Line& l) {
    CoherenceReport w = busemann_coherence(word, f2, busemann_potential(word, f2), 12, 1000, 8);
    l.require(w.max_defect <= 1e-10, "word max defect " + fmt(w.max_defect, 3));
    MetricModel d = green_metric(nearest_neighbour_measure(group, kPairWeights)).metric;
    CoherenceReport g = busemann_coherence(d, f2, busemann_potential(d, f2), 12, 1000, 8);
    l.require(std::abs(g.slope) <= 1e-3, "Green slope " + fmt(g.slope, 3) + " max " + fmt(g.max_defect, 3));
  });

  report(9, "translation-defect decay", [&](Line& l) {
    BallEnumeration ball = enumerate_ball(f2, word, nullptr, kTMax);
    const auto grid = default_T_grid(kTMax, std::log(3.0));
    std::vector<double> fractions;
    bool oracle = true;
    for (double T : grid) {
      DefectPoint p = translation_defect_fraction(ball, word, group, T);
      // Independent count: |g| - l(g) is twice the letters stripped by cyclic reduction.
      std::size_t count = ball.count_below(T), defective = 0;
      for (std::size_t i = 0; i < count; ++i) {
        auto w = ball.word(i);
        std::size_t a = 0, b = w.size();
        while (b - a >= 2 && f2.alphabet().inverse(w[a]) == w[b - 1]) ++a, --b;
        if (2.0 * static_cast<double>(a) > std::cbrt(T)) ++defective;
      }
      oracle = oracle && p.count == count && p.defective == defective && p.inconclusive == 0;
      fractions.push_back(p.fraction);
    }
    l.require(oracle, "matches cyclic-reduction count");
    bool monotone = true;
    std::string trail;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (i > 0) monotone = monotone && fractions[i] <= fractions[i - 1] + 0.02;
      trail += (trail.empty() ? "" : ",") + fmt(fractions[i], 3);
    }
    l.require(monotone, "fractions " + trail + " non-increasing");
    l.require(fractions.back() < 0.1, "final " + fmt(fractions.back(), 3) + " < 0.1");
  });

  report(10, "Hilbert-length oracle", [&](Line& l) {
    MatrixRep rep = schottky_representation();
    MetricModel alpha = hilbert_length(rep);
    double worst = 0.0;
    std::size_t n = 0;
    for_each_coding_word(f2, 8, [&](const Word& w) {
      worst = std::max(worst, std::abs(alpha.distance(w) - static_cast<double>(orbit_distance(rep, w))));
      ++n;
    });
    l.require(worst <= 1e-9, "max error " + fmt(worst, 3) + " over " + std::to_string(n) + " elements");
  });

  report(11, "determinism", [&](Line& l) {
    if (!fs::exists(scratch / "a" / "out")) throw Error("criterion 6 run produced no output");
    const auto cold = report_files(scratch / "a" / "out");
    json first = json::parse(slurp(scratch / "a" / "out" / "runtime.json"));
    RunResult warm_run = run_in(scratch / "a");
    json second = json::parse(slurp(scratch / "a" / "out" / "runtime.json"));
    bool hits = !second["cache"].empty();
    for (const auto& e : second["cache"]) hits = hits && e["hit"].get<bool>();
    bool misses = true;
    for (const auto& e : first["cache"]) misses = misses && !e["hit"].get<bool>();
    l.require(misses && hits, "cold run misses, warm run hits the cache");
    l.require(report_files(scratch / "a" / "out") == cold, "warm re-run byte-identical");
    run_in(scratch / "b");
    l.require(report_files(scratch / "b" / "out") == cold, "fresh cache byte-identical");
    l.require(cold.size() >= 10, std::to_string(cold.size()) + " report files");
  });

  fs::remove_all(scratch);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
