#include "hypstat/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "hypstat/automaton.hpp"
#include "hypstat/busemann.hpp"
#include "hypstat/counting.hpp"
#include "hypstat/green.hpp"
#include "hypstat/hilbert.hpp"
#include "hypstat/metrics.hpp"
#include "hypstat/symbolic.hpp"

namespace hypstat {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << bytes;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SpecError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

fs::path default_cache_root() {
  if (const char* env = std::getenv("HYPSTAT_CACHE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "hypstat";
  return fs::temp_directory_path() / "hypstat-cache";
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

const std::vector<std::string> kTaskOrder = {"validate", "constants", "pressure", "clt", "manhattan", "rigidity"};

void require_keys(const json& j, const std::set<std::string>& allowed, const std::set<std::string>& required,
                  const std::string& where) {
  if (!j.is_object()) throw SpecError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw SpecError(where + ": unknown key '" + key + "'");
  }
  for (const auto& key : required) {
    if (!j.contains(key)) throw SpecError(where + ": missing key '" + key + "'");
  }
}

fs::path resolve_existing(const json& value, const fs::path& base, const std::string& where) {
  if (!value.is_string()) throw SpecError(where + ": expected a file path");
  fs::path p = value.get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!fs::exists(p)) throw SpecError(where + ": file not found: " + p.string());
  return p;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw SpecError(where + ": expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& where, int lo, int hi) {
  if (!v.is_number_integer()) throw SpecError(where + ": expected an integer");
  long x = v.get<long>();
  if (x < lo || x > hi)
    throw SpecError(where + ": " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(x);
}

// Validates a metric spec and rewrites its file references to absolute paths.
json check_metric(const json& m, const fs::path& base, bool free, const std::string& where) {
  if (!m.is_object() || !m.contains("kind") || !m["kind"].is_string()) throw SpecError(where + ": missing 'kind'");
  json out = m;
  const std::string kind = m["kind"];
  if (kind == "word") {
    require_keys(m, {"kind"}, {}, where);
  } else if (kind == "green") {
    if (!free) throw SpecError(where + ": green metrics need a free group");
    require_keys(m, {"kind", "weights", "measure", "route"}, {}, where);
    if (m.contains("weights") == m.contains("measure"))
      throw SpecError(where + ": give exactly one of 'weights' or 'measure'");
    if (m.contains("weights")) {
      if (!m["weights"].is_array() || m["weights"].empty()) throw SpecError(where + ".weights: expected an array");
      for (const auto& w : m["weights"]) {
        if (!(number(w, where + ".weights") > 0.0)) throw SpecError(where + ".weights: weights must be positive");
      }
    } else {
      out["measure"] = resolve_existing(m["measure"], base, where + ".measure").string();
    }
    if (m.contains("route")) {
      if (!m["route"].is_string() || (m["route"] != "auto" && m["route"] != "convolution"))
        throw SpecError(where + ".route: expected 'auto' or 'convolution'");
    }
  } else if (kind == "hilbert") {
    if (!free) throw SpecError(where + ": hilbert lengths need a free group");
    require_keys(m, {"kind", "representation", "schottky"}, {}, where);
    if (m.contains("representation") == m.contains("schottky"))
      throw SpecError(where + ": give exactly one of 'representation' or 'schottky'");
    if (m.contains("representation")) {
      out["representation"] = resolve_existing(m["representation"], base, where + ".representation").string();
    } else if (!(number(m["schottky"], where + ".schottky") > 0.0)) {
      throw SpecError(where + ".schottky: must be positive");
    }
  } else if (kind == "table") {
    require_keys(m, {"kind", "file"}, {"file"}, where);
    out["file"] = resolve_existing(m["file"], base, where + ".file").string();
  } else if (kind == "scaled") {
    require_keys(m, {"kind", "factor", "base"}, {"factor", "base"}, where);
    if (!(number(m["factor"], where + ".factor") > 0.0)) throw SpecError(where + ".factor: must be positive");
    out["base"] = check_metric(m["base"], base, free, where + ".base");
  } else {
    throw SpecError(where + ": unknown metric kind '" + kind + "'");
  }
  return out;
}

Knobs parse_knobs(const json& j) {
  Knobs k;
  if (j.is_null()) return k;
  require_keys(j,
               {"cylinder_depth", "horizon", "alternatives", "validate_depth", "green_truncation", "green_tolerance",
                "T_max", "t_grid", "grid_points", "ball_cap", "mode", "slack", "s_points", "similarity_samples",
                "seed"},
               {}, "knobs");
  if (j.contains("cylinder_depth")) k.cylinder_depth = integer(j["cylinder_depth"], "knobs.cylinder_depth", 1, 8);
  k.horizon = 3 * k.cylinder_depth;
  if (j.contains("horizon")) k.horizon = integer(j["horizon"], "knobs.horizon", k.cylinder_depth + 1, 48);
  if (j.contains("alternatives")) k.alternatives = integer(j["alternatives"], "knobs.alternatives", 0, 64);
  if (j.contains("validate_depth")) k.validate_depth = integer(j["validate_depth"], "knobs.validate_depth", 0, 16);
  if (j.contains("green_truncation")) k.green_truncation = integer(j["green_truncation"], "knobs.green_truncation", 2, 20);
  if (j.contains("green_tolerance")) {
    k.green_tolerance = number(j["green_tolerance"], "knobs.green_tolerance");
    if (!(k.green_tolerance > 0.0)) throw SpecError("knobs.green_tolerance: must be positive");
  }
  if (j.contains("T_max")) {
    k.T_max = number(j["T_max"], "knobs.T_max");
    if (!(*k.T_max > 0.0)) throw SpecError("knobs.T_max: must be positive");
  }
  if (j.contains("t_grid")) {
    if (!j["t_grid"].is_array() || j["t_grid"].size() < 5) throw SpecError("knobs.t_grid: need at least 5 values");
    for (const auto& v : j["t_grid"]) k.t_grid.push_back(number(v, "knobs.t_grid"));
    for (std::size_t i = 0; i < k.t_grid.size(); ++i) {
      if (!(k.t_grid[i] > 0.0) || (i && !(k.t_grid[i] > k.t_grid[i - 1])))
        throw SpecError("knobs.t_grid: values must be positive and increasing");
    }
  }
  if (j.contains("grid_points")) k.grid_points = integer(j["grid_points"], "knobs.grid_points", 5, 64);
  if (j.contains("ball_cap")) k.ball_cap = static_cast<std::size_t>(integer(j["ball_cap"], "knobs.ball_cap", 1, 50'000'000));
  if (j.contains("mode")) {
    if (!j["mode"].is_string() || (j["mode"] != "fast" && j["mode"] != "exact"))
      throw SpecError("knobs.mode: expected 'fast' or 'exact'");
    k.mode = j["mode"];
  }
  if (j.contains("slack")) {
    k.slack = number(j["slack"], "knobs.slack");
    if (k.slack < 0.0) throw SpecError("knobs.slack: must be nonnegative");
  }
  if (j.contains("s_points")) k.s_points = integer(j["s_points"], "knobs.s_points", 3, 101);
  if (j.contains("similarity_samples"))
    k.similarity_samples = integer(j["similarity_samples"], "knobs.similarity_samples", 50, 100000);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw SpecError("knobs.seed: expected a nonnegative integer");
    k.seed = j["seed"].get<std::uint64_t>();
  }
  return k;
}

json knobs_json(const Knobs& k) {
  json j = {{"cylinder_depth", k.cylinder_depth}, {"horizon", k.horizon},
            {"alternatives", k.alternatives},     {"validate_depth", k.validate_depth},
            {"green_truncation", k.green_truncation}, {"green_tolerance", k.green_tolerance},
            {"grid_points", k.grid_points},       {"ball_cap", k.ball_cap},
            {"mode", k.mode},                     {"slack", k.slack},
            {"s_points", k.s_points},             {"similarity_samples", k.similarity_samples},
            {"seed", k.seed}};
  j["T_max"] = k.T_max ? json(*k.T_max) : json(nullptr);
  j["t_grid"] = k.t_grid;
  return j;
}

json hash_files(const json& m) {
  json out = m;
  for (const char* key : {"measure", "representation", "file", "automaton"}) {
    if (out.contains(key) && out[key].is_string()) out[key] = json{{"sha256", sha256_file(out[key].get<std::string>())}};
  }
  if (out.contains("base")) out["base"] = hash_files(out["base"]);
  return out;
}

}  // namespace

bool ExperimentSpec::wants(const std::string& task) const {
  return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

json ExperimentSpec::canonical() const {
  return json{{"schema", kExperimentSchema}, {"group", hash_files(group)}, {"d", hash_files(d)},
              {"d_star", hash_files(d_star)}, {"tasks", tasks}, {"knobs", knobs_json(knobs)}};
}

std::string ExperimentSpec::hash() const { return sha256_hex(canonical().dump()); }

ExperimentSpec parse_experiment_spec(const json& j, const fs::path& source) {
  require_keys(j, {"schema", "group", "d", "d_star", "tasks", "knobs", "output", "cache"},
               {"schema", "group", "d", "d_star", "output"}, "spec");
  if (j["schema"] != kExperimentSchema)
    throw SpecError("spec: unsupported schema " + j["schema"].dump() + " (expected \"" + kExperimentSchema + "\")");
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::current_path();
  ExperimentSpec spec;
  spec.source = source;

  require_keys(j["group"], {"free_rank", "automaton"}, {}, "group");
  if (j["group"].contains("free_rank") == j["group"].contains("automaton"))
    throw SpecError("group: give exactly one of 'free_rank' or 'automaton'");
  bool free = false;
  if (j["group"].contains("free_rank")) {
    spec.group = json{{"free_rank", integer(j["group"]["free_rank"], "group.free_rank", 2, 26)}};
    free = true;
  } else {
    fs::path p = resolve_existing(j["group"]["automaton"], base, "group.automaton");
    spec.group = json{{"automaton", p.string()}};
  }
  spec.d = check_metric(j["d"], base, free, "d");
  spec.d_star = check_metric(j["d_star"], base, free, "d_star");

  std::set<std::string> requested;
  json tasks = j.contains("tasks") ? j["tasks"] : json::array({"all"});
  if (!tasks.is_array() || tasks.empty()) throw SpecError("tasks: expected a nonempty array");
  for (const auto& t : tasks) {
    if (!t.is_string()) throw SpecError("tasks: expected task names");
    std::string name = t;
    if (name == "all") {
      requested.insert(kTaskOrder.begin(), kTaskOrder.end());
    } else if (std::find(kTaskOrder.begin(), kTaskOrder.end(), name) != kTaskOrder.end()) {
      requested.insert(name);
    } else {
      throw SpecError("tasks: unknown task '" + name + "'");
    }
  }
  for (const auto& name : kTaskOrder) {
    if (requested.count(name)) spec.tasks.push_back(name);
  }
  spec.knobs = parse_knobs(j.contains("knobs") ? j["knobs"] : json());

  if (!j["output"].is_string()) throw SpecError("output: expected a directory path");
  spec.output = j["output"].get<std::string>();
  if (spec.output.is_relative()) spec.output = base / spec.output;
  if (j.contains("cache")) {
    if (!j["cache"].is_string()) throw SpecError("cache: expected a directory path");
    spec.cache = j["cache"].get<std::string>();
    if (spec.cache.is_relative()) spec.cache = base / spec.cache;
  } else {
    spec.cache = default_cache_root();
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
  if (!fs::exists(path)) throw SpecError("spec file not found: " + path.string());
  return parse_experiment_spec(read_json(path), path);
}

bool RunResult::ok() const {
  return std::all_of(tasks.begin(), tasks.end(), [](const TaskStatus& t) { return t.ok; });
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct Context {
  const ExperimentSpec& spec;
  std::optional<AutomaticStructure> coding;
  std::optional<FreeGroup> group;
  std::optional<MetricModel> d;
  std::optional<MetricModel> d_star;
  CylinderPotential psi_d;
  CylinderPotential psi_star;
  std::optional<PotentialPair> pair;
  std::optional<DistortionConstants> constants;
  std::optional<BallEnumeration> ball;
  std::vector<double> T_grid;
  json cache_events = json::array();
  std::map<std::string, std::string> outputs;  // relative path -> sha256

  explicit Context(const ExperimentSpec& s) : spec(s) {}

  void emit(const std::string& rel, const std::string& bytes) {
    write_file(spec.output / rel, bytes);
    outputs[rel] = sha256_hex(bytes);
  }
  void emit_json(const std::string& rel, const json& j) { emit(rel, j.dump(2) + "\n"); }
};

std::string hexfloat(double x) {
  std::ostringstream s;
  s << std::hexfloat << x;
  return s.str();
}

MetricModel build_metric(const json& m, Context& ctx) {
  const Alphabet& alphabet = ctx.coding->alphabet();
  const std::string kind = m["kind"];
  if (kind == "word") return word_metric(alphabet);
  if (kind == "scaled") return scale_metric(build_metric(m["base"], ctx), m["factor"].get<double>());
  if (kind == "table") {
    MetricModel d = load_metric_table(alphabet, m["file"].get<std::string>());
    try {
      d = d.with_quasi_isometry(measure_quasi_isometry(d, *ctx.coding, 6));
    } catch (const Error&) {
      // Tables that do not cover the radius-6 ball keep an unknown envelope.
    }
    return d;
  }
  const FreeGroup& group = *ctx.group;
  if (kind == "hilbert") {
    MatrixRep rep = m.contains("schottky") ? schottky_representation(m["schottky"].get<double>())
                                           : load_matrix_rep(alphabet, m["representation"].get<std::string>());
    if (!(rep.alphabet == alphabet)) throw SpecError("hilbert: representation alphabet does not match the group");
    return hilbert_length(rep);
  }
  // green
  FiniteMeasure mu = m.contains("weights") ? nearest_neighbour_measure(group, m["weights"].get<std::vector<double>>())
                                           : load_measure(group, m["measure"].get<std::string>());
  GreenOptions opt;
  opt.truncation = ctx.spec.knobs.green_truncation;
  opt.tolerance = ctx.spec.knobs.green_tolerance;
  opt.allow_first_passage = !(m.contains("route") && m["route"] == "convolution");
  const std::string key = sha256_hex("green-table/1\n" + mu.canonical_text() + "truncation=" +
                                     std::to_string(opt.truncation) + "\ntolerance=" + hexfloat(opt.tolerance) +
                                     "\nfirst_passage=" + (opt.allow_first_passage ? "1" : "0") + "\n");
  const fs::path file = ctx.spec.cache / "green" / (key + ".txt");
  if (fs::exists(file)) {
    std::istringstream in(read_file(file));
    GreenTable table = read_green_table(in, alphabet);
    ctx.cache_events.push_back({{"kind", "green"}, {"key", key}, {"hit", true}});
    return green_metric_from_table(mu, std::move(table));
  }
  GreenModel g = green_metric(mu, opt);
  std::ostringstream out;
  write_green_table(out, g.table, alphabet);
  write_file(file, out.str());
  ctx.cache_events.push_back({{"kind", "green"}, {"key", key}, {"hit", false}});
  return g.metric;
}

void setup(Context& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  try {
    if (spec.group.contains("free_rank")) {
      ctx.coding = build_free_group_coding(spec.group["free_rank"].get<int>());
    } else {
      ctx.coding = load_automatic_structure(spec.group["automaton"].get<std::string>());
    }
    if (ctx.coding->kind() == GroupKind::free) ctx.group = ctx.coding->free_group();
    ctx.d = build_metric(spec.d, ctx);
    ctx.d_star = build_metric(spec.d_star, ctx);
  } catch (const SpecError&) {
    throw;
  } catch (const Error& e) {
    throw SpecError(e.what());
  }
}

const ComponentInfo& main_component(const std::vector<ComponentInfo>& maximal) {
  if (maximal.empty()) throw Error("coding has no word-maximal component");
  return maximal.front();
}

void ensure_potentials(Context& ctx) {
  if (ctx.pair) return;
  BusemannOptions opt;
  opt.depth = ctx.spec.knobs.cylinder_depth;
  opt.horizon = ctx.spec.knobs.horizon;
  opt.alternatives = ctx.spec.knobs.alternatives;
  opt.seed = ctx.spec.knobs.seed;
  ctx.psi_d = busemann_potential(*ctx.d, *ctx.coding, opt);
  ctx.psi_star = busemann_potential(*ctx.d_star, *ctx.coding, opt);
  auto maximal = word_maximal_components(*ctx.coding);
  ctx.pair.emplace(refine_to_blocks(*ctx.coding, main_component(maximal), opt.depth), ctx.psi_d, ctx.psi_star);
}

void ensure_constants(Context& ctx) {
  if (ctx.constants) return;
  ensure_potentials(ctx);
  ctx.constants = distortion_constants(*ctx.pair);
}

double choose_T_max(Context& ctx) {
  const Knobs& k = ctx.spec.knobs;
  if (!k.t_grid.empty()) return k.t_grid.back();
  if (k.T_max) return *k.T_max;
  ensure_constants(ctx);
  const double step = 0.25 / ctx.constants->growth_d;
  double T = step;
  for (int i = 0; i < 4000; ++i) {
    if (count_ball(*ctx.coding, *ctx.d, T + step, k.slack) > k.ball_cap) break;
    T += step;
  }
  return T;
}

void ensure_ball(Context& ctx) {
  if (ctx.ball) return;
  ensure_constants(ctx);
  const Knobs& k = ctx.spec.knobs;
  const double T_max = choose_T_max(ctx);
  ctx.T_grid = k.t_grid.empty() ? default_T_grid(T_max, ctx.constants->growth_d, k.grid_points) : k.t_grid;
  BallOptions opt;
  opt.mode = k.mode == "exact" ? EnumerationMode::exact : EnumerationMode::fast;
  opt.slack = k.slack;
  opt.max_elements = k.ball_cap;
  const json key_json = {{"group", hash_files(ctx.spec.group)},
                         {"d", hash_files(ctx.spec.d)},
                         {"d_star", hash_files(ctx.spec.d_star)},
                         {"green", {k.green_truncation, hexfloat(k.green_tolerance)}},
                         {"T", hexfloat(T_max)},
                         {"mode", k.mode},
                         {"slack", hexfloat(k.slack)}};
  const std::string key = sha256_hex("ball/1\n" + key_json.dump());
  const fs::path file = ctx.spec.cache / "balls" / (key + ".bin");
  if (fs::exists(file)) {
    std::ifstream in(file, std::ios::binary);
    ctx.ball = read_ball_binary(in);
    ctx.cache_events.push_back({{"kind", "ball"}, {"key", key}, {"hit", true}});
    return;
  }
  ctx.ball = enumerate_ball(*ctx.coding, *ctx.d, &*ctx.d_star, T_max, opt);
  fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    write_ball_binary(out, *ctx.ball);
  }
  fs::rename(tmp, file);
  ctx.cache_events.push_back({{"kind", "ball"}, {"key", key}, {"hit", false}});
}

std::string csv_number(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

void task_validate(Context& ctx) {
  MarkovValidation v = validate_strongly_markov(*ctx.coding, ctx.spec.knobs.validate_depth);
  json comps = json::array();
  for (const auto& c : scc_decomposition(*ctx.coding)) {
    comps.push_back({{"id", c.id},
                     {"vertices", c.vertices},
                     {"has_cycle", c.has_cycle},
                     {"period", c.period},
                     {"spectral_radius", c.spectral_radius},
                     {"is_word_maximal", c.is_word_maximal}});
  }
  json j = {{"group", ctx.coding->group_description()},
            {"depth", v.depth},
            {"passed", v.passed},
            {"sphere_counts", v.sphere_counts},
            {"violation_count", v.violation_count},
            {"violations", v.violations},
            {"injectivity_checked", v.injectivity_checked},
            {"geodesy", v.geodesy},
            {"surjectivity", v.surjectivity},
            {"components", comps}};
  ctx.emit_json("validate.json", j);
  if (!v.passed) throw Error("strongly Markov validation failed (" + std::to_string(v.violation_count) + " violations)");
}

json normalization_json(const Normalization& n) {
  return {{"growth_rate_d", n.growth_rate},
          {"tau_raw", n.tau_raw},
          {"scale_d", n.scale_d},
          {"scale_d_star", n.scale_d_star}};
}

void task_constants(Context& ctx) {
  ensure_constants(ctx);
  const DistortionConstants& c = *ctx.constants;
  json j = {
      {"component", ctx.pair->blocks().component},
      {"normalization", normalization_json(c.normalization)},
      {"potentials",
       {{"depth", ctx.psi_d.depth},
        {"horizon", ctx.spec.knobs.horizon},
        {"resolution_error_d", ctx.psi_d.resolution_error},
        {"resolution_error_d_star", ctx.psi_star.resolution_error},
        {"flagged_cylinders", ctx.psi_d.flagged.size() + ctx.psi_star.flagged.size()}}},
      {"spectral",
       {{"growth_rate_d", c.growth_d},
        {"growth_rate_d_star", c.growth_star},
        {"tau", c.tau},
        {"tau_error", c.tau_error},
        {"sigma2", c.sigma2},
        {"sigma2_normalized", c.normalization.sigma2_to_normalized(c.sigma2)},
        {"sigma2_pressure_differences", c.sigma2_pressure_fd},
        {"entropy", c.entropy},
        {"integral_psi_d", c.integral_psi_d},
        {"tau_minus_growth_ratio", c.tau - c.growth_d / c.growth_star}}},
      {"curve", {{"tau", c.tau_curve}, {"sigma2", c.sigma2_curve}}},
      {"cross_route", {{"sigma2_discrepancy", c.sigma2_discrepancy}, {"routes_agree", c.routes_agree}}}};
  ctx.emit_json("constants.json", j);
}

void task_pressure(Context& ctx) {
  ensure_constants(ctx);
  const DistortionConstants& c = *ctx.constants;
  CylinderPotential phi = subtract_potentials(ctx.psi_star, scale_potential(ctx.psi_d, c.tau));
  std::vector<std::pair<double, double>> grid;
  for (double ds : {-0.1, 0.0, 0.1}) {
    for (double t : {-0.1, 0.0, 0.1}) grid.emplace_back(c.growth_d + ds, t);
  }
  std::vector<PressurePoint> points;
  for (const auto& comp : word_maximal_components(*ctx.coding)) {
    BlockSystem b = refine_to_blocks(*ctx.coding, comp, ctx.psi_d.depth);
    for (auto [s, t] : grid) points.push_back(pressure(build_transfer(b, ctx.psi_d, phi, s, t)));
  }
  std::ostringstream csv;
  write_pressure_csv(csv, points);
  ctx.emit("pressure.csv", csv.str());
  AgreementReport agree = pressure_agreement(*ctx.coding, ctx.psi_d, phi, grid);
  json pts = json::array();
  for (const auto& p : agree.points) pts.push_back({{"s", p.s}, {"t", p.t}, {"pressures", p.pressures}, {"discrepancy", p.discrepancy}});
  ctx.emit_json("agreement.json", {{"components", agree.components},
                                   {"points", pts},
                                   {"max_discrepancy", agree.max_discrepancy},
                                   {"tolerance", agree.tolerance},
                                   {"passed", agree.passed}});
}

json statistics_json(const CenteredStatistics& s) { return {{"moments", s.moments}, {"ks", s.ks}}; }

void write_cdf(Context& ctx, const std::string& rel, const std::vector<CdfSample>& cdf) {
  std::ostringstream out;
  out << "t,empirical,normal_reference\n";
  for (const auto& c : cdf) out << csv_number(c.t) << "," << csv_number(c.empirical) << "," << csv_number(c.reference) << "\n";
  ctx.emit(rel, out.str());
}

void task_clt(Context& ctx) {
  ensure_ball(ctx);
  const DistortionConstants& c = *ctx.constants;
  const BallEnumeration& ball = *ctx.ball;
  std::vector<double> counts = ball_counts(ball, ctx.T_grid);
  const std::vector<double> dense = fit_grid(ball.T);
  GrowthFit fit = growth_rate(dense, ball_counts(ball, dense));
  OrbitalReport orbital = orbital_constant(ctx.T_grid, counts, fit.rate);
  json reports = json::array();
  MomentReport last;
  for (double T : ctx.T_grid) {
    last = clt_report(ball, T, c.tau, c.sigma2);
    reports.push_back({{"T", T},
                       {"N", last.count},
                       {"tau_hat", last.tau_hat},
                       {"tau_ratio", last.tau_ratio},
                       {"level", statistics_json(last.level)},
                       {"distortion", statistics_json(last.distortion)},
                       {"targets", last.targets},
                       {"variance_statistic", last.variance_statistic},
                       {"variance_identity_error", last.variance_identity_error}});
  }
  json j = {{"reference", {{"tau", c.tau}, {"sigma2", c.sigma2}, {"route", "spectral"}}},
            {"normalization", normalization_json(c.normalization)},
            {"enumeration",
             {{"T", ball.T},
              {"size", ball.size()},
              {"mode", to_string(ball.mode)},
              {"certificate", to_string(ball.certificate.status)},
              {"word_radius", ball.certificate.word_radius},
              {"witness", ball.certificate.witness}}},
            {"T_grid", ctx.T_grid},
            {"counts", counts},
            {"growth", {{"rate", fit.rate}, {"band", fit.band}, {"fit_window", {dense.front(), dense.back()}}}},
            {"orbital", {{"normalized", orbital.normalized}, {"oscillation", orbital.oscillation}, {"plateau", orbital.plateau}}},
            {"reports", reports}};
  ctx.emit_json("clt/report.json", j);
  write_cdf(ctx, "cdf.csv", last.distortion.cdf);
  write_cdf(ctx, "cdf_level.csv", last.level.cdf);
  std::ostringstream g;
  g << "T,N,log_N,fit\n";
  for (std::size_t i = 0; i < ctx.T_grid.size(); ++i) {
    g << csv_number(ctx.T_grid[i]) << "," << csv_number(counts[i]) << ","
      << (counts[i] > 0 ? csv_number(std::log(counts[i])) : "") << "," << csv_number(fit.intercept + fit.rate * ctx.T_grid[i]) << "\n";
  }
  ctx.emit("growth.csv", g.str());
}

void task_manhattan(Context& ctx) {
  ensure_constants(ctx);
  const DistortionConstants& c = *ctx.constants;
  const int n = ctx.spec.knobs.s_points;
  std::vector<double> s_grid;
  for (int i = 0; i < n; ++i) s_grid.push_back(c.growth_star * i / (n - 1));
  ManhattanCurve curve = manhattan_curve(*ctx.pair, s_grid);
  std::ostringstream csv;
  csv << "s,theta,route\n";
  for (const auto& smp : curve.samples) csv << csv_number(smp.s) << "," << csv_number(smp.theta) << ",spectral\n";
  json empirical = json::array();
  if (ctx.ball) {
    for (double s : s_grid) {
      GrowthFit f = empirical_manhattan(*ctx.ball, fit_grid(ctx.ball->T), s);
      csv << csv_number(s) << "," << csv_number(f.rate) << ",counting\n";
      empirical.push_back({{"s", s}, {"theta", f.rate}, {"band", f.band}});
    }
  }
  ctx.emit("manhattan.csv", csv.str());
  ctx.emit_json("manhattan.json", {{"theta_at_zero", curve.samples.front().theta},
                                   {"theta_at_growth_star", curve.samples.back().theta},
                                   {"max_chord_deviation", curve.max_chord_deviation},
                                   {"min_second_difference", curve.min_second_difference},
                                   {"theta_prime", curve.theta_prime},
                                   {"theta_second", curve.theta_second},
                                   {"empirical", empirical}});
}

void task_rigidity(Context& ctx) {
  ensure_constants(ctx);
  const DistortionConstants& c = *ctx.constants;
  json j;
  j["sigma2"] = c.sigma2;
  j["sigma2_small"] = c.sigma2 <= 1e-6;
  if (!ctx.group) {
    j["similarity"] = "skipped: translation lengths need a free group";
    ctx.emit_json("rigidity.json", j);
    return;
  }
  SimilarityReport sim =
      rough_similarity_test(*ctx.d, *ctx.d_star, *ctx.group, ctx.spec.knobs.similarity_samples, ctx.spec.knobs.seed);
  j["similarity"] = {{"verdict", sim.similar ? "SIMILAR" : "NOT SIMILAR"},
                     {"ratio_min", sim.ratio_min},
                     {"ratio_max", sim.ratio_max},
                     {"spread", sim.spread},
                     {"bracket_allowance", sim.bracket_allowance},
                     {"tau_estimate", sim.tau_estimate},
                     {"samples", sim.samples}};
  j["consistent"] = sim.similar == (c.sigma2 <= 1e-6);
  ensure_ball(ctx);
  json defects = json::array();
  for (double T : ctx.T_grid) {
    DefectPoint p = translation_defect_fraction(*ctx.ball, *ctx.d, *ctx.group, T);
    defects.push_back({{"T", T},
                       {"count", p.count},
                       {"defective", p.defective},
                       {"inconclusive", p.inconclusive},
                       {"fraction", p.fraction}});
  }
  j["translation_defect"] = defects;
  ctx.emit_json("rigidity.json", j);
}

}  // namespace

nlohmann::json prepare_experiment(const ExperimentSpec& spec) {
  Context ctx(spec);
  setup(ctx);
  return {{"group", ctx.coding->group_description()},
          {"d", ctx.d->description()},
          {"d_star", ctx.d_star->description()},
          {"spec_hash", spec.hash()}};
}

RunResult run_experiment(const ExperimentSpec& spec) {
  Context ctx(spec);
  fs::create_directories(spec.output);
  // Stale reports from an earlier run would otherwise survive a failed task.
  for (const char* rel : {"validate.json", "constants.json", "pressure.csv", "agreement.json", "clt/report.json",
                          "cdf.csv", "cdf_level.csv", "growth.csv", "manhattan.csv", "manhattan.json", "rigidity.json",
                          "manifest.json", "runtime.json", "plot_cdf.csv", "plot_manhattan.csv", "plot_moments.csv",
                          "plot_growth.csv"}) {
    fs::remove(spec.output / rel);
  }
  json timings = json::object();
  auto clock = [] { return std::chrono::steady_clock::now(); };
  auto t0 = clock();
  setup(ctx);
  timings["setup"] = std::chrono::duration<double>(clock() - t0).count();

  const std::map<std::string, std::function<void(Context&)>> runners = {
      {"validate", task_validate}, {"constants", task_constants}, {"pressure", task_pressure},
      {"clt", task_clt},           {"manhattan", task_manhattan}, {"rigidity", task_rigidity}};
  RunResult result;
  for (const auto& name : spec.tasks) {
    TaskStatus status{name, true, ""};
    auto start = clock();
    try {
      runners.at(name)(ctx);
    } catch (const std::exception& e) {
      status.ok = false;
      status.error = e.what();
    }
    timings[name] = std::chrono::duration<double>(clock() - start).count();
    result.tasks.push_back(status);
  }

  json tasks = json::array();
  for (const auto& t : result.tasks) {
    tasks.push_back({{"name", t.name}, {"status", t.ok ? "ok" : "failed"}, {"error", t.error}});
  }
  json manifest = {{"schema", kManifestSchema},
                   {"version", kVersion},
                   {"spec_hash", spec.hash()},
                   {"spec", spec.canonical()},
                   {"group", ctx.coding->group_description()},
                   {"d", ctx.d->description()},
                   {"d_star", ctx.d_star->description()},
                   {"tasks", tasks},
                   {"routes",
                    {{"constants.json", "spectral and curve sections name their route"},
                     {"pressure.csv", "spectral"},
                     {"agreement.json", "spectral"},
                     {"manhattan.csv", "route column (spectral | counting)"},
                     {"manhattan.json", "curve; 'empirical' entries are counting"},
                     {"clt/report.json", "counting, referenced to spectral tau and sigma2"},
                     {"cdf.csv", "counting"},
                     {"cdf_level.csv", "counting"},
                     {"growth.csv", "counting"},
                     {"rigidity.json", "counting, with spectral sigma2"},
                     {"validate.json", "coding"}}},
                   {"runtime", "runtime.json"}};
  if (ctx.constants) manifest["normalization"] = normalization_json(ctx.constants->normalization);
  json outputs = json::object();
  for (const auto& [rel, hash] : ctx.outputs) outputs[rel] = hash;
  manifest["outputs"] = outputs;
  write_file(spec.output / "manifest.json", manifest.dump(2) + "\n");
  write_file(spec.output / "runtime.json",
             json{{"timings", timings}, {"cache_root", spec.cache.string()}, {"cache", ctx.cache_events}}.dump(2) + "\n");
  result.manifest = std::move(manifest);
  return result;
}

// ---------------------------------------------------------------------------
// diff and plot data

namespace {

fs::path report_dir(const fs::path& report) { return fs::is_directory(report) ? report : report.parent_path(); }

json load_manifest(const fs::path& report) {
  fs::path dir = report_dir(report);
  fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw SpecError("no manifest.json in " + dir.string());
  json m = read_json(file);
  if (!m.contains("schema") || m["schema"] != kManifestSchema)
    throw SpecError(file.string() + ": unsupported manifest schema");
  return m;
}

json optional_json(const fs::path& file) { return fs::exists(file) ? read_json(file) : json(); }

}  // namespace

json diff_manifests(const fs::path& a, const fs::path& b) {
  json ma = load_manifest(a);
  json mb = load_manifest(b);
  if (ma["group"] != mb["group"])
    throw SpecError("incomparable runs: " + ma["group"].get<std::string>() + " vs " + mb["group"].get<std::string>());
  json ca = optional_json(report_dir(a) / "constants.json");
  json cb = optional_json(report_dir(b) / "constants.json");
  json la = optional_json(report_dir(a) / "clt" / "report.json");
  json lb = optional_json(report_dir(b) / "clt" / "report.json");
  json rows = json::array();
  auto add = [&](const std::string& name, const json& x, const json& y) {
    if (!x.is_number() || !y.is_number()) return;
    double u = x.get<double>(), v = y.get<double>();
    double diff = v - u;
    double rel = u != 0.0 ? diff / std::abs(u) : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    rows.push_back({{"quantity", name}, {"a", u}, {"b", v}, {"diff", diff}, {"relative", rel}});
  };
  auto at = [](const json& j, std::initializer_list<const char*> path) {
    const json* p = &j;
    for (const char* k : path) {
      if (!p->is_object() || !p->contains(k)) return json();
      p = &(*p)[k];
    }
    return *p;
  };
  add("tau", at(ca, {"spectral", "tau"}), at(cb, {"spectral", "tau"}));
  add("sigma2", at(ca, {"spectral", "sigma2"}), at(cb, {"spectral", "sigma2"}));
  add("sigma2_normalized", at(ca, {"spectral", "sigma2_normalized"}), at(cb, {"spectral", "sigma2_normalized"}));
  add("tau_curve", at(ca, {"curve", "tau"}), at(cb, {"curve", "tau"}));
  add("sigma2_curve", at(ca, {"curve", "sigma2"}), at(cb, {"curve", "sigma2"}));
  add("growth_rate_d", at(ca, {"spectral", "growth_rate_d"}), at(cb, {"spectral", "growth_rate_d"}));
  add("growth_rate_d_star", at(ca, {"spectral", "growth_rate_d_star"}), at(cb, {"spectral", "growth_rate_d_star"}));
  if (la.contains("reports") && lb.contains("reports") && !la["reports"].empty() && !lb["reports"].empty()) {
    const json& ra = la["reports"].back();
    const json& rb = lb["reports"].back();
    add("ks_distortion", at(ra, {"distortion", "ks"}), at(rb, {"distortion", "ks"}));
    add("ks_level", at(ra, {"level", "ks"}), at(rb, {"level", "ks"}));
    add("tau_hat", ra["tau_hat"], rb["tau_hat"]);
  }
  return {{"a", report_dir(a).string()}, {"b", report_dir(b).string()}, {"group", ma["group"]}, {"rows", rows}};
}

std::string format_diff(const json& diff) {
  std::ostringstream out;
  out << "# " << diff["group"].get<std::string>() << "\n";
  out << std::left << std::setw(20) << "quantity" << std::setw(24) << "a" << std::setw(24) << "b" << std::setw(24)
      << "diff" << "relative\n";
  out.precision(12);
  for (const auto& r : diff["rows"]) {
    out << std::setw(20) << r["quantity"].get<std::string>() << std::setw(24) << r["a"].get<double>() << std::setw(24)
        << r["b"].get<double>() << std::setw(24) << r["diff"].get<double>();
    if (r["relative"].is_number()) {
      out << r["relative"].get<double>();
    } else {
      out << "inf";
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
  std::istringstream in(read_file(file));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path need(const fs::path& file) {
  if (!fs::exists(file)) throw Error("missing report file " + file.string() + " (was the task run?)");
  return file;
}

}  // namespace

fs::path emit_plot_data(const fs::path& report, const std::string& kind, const std::optional<fs::path>& out_dir) {
  static const std::set<std::string> kinds = {"cdf", "manhattan", "moments", "growth"};
  if (!kinds.count(kind)) throw SpecError("unknown plot kind '" + kind + "' (expected cdf, manhattan, moments or growth)");
  const fs::path dir = report_dir(report);
  load_manifest(dir);
  const fs::path target = (out_dir ? *out_dir : dir) / ("plot_" + kind + ".csv");
  std::ostringstream out;
  if (kind == "cdf") {
    out << read_file(need(dir / "cdf.csv"));
  } else if (kind == "growth") {
    out << read_file(need(dir / "growth.csv"));
  } else if (kind == "manhattan") {
    std::map<std::string, std::pair<std::string, std::string>> by_s;
    std::vector<std::string> order;
    auto rows = read_csv(need(dir / "manhattan.csv"));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 3) continue;
      if (!by_s.count(rows[i][0])) order.push_back(rows[i][0]);
      auto& cell = by_s[rows[i][0]];
      (rows[i][2] == "spectral" ? cell.first : cell.second) = rows[i][1];
    }
    out << "s,theta_spectral,theta_empirical\n";
    for (const auto& s : order) out << s << "," << by_s[s].first << "," << by_s[s].second << "\n";
  } else {
    json r = read_json(need(dir / "clt" / "report.json"));
    out << "T,p,centering,value,target\n";
    for (const auto& rep : r["reports"]) {
      for (const char* centering : {"level", "distortion"}) {
        for (int p = 0; p < 4; ++p) {
          out << csv_number(rep["T"].get<double>()) << "," << (p + 1) << "," << centering << ","
              << csv_number(rep[centering]["moments"][static_cast<std::size_t>(p)].get<double>()) << ","
              << csv_number(rep["targets"][static_cast<std::size_t>(p)].get<double>()) << "\n";
        }
      }
    }
  }
  write_file(target, out.str());
  return target;
}

}  // namespace hypstat
