#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hypstat/experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Scratch {
  fs::path root;
  Scratch() {
    root = fs::temp_directory_path() / ("hypstat-test-" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(const fs::path& dir, const std::string& args) {
  const char* bin = std::getenv("HYPSTAT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "HYPSTAT_BIN is not set");
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = std::string("HYPSTAT_CACHE='") + (dir / "env-cache").string() + "' '" + bin + "' " + args +
                    " > '" + out.string() + "' 2> '" + err.string() + "'";
  int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

fs::path write_spec(const fs::path& dir, const std::string& name, const json& spec) {
  fs::create_directories(dir);
  fs::path p = dir / name;
  std::ofstream(p) << spec.dump(2);
  return p;
}

json base_spec(const std::string& output, const std::string& cache) {
  return {{"schema", "hypstat.experiment/1"},
          {"group", {{"free_rank", 2}}},
          {"d", {{"kind", "green"}, {"weights", {0.35, 0.15}}}},
          {"d_star", {{"kind", "green"}, {"weights", {0.25, 0.25}}}},
          {"tasks", {"all"}},
          {"knobs", {{"T_max", 8.0}, {"similarity_samples", 50}}},
          {"output", output},
          {"cache", cache}};
}

// Output files other than the timing record.
std::map<std::string, std::string> report_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "runtime.json") continue;
    files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("degenerate pair: zero variance and a similar verdict") {
  Scratch s;
  json spec = base_spec("out", "cache");
  spec["d"] = {{"kind", "word"}};
  spec["d_star"] = {{"kind", "scaled"}, {"factor", 2.0}, {"base", {{"kind", "word"}}}};
  Outcome r = cli(s.root, "run '" + write_spec(s.root, "spec.json", spec).string() + "'");
  CHECK_MESSAGE(r.code == 0, r.out << r.err);
  json c = read_json(s.root / "out" / "constants.json");
  CHECK(c["spectral"]["tau"].get<double>() == doctest::Approx(2.0));
  CHECK(c["spectral"]["sigma2"].get<double>() <= 1e-8);
  json rig = read_json(s.root / "out" / "rigidity.json");
  CHECK(rig["similarity"]["verdict"] == "SIMILAR");
  CHECK(rig["consistent"] == true);
  json m = read_json(s.root / "out" / "manifest.json");
  CHECK(m["schema"] == hypstat::kManifestSchema);
  for (const auto& t : m["tasks"]) CHECK(t["status"] == "ok");
  for (const auto& [rel, hash] : m["outputs"].items()) CHECK(hypstat::sha256_file(s.root / "out" / rel) == hash);
}

TEST_CASE("re-runs are byte-identical and served from the cache") {
  Scratch s;
  fs::path spec = write_spec(s.root, "spec.json", base_spec("out", "cache"));
  REQUIRE(cli(s.root, "run '" + spec.string() + "'").code == 0);
  auto cold = report_files(s.root / "out");
  json first = read_json(s.root / "out" / "runtime.json");
  for (const auto& e : first["cache"]) CHECK(e["hit"] == false);

  REQUIRE(cli(s.root, "run '" + spec.string() + "'").code == 0);
  auto warm = report_files(s.root / "out");
  json second = read_json(s.root / "out" / "runtime.json");
  REQUIRE(second["cache"].size() == first["cache"].size());
  for (const auto& e : second["cache"]) CHECK(e["hit"] == true);
  CHECK(cold == warm);

  // A fresh cache directory reproduces the same bytes.
  fs::path other = write_spec(s.root / "again", "spec.json", base_spec("out", "cache"));
  REQUIRE(cli(s.root, "run '" + other.string() + "'").code == 0);
  CHECK(report_files(s.root / "again" / "out") == cold);
}

TEST_CASE("cache root comes from the environment when the spec has none") {
  Scratch s;
  json spec = base_spec("out", "unused");
  spec.erase("cache");
  spec["tasks"] = {"constants"};
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "spec.json", spec).string() + "'").code == 0);
  CHECK(fs::exists(s.root / "env-cache" / "green"));
  CHECK(read_json(s.root / "out" / "runtime.json")["cache_root"] == (s.root / "env-cache").string());
}

TEST_CASE("spec errors exit with code 2") {
  Scratch s;
  json missing = base_spec("out", "cache");
  missing["d"] = {{"kind", "green"}, {"measure", "nowhere/mu.txt"}};
  Outcome r = cli(s.root, "run '" + write_spec(s.root, "missing.json", missing).string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("nowhere/mu.txt") != std::string::npos);

  json typo = base_spec("out", "cache");
  typo["knobs"]["slak"] = 1;
  r = cli(s.root, "validate '" + write_spec(s.root, "typo.json", typo).string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("slak") != std::string::npos);

  json range = base_spec("out", "cache");
  range["knobs"]["cylinder_depth"] = 40;
  CHECK(cli(s.root, "validate '" + write_spec(s.root, "range.json", range).string() + "'").code == 2);

  json schema = base_spec("out", "cache");
  schema["schema"] = "hypstat.experiment/0";
  CHECK(cli(s.root, "run '" + write_spec(s.root, "schema.json", schema).string() + "'").code == 2);

  CHECK(cli(s.root, "run '" + (s.root / "absent.json").string() + "'").code == 2);
  CHECK(cli(s.root, "frobnicate").code == 2);

  json ok = base_spec("out", "cache");
  Outcome v = cli(s.root, "validate '" + write_spec(s.root, "ok.json", ok).string() + "'");
  CHECK(v.code == 0);
  CHECK(v.out.find("free group of rank 2") != std::string::npos);
}

TEST_CASE("measure files resolve relative to the spec") {
  Scratch s;
  fs::create_directories(s.root / "inputs");
  std::ofstream(s.root / "inputs" / "mu.txt") << "weight a 0.35\nweight A 0.35\nweight b 0.15\nweight B 0.15\n";
  json spec = base_spec("out", "cache");
  spec["d"] = {{"kind", "green"}, {"measure", "inputs/mu.txt"}};
  spec["tasks"] = {"constants"};
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "spec.json", spec).string() + "'").code == 0);
  json from_file = read_json(s.root / "out" / "constants.json");

  json inline_spec = base_spec("out2", "cache");
  inline_spec["tasks"] = {"constants"};
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "inline.json", inline_spec).string() + "'").code == 0);
  CHECK(from_file["spectral"]["tau"].get<double>() ==
        doctest::Approx(read_json(s.root / "out2" / "constants.json")["spectral"]["tau"].get<double>()).epsilon(1e-12));
}

TEST_CASE("task failures exit with code 1 and are recorded") {
  Scratch s;
  json spec = base_spec("out", "cache");
  spec["knobs"]["ball_cap"] = 100;
  spec["tasks"] = {"constants", "clt"};
  Outcome r = cli(s.root, "run '" + write_spec(s.root, "spec.json", spec).string() + "'");
  CHECK(r.code == 1);
  json m = read_json(s.root / "out" / "manifest.json");
  CHECK(m["tasks"][0]["status"] == "ok");
  CHECK(m["tasks"][1]["status"] == "failed");
  CHECK(m["tasks"][1]["error"].get<std::string>().find("elements") != std::string::npos);
}

TEST_CASE("diff: identical runs, depth stability, incomparable groups") {
  Scratch s;
  json a = base_spec("a", "cache");
  a["tasks"] = {"constants", "clt"};
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "a.json", a).string() + "'").code == 0);
  Outcome same = cli(s.root, "diff '" + (s.root / "a").string() + "' '" + (s.root / "a" / "manifest.json").string() + "'");
  REQUIRE(same.code == 0);
  json d = hypstat::diff_manifests(s.root / "a", s.root / "a");
  REQUIRE(d["rows"].size() >= 8);
  for (const auto& row : d["rows"]) CHECK(row["diff"].get<double>() == 0.0);

  json k5 = a;
  k5["output"] = "k5";
  k5["knobs"]["cylinder_depth"] = 5;
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "k5.json", k5).string() + "'").code == 0);
  for (const auto& row : hypstat::diff_manifests(s.root / "a", s.root / "k5")["rows"]) {
    if (row["quantity"] == "tau") CHECK(std::abs(row["relative"].get<double>()) <= 0.01);
  }

  json f3 = base_spec("f3", "cache");
  f3["group"] = {{"free_rank", 3}};
  f3["d"] = {{"kind", "word"}};
  f3["d_star"] = {{"kind", "word"}};
  f3["tasks"] = {"constants"};
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "f3.json", f3).string() + "'").code == 0);
  Outcome bad = cli(s.root, "diff '" + (s.root / "a").string() + "' '" + (s.root / "f3").string() + "'");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("incomparable") != std::string::npos);
}

TEST_CASE("plot data kinds") {
  Scratch s;
  REQUIRE(cli(s.root, "run '" + write_spec(s.root, "spec.json", base_spec("out", "cache")).string() + "'").code == 0);
  const fs::path out = s.root / "out";
  const std::map<std::string, std::string> headers = {{"cdf", "t,empirical,normal_reference"},
                                                      {"manhattan", "s,theta_spectral,theta_empirical"},
                                                      {"moments", "T,p,centering,value,target"},
                                                      {"growth", "T,N,log_N,fit"}};
  for (const auto& [kind, header] : headers) {
    Outcome r = cli(s.root, "plotdata '" + out.string() + "' --kind " + kind + " --out '" + (s.root / "plots").string() + "'");
    REQUIRE(r.code == 0);
    std::istringstream in(slurp(s.root / "plots" / ("plot_" + kind + ".csv")));
    std::string first;
    std::getline(in, first);
    CHECK(first == header);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    if (kind == "cdf") CHECK(rows == 201);
    if (kind == "manhattan") CHECK(rows == 11);
    if (kind == "moments") CHECK(rows == 8 * 4 * 2);
  }
  CHECK(cli(s.root, "plotdata '" + out.string() + "' --kind histogram").code == 2);
}
