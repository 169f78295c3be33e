#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "slicebf/cli.hpp"
#include "slicebf/rng.hpp"

using namespace slicebf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "slicebf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "slicebf_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
  const fs::path p = scratch_dir() / name;
  std::ofstream(p) << body;
  return p.string();
}

// y plus m binary columns x1..xm; y depends on the listed columns.
std::string binary_panel(const std::string& name, std::size_t n, std::size_t m,
                         const std::vector<std::size_t>& causal, double mu, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "y";
  for (std::size_t j = 1; j <= m; ++j) csv << ",x" << j;
  csv << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> row(m);
    for (auto& v : row) v = rng.bernoulli(0.5);
    double y = rng.normal();
    for (std::size_t c : causal) y += mu * row[c];
    csv.precision(17);
    csv << y;
    for (int v : row) csv << ',' << v;
    csv << '\n';
  }
  return write_file(name, csv.str());
}

}  // namespace

TEST_CASE("test command on the two-row toy file") {
  const std::string path = write_file("toy.csv", "y,x\n0.5,1\n1.5,2\n");
  const Run r = run({"test", path, "-y", "y", "-x", "x", "-B", "0"});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["schema"] == 1);
  CHECK(doc["bf"].get<double>() == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(doc["n"] == 2);
  CHECK(doc["permutation"].is_null());
}

TEST_CASE("test command with conditioning columns and baselines") {
  const std::string path = write_file(
      "given.csv",
      "y,x,z1,z2\n"
      "0.1,a,p,u\n1.2,b,p,v\n2.3,a,q,u\n0.4,b,q,v\n1.5,a,p,v\n2.6,b,q,u\n0.7,a,q,v\n1.8,b,p,u\n"
      "0.9,b,p,u\n1.1,a,p,v\n2.0,b,q,u\n0.3,a,q,v\n1.4,b,p,v\n2.5,a,q,u\n0.6,b,q,v\n1.7,a,p,u\n");
  const Run r = run({"test", path, "-y", "y", "-x", "x", "--given", "z1,z2", "-B", "50", "--seed", "3",
                     "--methods", "anova"});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["z_levels"] == 4);
  CHECK(doc["given"] == json::array({"z1", "z2"}));
  CHECK(doc["permutation"]["replicates"] == 50);
  const double p = doc["permutation"]["p_value"].get<double>();
  CHECK(p >= 1.0 / 51.0);
  CHECK(p <= 1.0);
  CHECK(doc["baselines"].size() == 1);

  // Same seed, same bytes.
  const Run again = run({"test", path, "-y", "y", "-x", "x", "--given", "z1,z2", "-B", "50", "--seed", "3",
                         "--methods", "anova"});
  CHECK(again.out == r.out);
}

TEST_CASE("two-sample baselines and the formula p-value") {
  const std::string path = binary_panel("two.csv", 200, 1, {0}, 0.5, 4);
  const Run r = run({"test", path, "-y", "y", "-x", "x1", "-B", "0", "--methods", "t,ranksum,ks,ad"});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["baselines"].size() == 4);
  for (const auto& b : doc["baselines"]) {
    CHECK(b["p_value"].get<double>() >= 0.0);
    CHECK(b["p_value"].get<double>() <= 1.0);
  }
  // Balanced binary covariate hits the built-in unconditional entry.
  if (!doc["formula"].is_null()) CHECK(doc["formula"]["alpha"] == 1.12);
}

TEST_CASE("test command errors") {
  const std::string path = write_file("err.csv", "y,x,c\n1,a,k\n2,b,k\n3,a,k\n4,b,k\n");
  CHECK(run({"test", path, "-y", "y", "-x", "missing"}).code == 2);
  CHECK(run({"test", path, "-y", "nope", "-x", "x"}).code == 2);
  CHECK(run({"test", (scratch_dir() / "absent.csv").string(), "-y", "y", "-x", "x"}).code == 2);
  CHECK(run({"test", path, "-y", "y", "-x", "c"}).code == 3);
  CHECK(run({"test", path, "-y", "y", "-x", "x", "--alpha0", "-1"}).code == 2);
  CHECK(run({"test", path, "-y", "y", "-x", "x", "--methods", "chisq"}).code == 2);
  CHECK(run({"test", path}).code == 2);
  const Run bad = run({"test", path, "-y", "y", "-x", "missing"});
  CHECK(bad.err.find("missing") != std::string::npos);
}

TEST_CASE("zero-variance ANOVA is a statistical degeneracy") {
  const std::string path = write_file("flat.csv", "y,x\n1,a\n1,a\n2,b\n2,b\n");
  CHECK(run({"test", path, "-y", "y", "-x", "x", "-B", "0", "--methods", "anova"}).code == 3);
}

TEST_CASE("oversized super variable is a capacity error") {
  Rng rng(5);
  std::ostringstream csv;
  csv << "y,x";
  for (int j = 1; j <= 25; ++j) csv << ",z" << j;
  csv << '\n';
  for (int i = 0; i < 40; ++i) {
    csv << rng.normal() << ',' << i % 2;
    for (int j = 0; j < 25; ++j) csv << ',' << rng.bernoulli(0.5);
    csv << '\n';
  }
  const std::string path = write_file("wide.csv", csv.str());
  std::string given;
  for (int j = 1; j <= 25; ++j) given += (j > 1 ? "," : "") + std::string("z") + std::to_string(j);
  CHECK(run({"test", path, "-y", "y", "-x", "x", "--given", given, "-B", "0"}).code == 4);
}

TEST_CASE("select command") {
  SUBCASE("null data selects nothing") {
    const std::string path = binary_panel("null.csv", 400, 10, {}, 0.0, 6);
    const Run r = run({"select", path, "-y", "y", "-B", "99"});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    CHECK(doc["trace"]["final_set"].empty());
    CHECK(doc["trace"]["screened"].size() == 10);
  }
  SUBCASE("planted pair with the fixed threshold rule") {
    const std::string path = binary_panel("pair.csv", 400, 6, {1, 4}, 1.2, 7);
    const Run r = run({"select", path, "-y", "y", "--stop-rule", "bf:150"});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    CHECK(doc["stop_rule"] == "bf:150");
    const auto labels = doc["trace"]["final_labels"].get<std::vector<std::string>>();
    CHECK(std::set<std::string>(labels.begin(), labels.end()) == std::set<std::string>{"x2", "x5"});
    for (const auto& s : doc["trace"]["steps"]) CHECK(s["p_value"].is_null());
  }
  SUBCASE("planted pair with the permutation rule") {
    const std::string path = binary_panel("pair_perm.csv", 400, 6, {0, 3}, 1.0, 8);
    const Run r = run({"select", path, "-y", "y", "-B", "99", "--seed", "2"});
    REQUIRE(r.code == 0);
    const auto final_set = json::parse(r.out)["trace"]["final_set"].get<std::vector<std::size_t>>();
    CHECK(std::set<std::size_t>(final_set.begin(), final_set.end()) == std::set<std::size_t>{0, 3});
  }
  SUBCASE("bad stop rule") {
    const std::string path = binary_panel("rule.csv", 20, 2, {}, 0.0, 9);
    CHECK(run({"select", path, "-y", "y", "--stop-rule", "maybe"}).code == 2);
  }
}

TEST_CASE("simulate command") {
  const std::vector<std::string> args{"simulate", "--scenario", "s2", "--seed", "5", "--reps", "60"};
  const Run a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("method\treplicate\thypothesis\tscore\tp_value\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : a.out) lines += ch == '\n';
  CHECK(lines == 1 + 5 * 2 * 60);

  const std::string prefix = (scratch_dir() / "sim").string();
  const Run c = run({"simulate", "--scenario", "case1", "--seed", "5", "--reps", "30", "--p0", "0.75",
                     "-o", prefix});
  REQUIRE(c.code == 0);
  CHECK(fs::exists(prefix + ".tsv"));
  const json summary = json::parse(c.out);
  CHECK(summary["summary"].size() == 2);

  CHECK(run({"simulate", "--scenario", "s9", "--seed", "1"}).code == 2);
  CHECK(run({"simulate", "--scenario", "s1"}).code == 2);
  CHECK(run({"simulate", "--scenario", "case1", "--seed", "1", "--methods", "t"}).code == 2);
}

TEST_CASE("calibrate command") {
  const std::string table = (scratch_dir() / "calibration.json").string();
  fs::remove(table);
  CHECK(run({"calibrate", "--n-grid", "100", "--b-grid", "1", "--table", table}).code == 2);

  const Run r = run({"calibrate", "--n-grid", "50,100", "--b-grid", "1,2", "--shuffles", "300",
                     "--frequencies", "0.3,0.7", "--table", table});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["grid"].size() == 4);
  CHECK(doc["constants"]["alpha"].get<double>() > 0.0);
  std::ifstream in(table);
  const json saved = json::parse(in);
  CHECK(saved.dump().find("0.3") != std::string::npos);

  // The saved entry is used by later test runs at matching frequencies.
  Rng rng(10);
  std::ostringstream csv;
  csv << "y,x\n";
  for (int i = 0; i < 100; ++i) csv << rng.normal() << ',' << (i < 30 ? 1 : 0) << '\n';
  const std::string data = write_file("skewed.csv", csv.str());
  const json t = json::parse(run({"test", data, "-y", "y", "-x", "x", "-B", "0", "--calibration", table}).out);
  REQUIRE(!t["formula"].is_null());
  CHECK(t["formula"]["source"] != "builtin");
}

TEST_CASE("calibrate defaults reproduce the published unconditional constants" * doctest::may_fail()) {
  const Run r = run({"calibrate", "--table", (scratch_dir() / "defaults.json").string()});
  REQUIRE(r.code == 0);
  const json c = json::parse(r.out)["constants"];
  CHECK(std::abs(c["alpha"].get<double>() - 1.12) <= 0.15);
  CHECK(std::abs(c["beta"].get<double>() - 0.6) <= 0.1);
  CHECK(std::abs(c["gamma"].get<double>() - 0.76) <= 0.3);
}

TEST_CASE("calibrate defaults reproduce the published conditional constants" * doctest::may_fail()) {
  const Run r = run({"calibrate", "--z-levels", "2", "--table", (scratch_dir() / "defaults_z.json").string()});
  REQUIRE(r.code == 0);
  const json c = json::parse(r.out)["constants"];
  CHECK(std::abs(c["alpha"].get<double>() - 1.07) <= 0.15);
  CHECK(std::abs(c["beta"].get<double>() - 0.86) <= 0.1);
  CHECK(std::abs(c["gamma"].get<double>() - 3.8) <= 0.3);
}

TEST_CASE("help, version and usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"test", "--help"}).code == 0);
  CHECK(run({"--version"}).code == 0);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("installed binary exit codes") {
#ifdef SLICEBF_TOOL
  const std::string tool = SLICEBF_TOOL;
#else
  const char* env = std::getenv("SLICEBF_TOOL");
  if (env == nullptr) return;
  const std::string tool = env;
#endif
  const std::string path = write_file("bin.csv", "y,x\n0.5,1\n1.5,2\n");
  CHECK(std::system((tool + " test " + path + " -y y -x x -B 0 > /dev/null").c_str()) == 0);
  const int status = std::system((tool + " test " + path + " -y y -x q 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
