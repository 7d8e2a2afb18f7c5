#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "kktsynth/cli.hpp"

#include "json.hpp"

using namespace kktsynth;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "kktsynth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Scratch directory, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("kktsynth_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& text) const {
    fs::path p = path / name;
    std::ofstream(p, std::ios::binary) << text;
    return p.string();
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kEq5 = testing::source_path("problems/eq5.mod").string();

}  // namespace

TEST_CASE("solve exit codes") {
  TempDir tmp;
  SUBCASE("converging methods") {
    for (const char* m : {"aug-lagrangian", "primal-dual"}) {
      Run r = run({"solve", kEq5, "--method", m});
      CAPTURE(r.err);
      CHECK(r.code == kExitOk);
      CHECK(r.err.empty());
      auto j = nlohmann::json::parse(r.out);
      CHECK(j["variables"]["x1"].get<double>() == doctest::Approx(0.7625).epsilon(1e-6));
      CHECK(j["kkt"]["pass"].get<bool>());
    }
  }
  SUBCASE("penalty warns, strict fails") {
    Run r = run({"solve", kEq5, "--method", "penalty"});
    CHECK(r.code == kExitOk);
    CHECK(r.err.find("warning: KKT check failed") != std::string::npos);
    CHECK(run({"solve", kEq5, "--method", "penalty", "--strict"}).code == kExitKktFail);
  }
  SUBCASE("too short a horizon") {
    Run r = run({"solve", kEq5, "--t-stop", "1e-5"});
    CHECK(r.code == kExitNotSettled);
    CHECK(r.err.find("did not settle") != std::string::npos);
  }
  SUBCASE("unbounded objective diverges") {
    std::string f = tmp.file("unb.mod", "var x; minimize f: -exp(x);\n");
    CHECK(run({"solve", f}).code == kExitNotSettled);
  }
  SUBCASE("input errors") {
    CHECK(run({"solve", tmp / "missing.mod"}).code == kExitUsage);
    Run r = run({"solve", tmp.file("bad.mod", "var x;\nminimize f: x^^2;\n")});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("bad.mod:2:15: error: ") != std::string::npos);
    CHECK(run({"solve", kEq5, "--method", "newton"}).code == kExitUsage);
    CHECK(run({"solve", kEq5, "--format", "lp"}).code == kExitUsage);
    CHECK(run({"solve", kEq5, "--c-gamma", "-1"}).code == kExitUsage);
    CHECK(run({"solve"}).code == kExitUsage);
    CHECK(run({}).code == kExitUsage);
  }
  SUBCASE("cubic constraint") {
    std::string f = tmp.file("cubic.mod", "var x; minimize f: x^2; subject to c: x^3 >= -1;\n");
    CHECK(run({"synth", f, "-o", tmp / "c.cir"}).code == kExitDegree);
    CHECK(run({"solve", f}).code == kExitDegree);
  }
  SUBCASE("help") {
    Run r = run({"--help"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("solve") != std::string::npos);
    CHECK(run({"solve", "--help"}).code == kExitOk);
  }
}

TEST_CASE("solution JSON layout") {
  TempDir tmp;
  const std::string sol = tmp / "sol.json", wave = tmp / "w.csv", cir = tmp / "n.cir";
  Run r = run({"solve", kEq5, "--solution", sol, "--waveform", wave, "--netlist", cir});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.empty());
  auto j = nlohmann::ordered_json::parse(slurp(sol));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"variables", "duals", "objective", "settling_time_s", "settled",
                                         "kkt", "method", "gains", "simulation", "oracle"});
  CHECK(j["duals"]["lambda"].size() == 4);
  CHECK(j["duals"]["mu"].size() == 1);
  CHECK(j["duals"]["mu"][0].get<double>() == doctest::Approx(-4.275).epsilon(1e-5));
  CHECK(j["objective"].get<double>() == doctest::Approx(8.371875).epsilon(1e-6));
  CHECK(j["method"] == "aug-lagrangian");
  CHECK(j["gains"]["gamma"].get<double>() == doctest::Approx(1e3));
  CHECK(j["gains"]["kappa_p"].get<double>() == doctest::Approx(10));
  CHECK(j["gains"]["kappa_i"].get<double>() == doctest::Approx(1e4));
  for (const char* k : {"stationarity", "primal_ineq", "primal_eq", "dual_feas", "comp_slack", "tolerance", "pass"})
    CHECK(j["kkt"].contains(k));
  CHECK(j["oracle"]["max_abs_dx"].get<double>() <= 1e-4);
  CHECK(j["settling_time_s"].get<double>() > 0);
  CHECK(slurp(wave).rfind("time,v1,v2,lam1,lam2,lam3,lam4,mu1\n", 0) == 0);
  CHECK(slurp(cir).find("XI1 s1 0 u1 OPAMP") != std::string::npos);
}

TEST_CASE("synth writes the reviewed netlist") {
  TempDir tmp;
  Run r = run({"synth", kEq5, "-o", tmp / "eq5.cir"});
  REQUIRE(r.code == kExitOk);
  CHECK(slurp(tmp / "eq5.cir") == slurp(testing::source_path("golden/eq5_auglag.cir")));
  CHECK(r.out.find("op-amps:    17\n") != std::string::npos);
  CHECK(r.out.find("components: 79\n") != std::string::npos);
  Run pd = run({"synth", kEq5, "--method", "primal-dual", "-o", tmp / "pd.cir"});
  CHECK(pd.code == kExitOk);
  CHECK(slurp(tmp / "pd.cir").find("CR1 c1 z1 1e-8") != std::string::npos);
}

TEST_CASE("synth from MPS") {
  TempDir tmp;
  const std::string mps = testing::source_path("tests/data/mps/02_quadobj.mps").string();
  Run r = run({"synth", mps, "-o", tmp / "q.cir"});
  CAPTURE(r.err);
  CHECK(r.code == kExitOk);
  CHECK(fs::file_size(tmp / "q.cir") > 0);
}

TEST_CASE("check") {
  Run r = run({"check", kEq5});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("inequalities: 4") != std::string::npos);
  CHECK(r.out.find("max degree:   2") != std::string::npos);
  CHECK(r.out.find("oracle f*:    8.371875") != std::string::npos);
}

TEST_CASE("bench") {
  TempDir tmp;
  SUBCASE("small suite passes and writes outputs") {
    std::string suite = tmp.file("s.json", R"({"methods": ["aug-lagrangian"],
        "instances": [{"n": 4, "m_lin": 2}, {"n": 6, "p_eq": 1, "density": "sparse"}]})");
    Run r = run({"bench", suite, "--out-dir", tmp / "out"});
    CAPTURE(r.err);
    CHECK(r.code == kExitOk);
    CHECK(nlohmann::json::parse(r.out)["gate_pass"].get<bool>());
    CHECK(fs::exists(tmp / "out/bench.csv"));
    CHECK(fs::exists(tmp / "out/summary.json"));
  }
  SUBCASE("gate failure") {
    std::string suite = tmp.file("g.json", R"({"methods": ["penalty"], "gate_mean_rel_err_pct": 1e-12,
        "instances": [{"n": 4, "m_lin": 2, "p_eq": 1}]})");
    CHECK(run({"bench", suite, "--out-dir", tmp / "o2"}).code == kExitBenchGate);
  }
  SUBCASE("bad suites") {
    CHECK(run({"bench", tmp.file("e.json", R"({"instances": []})")}).code == kExitUsage);
    CHECK(run({"bench", tmp / "nope.json"}).code == kExitUsage);
  }
}
