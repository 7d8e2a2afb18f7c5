#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "kktsynth/errors.hpp"
#include "kktsynth/netlist.hpp"
#include "kktsynth/simulator.hpp"

using namespace kktsynth;
using testing::max_abs_diff;

namespace {

const SolverMethod kMethods[] = {SolverMethod::Penalty, SolverMethod::PrimalDual,
                                 SolverMethod::AugmentedLagrangian};

Netlist synth(const Problem& p, SolverMethod m) { return synthesize(p, differentiate(p), m); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Lines starting with the given name prefix followed by a digit.
std::vector<std::string> cards_named(const std::string& text, const std::string& prefix) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(prefix, 0) == 0 && line.size() > prefix.size() && std::isdigit(line[prefix.size()]))
      out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("format_value") {
  CHECK(format_value(1e4) == "1e4");
  CHECK(format_value(0.5) == "0.5");
  CHECK(format_value(1e-8) == "1e-8");
  CHECK(format_value(1e-7) == "1e-7");
  CHECK(format_value(100) == "100");
  CHECK(format_value(0) == "0");
  CHECK(format_value(-2.5e6) == "-2.5e6");
  CHECK(format_value(1234.5) == "1234.5");
  CHECK(format_value(5000) == "5000");
  for (double v : {1.0 / 3.0, 2e4 / 3.0, 7.123456789012e-9, 12345678.9})
    CHECK(std::stod(format_value(v)) == doctest::Approx(v).epsilon(1e-11));
}

TEST_CASE("worked example: augmented Lagrangian netlist") {
  Problem p = testing::eq5();
  Netlist nl = synth(p, SolverMethod::AugmentedLagrangian);
  const std::string text = emit_spice(nl);

  SUBCASE("counts by hand") {
    // op-amps: 2 integrators + 2 unity inverters, 5 row stages, 4 clippers,
    // 4 dual inverters (g1, g3, g4, h1 have a positive constant partial)
    ComponentCensus c = component_census(nl);
    CHECK(c.op_amps == 17);
    CHECK(c.capacitors == 7);  // 2 C_gamma + 5 C_rho
    CHECK(c.diodes == 4);
    CHECK(c.behavioral == 6);  // 2 gradient, +1 reference, 1 ball, 2 ball Jacobian
    CHECK(c.resistors == 45);
    CHECK(c.nodes == 45);  // vrefn is never needed
    CHECK(cards_named(text, "XI").size() == 2);
    CHECK(cards_named(text, "XC").size() == 5);
    CHECK(cards_named(text, "D").size() == 4);
    CHECK(c == expected_census(p, differentiate(p), SolverMethod::AugmentedLagrangian));
  }
  SUBCASE("cards") {
    CHECK(text.find("\nRF1 fg1 s1 1e4\n") != std::string::npos);
    CHECK(text.find("\nCG1 s1 u1 1e-7\n") != std::string::npos);
    CHECK(text.find("\nRP1 q1 z1 1e5\n") != std::string::npos);
    CHECK(text.find("\nRLI1 z1 d1 ") != std::string::npos);
    CHECK(text.find("* v1 = x1\n") != std::string::npos);
    CHECK(text.find("* mu1 = mu(h1)\n") != std::string::npos);
    CHECK(text.find(".TRAN 2e-6 0.02\n") != std::string::npos);
    CHECK(text.rfind(".END\n") == text.size() - 5);
  }
  SUBCASE("matches the reviewed golden") {
    CHECK(text == read_file(testing::source_path("golden/eq5_auglag.cir")));
  }
}

TEST_CASE("single unconstrained variable") {
  Problem p = testing::from_ampl("var x; minimize f: (x - 1)^2;");
  Netlist nl = synth(p, SolverMethod::AugmentedLagrangian);
  ComponentCensus c = component_census(nl);
  CHECK(c.op_amps == 2);
  CHECK(c.behavioral == 1);
  CHECK(c.capacitors == 1);
  CHECK(c.diodes == 0);
  CHECK(c.resistors == 3);
  CHECK(nl.find_node("vref") == -1);
}

TEST_CASE("synthesis is deterministic") {
  for (const auto& np : testing::small_suite())
    for (SolverMethod m : kMethods) CHECK(emit_spice(synth(np.problem, m)) == emit_spice(synth(np.problem, m)));
}

TEST_CASE("census formula agrees with the netlist") {
  auto check = [](const Problem& p) {
    GradientSet gs = differentiate(p);
    for (SolverMethod m : kMethods) {
      Netlist nl = synthesize(p, gs, m);
      CHECK(component_census(nl) == expected_census(p, gs, m));
      CHECK(component_census(nl).capacitors == static_cast<std::size_t>(p.n_vars) +
                                                   (m == SolverMethod::Penalty ? 0 : p.m() + p.p()));
    }
  };
  for (const auto& np : testing::small_suite()) {
    CAPTURE(np.name);
    check(np.problem);
  }
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    GeneratorSpec g;
    g.seed = seed;
    g.n = 1 + static_cast<int>(seed % 30);
    g.m_lin = static_cast<int>(seed % 6);
    g.m_quad = static_cast<int>(seed % 3);
    g.p_eq = static_cast<int>(seed % 4);
    g.density = seed % 2 ? Density::Sparse : Density::Dense;
    CAPTURE(seed);
    check(generate_problem(g).problem);
  }
}

TEST_CASE("structural soundness") {
  for (const auto& np : testing::small_suite()) {
    for (SolverMethod m : kMethods) {
      CAPTURE(np.name);
      Netlist nl = synth(np.problem, m);
      std::map<int, int> degree;
      std::set<std::string> names;
      std::map<int, int> cg_per_s;
      for (const Component& c : nl.components) {
        CHECK(names.insert(nl.name(c)).second);  // unique instance names
        degree[c.n1]++;
        degree[c.n2]++;
        if (c.kind == ComponentKind::OpAmp) degree[c.n3]++;
        if (c.kind == ComponentKind::Capacitor && nl.prefix(c.prefix) == "CG") cg_per_s[c.n1]++;
        if (c.kind == ComponentKind::Resistor || c.kind == ComponentKind::Capacitor) {
          CHECK(c.value > 0);
          CHECK(c.n1 != c.n2);
        }
      }
      // every non-ground node connects at least two terminals
      for (std::size_t id = 1; id < nl.node_count(); ++id) {
        CAPTURE(nl.label(static_cast<int>(id)));
        CHECK(degree[static_cast<int>(id)] >= 2);
      }
      CHECK(cg_per_s.size() == static_cast<std::size_t>(np.problem.n_vars));
      for (auto [s, count] : cg_per_s) CHECK(count == 1);
    }
  }
}

TEST_CASE("non-quadratic constraints are rejected") {
  // normalize refuses these already; synthesis checks again for raw problems
  Problem p;
  p.n_vars = 2;
  Expr x = Expr::variable(0), y = Expr::variable(1);
  p.objective = add({power(x, 2), power(y, 2)});
  p.inequalities.push_back(add({power(x, 3), y}));
  CHECK_THROWS_AS(synth(p, SolverMethod::AugmentedLagrangian), DegreeError);
  CHECK_THROWS_AS(testing::from_ampl("var x; var y; minimize f: x^2; subject to c: x^3 + y >= 0;"),
                  DegreeError);
  p.inequalities = {add({apply(FuncKind::Exp, x), Expr::constant(-1)})};
  CHECK_THROWS_AS(synth(p, SolverMethod::Penalty), DegreeError);
  // nonlinear objectives are fine
  CHECK_NOTHROW(synth(testing::from_ampl("var x; minimize f: exp(x) + x^4;"), SolverMethod::PrimalDual));
  CircuitGains bad;
  bad.c_rho = -1;
  CHECK_THROWS_AS(synthesize(testing::eq5(), differentiate(testing::eq5()), SolverMethod::Penalty, bad),
                  GainError);
}

TEST_CASE("ideal circuit reproduces the method dynamics") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& np : testing::small_suite()) {
    const Problem& p = np.problem;
    GradientSet gs = differentiate(p);
    for (SolverMethod m : kMethods) {
      CAPTURE(np.name);
      CAPTURE(to_string(m));
      DynamicalSystem ds = compile(p, gs, m, {}, /*anti_windup=*/false);
      IdealCircuit ic(synthesize(p, gs, m));
      REQUIRE(ic.state_size() == ds.state_size());
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(ds.state_size());
        for (double& v : s) v = 0.5 * normal(rng);
        std::vector<double> want = ds.rhs(s), got = ic.derivative(s);
        double scale = 1.0;
        for (double w : want) scale = std::max(scale, std::abs(w));
        CHECK(max_abs_diff(got, want) <= 1e-8 * scale);
      }
    }
  }
}

TEST_CASE("ideal circuit settles where the dynamics do") {
  for (const auto& np : testing::small_suite()) {
    const Problem& p = np.problem;
    GradientSet gs = differentiate(p);
    for (SolverMethod m : {SolverMethod::PrimalDual, SolverMethod::AugmentedLagrangian}) {
      CAPTURE(np.name);
      DynamicalSystem ds = compile(p, gs, m, {}, false);
      IdealCircuit ic(synthesize(p, gs, m));
      SimConfig cfg = SimConfig::defaults_for(ds.gains());
      cfg.rel_tol = kSolveRelTol;
      OdeSystem sys;
      sys.size = ic.state_size();
      sys.rhs = [&](std::span<const double> s, std::span<double> d) {
        auto v = ic.derivative(s);
        std::copy(v.begin(), v.end(), d.begin());
      };
      std::vector<double> s0(ds.state_size(), 0.0);
      auto a = integrate(ds, s0, cfg).final_state();
      Trajectory tc = integrate(sys, s0, cfg);
      auto b = tc.final_state();
      CHECK(max_abs_diff(a.first(ds.n_primal()), b.first(ds.n_primal())) <= 1e-4);
    }
  }
}

TEST_CASE("large sparse synthesis stays proportional") {
  GeneratorSpec g;
  g.n = 2000;
  g.m_lin = 200;
  g.m_quad = 20;
  g.p_eq = 20;
  g.density = Density::Sparse;
  Problem p = generate_problem(g).problem;
  GradientSet gs = differentiate(p);
  Netlist nl = synthesize(p, gs, SolverMethod::AugmentedLagrangian);
  ComponentCensus c = component_census(nl);
  CHECK(c == expected_census(p, gs, SolverMethod::AugmentedLagrangian));
  // 200 nonzeros per row bound the row-dependent part
  CHECK(c.components() < 20 * 2000 + 240 * 5 * 200);
}
