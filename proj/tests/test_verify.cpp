#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "kktsynth/errors.hpp"
#include "kktsynth/verify.hpp"

#include "json.hpp"

using namespace kktsynth;
using testing::max_abs_diff;

namespace {

Problem ampl(const std::string& text) { return normalize(parse_ampl_subset(text).problem); }

void check_self_certified(const Problem& p, const OracleSolution& o) {
  KktReport k = kkt_residuals(p, differentiate(p), o.x_star, o.lambda_star, o.mu_star, 1e-9);
  CAPTURE(k.stationarity);
  CAPTURE(k.primal_ineq);
  CAPTURE(k.primal_eq);
  CAPTURE(k.comp_slack);
  CHECK(k.pass);
  CHECK(o.f_star == doctest::Approx(p.objective_value(o.x_star)));
}

}  // namespace

TEST_CASE("KKT residuals") {
  Problem p = testing::eq5();
  GradientSet gs = differentiate(p);
  std::vector<double> lam(4, 0.0), mu{0.0};
  SUBCASE("origin") {
    std::vector<double> z{0, 0};
    KktReport k = kkt_residuals(p, gs, z, lam, mu);
    CHECK(k.stationarity == 2.0);  // infinity norm of (1.5, -2)
    CHECK(k.primal_eq == 2.0);
    CHECK(k.primal_ineq == 0.0);
    CHECK(k.dual_feas == 0.0);
    CHECK_FALSE(k.pass);
    CHECK(k.worst() == 2.0);
  }
  SUBCASE("optimum") {
    auto an = testing::eq5_analytic();
    std::vector<double> v{an.x1, an.x2}, m{an.mu};
    KktReport k = kkt_residuals(p, gs, v, lam, m);
    CHECK(k.worst() <= 1e-9);
    CHECK(k.pass);
  }
  SUBCASE("positive multiplier") {
    std::vector<double> v{0.7625, 0.475}, m{-4.275};
    std::vector<double> bad{0.5, 0, 0, 0};
    KktReport k = kkt_residuals(p, gs, v, bad, m);
    CHECK(k.dual_feas == 0.5);
    CHECK_FALSE(k.pass);
  }
  SUBCASE("infeasible point and slackness") {
    std::vector<double> v{-1, 0}, l{0, 0, -2, 0}, m{0};
    KktReport k = kkt_residuals(p, gs, v, l, m);
    CHECK(k.primal_ineq == 1.0);          // g3 = x1 = -1
    CHECK(k.comp_slack == doctest::Approx(2.0));  // |-2 * -1|
  }
  CHECK_THROWS_AS(kkt_residuals(p, gs, std::vector<double>{0}, lam, mu), LengthMismatch);
}

TEST_CASE("oracle on the worked example agrees with the hand solution") {
  Problem p = testing::eq5();
  OracleSolution o = oracle_solve(p);
  auto an = testing::eq5_analytic();
  CHECK(o.x_star[0] == doctest::Approx(an.x1).epsilon(1e-12));
  CHECK(o.x_star[1] == doctest::Approx(an.x2).epsilon(1e-12));
  CHECK(o.f_star == doctest::Approx(8.371875).epsilon(1e-12));
  CHECK(o.mu_star[0] == doctest::Approx(-4.275).epsilon(1e-12));
  CHECK(o.active_set == std::vector<int>{4});  // only h
  check_self_certified(p, o);
}

TEST_CASE("oracle on a small LP") {
  Problem p = ampl("var x1 >= 0; var x2 >= 0; minimize f: 2*x1 + 3*x2; subject to c: x1 + x2 >= 1;");
  OracleSolution o = oracle_solve(p);
  CHECK(o.x_star[0] == doctest::Approx(1.0));
  CHECK(std::abs(o.x_star[1]) <= 1e-12);
  CHECK(o.f_star == doctest::Approx(2.0));
  check_self_certified(p, o);
}

TEST_CASE("oracle on an unconstrained quadratic") {
  Problem p = ampl("var a; var b; var c; minimize f: 0.5*(a^2 + b^2 + c^2);");
  OracleSolution o = oracle_solve(p);
  CHECK(o.x_star == std::vector<double>{0, 0, 0});
  CHECK(o.f_star == 0.0);
  CHECK(o.active_set.empty());
}

TEST_CASE("oracle errors") {
  CHECK_THROWS_AS(oracle_solve(ampl("var x; minimize f: exp(x);")), NotQp);
  CHECK_THROWS_AS(oracle_solve(ampl("var x; minimize f: x^2; subject to a: x >= 1; subject to b: x <= 0;")),
                  Infeasible);
  GeneratorSpec g;
  g.n = 10;
  g.m_lin = 21;
  CHECK_THROWS_AS(oracle_solve(generate_problem(g).problem), TooLarge);
  g.m_lin = 10;
  g.m_quad = 6;
  CHECK_THROWS_AS(oracle_solve(generate_problem(g).problem), TooLarge);
}

TEST_CASE("oracle self-certification on generated instances") {
  int n_checked = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    GeneratorSpec g;
    g.seed = seed;
    g.n = 2 + static_cast<int>(seed % 7);
    g.m_lin = static_cast<int>(seed % 5);
    g.m_quad = seed % 3 == 0 ? 2 : (seed % 4 == 0 ? 1 : 0);
    g.p_eq = static_cast<int>(seed % 3);
    g.density = seed % 2 ? Density::Sparse : Density::Dense;
    CAPTURE(seed);
    Problem p = generate_problem(g).problem;
    check_self_certified(p, oracle_solve(p));
    ++n_checked;
  }
  CHECK(n_checked == 24);
}

TEST_CASE("generator") {
  GeneratorSpec g;
  g.seed = 1;
  g.n = 10;
  g.m_lin = 5;
  g.p_eq = 2;
  SUBCASE("x0 is feasible with margin") {
    for (int q : {0, 3}) {
      for (Density d : {Density::Dense, Density::Sparse}) {
        g.m_quad = q;
        g.density = d;
        GeneratedProblem gp = generate_problem(g);
        CHECK(gp.problem.m() == 5 + q);
        CHECK(gp.problem.p() == 2);
        for (double v : gp.problem.inequality_values(gp.x0)) CHECK(v >= kGeneratorMargin - 1e-12);
        for (double v : gp.problem.equality_values(gp.x0)) CHECK(std::abs(v) <= 1e-12);
      }
    }
  }
  SUBCASE("deterministic in the seed") {
    GeneratedProblem a = generate_problem(g), b = generate_problem(g);
    CHECK(emit_ampl(a.problem) == emit_ampl(b.problem));
    CHECK(a.x0 == b.x0);
    g.seed = 2;
    CHECK(emit_ampl(generate_problem(g).problem) != emit_ampl(a.problem));
  }
  SUBCASE("objective is strictly convex") {
    // the Hessian is A'A + I, so f - 1/2 |x|^2 is convex along any line
    GeneratedProblem gp = generate_problem(g);
    const Problem& p = gp.problem;
    std::vector<double> a(10), d(10);
    for (int k = 0; k < 10; ++k) {
      a[k] = std::sin(k + 1.0);
      d[k] = std::cos(3.0 * k);
    }
    const double dd = std::inner_product(d.begin(), d.end(), d.begin(), 0.0);
    auto at = [&](double t) {
      std::vector<double> x(10);
      for (int k = 0; k < 10; ++k) x[k] = a[k] + t * d[k];
      return p.objective_value(x);
    };
    const double second = at(1) - 2 * at(0) + at(-1);
    CHECK(second >= dd - 1e-9);
  }
  SUBCASE("sparse rows respect the nonzero cap") {
    g.n = 200;
    g.density = Density::Sparse;
    Problem p = generate_problem(g).problem;
    GradientSet gs = differentiate(p);
    for (const auto& row : gs.grad_g) CHECK(row.nnz() == 20);
  }
  SUBCASE("sparse equality rows stay independent") {
    // one nonzero per row at n < 10; p = n pins x to x0
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      GeneratorSpec s;
      s.seed = seed;
      s.n = 4;
      s.p_eq = 4;
      s.density = Density::Sparse;
      GeneratedProblem gp = generate_problem(s);
      OracleSolution o = oracle_solve(gp.problem);
      CHECK(max_abs_diff(o.x_star, gp.x0) <= 1e-12);
    }
  }
  SUBCASE("showcase shape") {
    GeneratorSpec s;
    s.n = 500;
    s.m_lin = 50;
    s.m_quad = 50;
    s.density = Density::Sparse;
    GeneratedProblem gp = generate_problem(s);
    CHECK(gp.problem.n_vars == 500);
    CHECK(gp.problem.m() == 100);
  }
}

TEST_CASE("statistics") {
  std::vector<double> t{1, 2, 3};
  CHECK(mean(t) == 2);
  CHECK(median(t) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(relative_error_pct(8.371875, 8.371875) == 0.0);
  CHECK(relative_error_pct(1.5, 1.0) == doctest::Approx(50));
  CHECK(relative_error_pct(0.001, 0.0) == doctest::Approx(0.1));  // denominator floored at 1
  Quantiles q = quantiles({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(q.q0 == 0);
  CHECK(q.q50 == 5);
  CHECK(q.q100 == 10);
  CHECK(q.q10 == doctest::Approx(1));
}

TEST_CASE("suite parsing") {
  SuiteSpec s = parse_suite(R"({"methods": ["penalty", "pd"], "t_stop": 0.05,
      "instances": [{"id": "a", "n": 4, "m_lin": 2}, {"n": 3, "density": "sparse", "seed": 9}]})");
  CHECK(s.methods.size() == 2);
  CHECK(s.instances.size() == 2);
  CHECK(s.instances[1].id == "inst2");
  CHECK(s.instances[1].spec.seed == 9);
  CHECK(s.t_stop == 0.05);
  CHECK_THROWS_AS(parse_suite(R"({"instances": []})"), Error);
  CHECK_THROWS_AS(parse_suite("{"), Error);
  CHECK_THROWS_AS(parse_suite(R"({"instances": [{"n": 3, "density": "medium"}]})"), Error);
  CHECK_THROWS_AS(parse_suite(R"({"methods": ["newton"], "instances": [{"n": 3}]})"), Error);

  SuiteSpec d = default_suite();
  CHECK(d.instances.size() == 20);
  for (const auto& inst : d.instances) {
    CHECK(inst.spec.n >= 10);
    CHECK(inst.spec.n <= 100);
    CHECK(inst.spec.m_lin + inst.spec.m_quad + inst.spec.p_eq <= 12);
  }
}

TEST_CASE("bench: 3 instances x 3 methods") {
  SuiteSpec s = parse_suite(R"({"methods": ["penalty", "primal-dual", "aug-lagrangian"],
      "instances": [{"n": 3, "m_lin": 1}, {"n": 4, "p_eq": 1}, {"n": 5, "m_lin": 2, "density": "sparse"}]})");
  BenchResult r = bench(s, 2);
  REQUIRE(r.records.size() == 9);
  CHECK(r.records[0].id == "inst1");
  CHECK(r.records[0].method == SolverMethod::Penalty);
  CHECK(r.records[8].id == "inst3");
  CHECK(r.records[8].method == SolverMethod::AugmentedLagrangian);
  for (const auto& rec : r.records) {
    CHECK(rec.error.empty());
    CHECK(rec.settled);
    CHECK(std::isfinite(rec.rel_error_pct));
  }
  CHECK(r.summary.per_method.size() == 3);
  CHECK(r.summary.overall.count == 9);

  // worker count does not change the records
  BenchResult serial = bench(s, 1);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(serial.records[i].id == r.records[i].id);
    CHECK(serial.records[i].f_settled == r.records[i].f_settled);
  }

  std::ostringstream csv;
  write_bench_csv(csv, r.records);
  std::string header;
  std::getline(std::istringstream(csv.str()) >> std::ws, header);
  CHECK(header ==
        "id,n,m,p,density,method,settling_time_s,wall_time_s,rel_error_pct,kkt_pass,settled,f_settled,f_star,error");

  auto j = nlohmann::json::parse(summary_json(r.summary));
  for (const char* key : {"mean_time_ms", "median_time_ms", "mean_rel_err_pct", "median_rel_err_pct",
                          "per_method"})
    CHECK(j.contains(key));
  CHECK(j["per_method"].contains("penalty"));
}

TEST_CASE("settled dynamics match the oracle") {
  // AL and PD on strictly convex QPs with M + P <= 12
  for (std::uint64_t seed = 300; seed < 306; ++seed) {
    GeneratorSpec g;
    g.seed = seed;
    g.n = 5 + static_cast<int>(seed % 20);
    g.m_lin = 2 + static_cast<int>(seed % 6);
    g.p_eq = static_cast<int>(seed % 4);
    Problem p = generate_problem(g).problem;
    GradientSet gs = differentiate(p);
    OracleSolution o = oracle_solve(p);
    for (auto m : {SolverMethod::AugmentedLagrangian, SolverMethod::PrimalDual}) {
      DynamicalSystem ds = compile(p, gs, m);
      SimConfig c = SimConfig::defaults_for(ds.gains());
      c.rel_tol = kSolveRelTol;
      c.t_stop *= 2;
      Trajectory tr = integrate(ds, initial_state(ds), c);
      auto v = tr.final_state().first(ds.n_primal());
      CAPTURE(seed);
      CHECK(max_abs_diff(v, o.x_star) <= 1e-4);
      CHECK(relative_error_pct(p.objective_value(v), o.f_star) / 100 <= 1e-5);
    }
  }
}

TEST_CASE("penalty leaves an equality residual, the others do not") {
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    GeneratorSpec g;
    g.seed = seed;
    g.n = 8;
    g.m_lin = 2;
    g.p_eq = 2;
    Problem p = generate_problem(g).problem;
    GradientSet gs = differentiate(p);
    for (auto m : {SolverMethod::Penalty, SolverMethod::PrimalDual, SolverMethod::AugmentedLagrangian}) {
      DynamicalSystem ds = compile(p, gs, m);
      SimConfig c = SimConfig::defaults_for(ds.gains());
      c.rel_tol = kSolveRelTol;
      c.t_stop *= 2;
      Trajectory tr = integrate(ds, initial_state(ds), c);
      double h = 0;
      for (double v : p.equality_values(tr.final_state().first(ds.n_primal()))) h = std::max(h, std::abs(v));
      CAPTURE(seed);
      CAPTURE(to_string(m));
      if (m == SolverMethod::Penalty) CHECK(h > 1e-7);
      else CHECK(h <= 1e-7);
    }
  }
}
