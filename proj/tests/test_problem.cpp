#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "kktsynth/errors.hpp"
#include "kktsynth/expr.hpp"
#include "kktsynth/problem.hpp"

using namespace kktsynth;

namespace {

Expr x(int k) { return Expr::variable(k); }
Expr c(double v) { return Expr::constant(v); }

Problem one_var(Expr f, VariableBounds b) {
  Problem p;
  p.n_vars = 1;
  p.objective = std::move(f);
  p.source_bounds = std::vector<VariableBounds>{b};
  return p;
}

// Random smooth expression; log only ever sees 1 + u^2 and exp a bounded argument.
Expr random_expr(std::mt19937_64& rng, int n, int depth) {
  std::uniform_int_distribution<int> var(0, n - 1);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  if (depth == 0) {
    return std::bernoulli_distribution(0.75)(rng) ? x(var(rng)) : c(coef(rng));
  }
  switch (std::uniform_int_distribution<int>(0, 6)(rng)) {
    case 0:
    case 1: {
      std::vector<Expr> t;
      for (int i = 0, k = 2 + static_cast<int>(rng() % 3); i < k; ++i)
        t.push_back(mul({c(coef(rng)), random_expr(rng, n, depth - 1)}));
      return add(std::move(t));
    }
    case 2:
      return mul({random_expr(rng, n, depth - 1), random_expr(rng, n, depth - 1)});
    case 3:
      return power(random_expr(rng, n, depth - 1), 2 + static_cast<int>(rng() % 2));
    case 4:
      return apply(rng() % 2 ? FuncKind::Sin : FuncKind::Cos, random_expr(rng, n, depth - 1));
    case 5:
      return apply(FuncKind::Exp, apply(FuncKind::Sin, random_expr(rng, n, depth - 1)));
    default:
      return apply(FuncKind::Log, add({c(1.0), power(random_expr(rng, n, depth - 1), 2)}));
  }
}

}  // namespace

TEST_CASE("expression builders fold constants and identities") {
  CHECK(add({c(1), c(2)}).is_const(3));
  CHECK(mul({c(1), x(0)}).kind() == ExprKind::Var);
  CHECK(mul({c(0), x(0)}).is_const(0));
  CHECK(add({x(0), c(0)}).kind() == ExprKind::Var);
  CHECK(power(c(3), 2).is_const(9));
  CHECK(apply(FuncKind::Exp, c(0)).is_const(1));
  // nested sums flatten
  Expr s = add({x(0), add({x(1), x(2)})});
  CHECK(s.kind() == ExprKind::Sum);
  CHECK(s.children().size() == 3);
  CHECK(structurally_equal(fold(s), s));
}

TEST_CASE("raw factories enforce the tree invariants") {
  CHECK_THROWS(Expr::variable(-1));
  CHECK_THROWS(Expr::pow(x(0), 1));
  CHECK_THROWS(Expr::sum({}));
  CHECK_THROWS(Expr::prod({}));
  CHECK_THROWS_AS(func_from_name("tanh"), UnsupportedExpression);
  CHECK(func_from_name("log") == FuncKind::Log);
}

TEST_CASE("degree and affine split") {
  CHECK(degree(add({x(0), c(1)})) == 1);
  CHECK(degree(mul({x(0), x(1)})) == 2);
  CHECK(degree(power(add({x(0), x(1)}), 3)) == 3);
  CHECK_FALSE(degree(apply(FuncKind::Sin, x(0))).has_value());
  CHECK(degree(apply(FuncKind::Sin, c(1))) == 0);

  AffineSplit a = split_affine(add({mul({c(3), x(2)}), x(0), c(5), mul({c(-1), x(2)}),
                                    power(x(1), 2)}));
  CHECK(a.constant == 5);
  CHECK(a.index == std::vector<int>{0, 2});
  CHECK(a.coef == std::vector<double>{1, 2});
  CHECK(a.nonlinear.size() == 1);
}

TEST_CASE("format_number round-trips") {
  for (double v : {0.1, 1e4, -2.5, 1.0 / 3.0, 6.02e23, 5e-324}) {
    CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
  }
  CHECK(format_number(4) == "4");
}

TEST_CASE("normalize materializes bounds") {
  SUBCASE("0 <= x <= 1 gives two rows") {
    Problem p = normalize(one_var(power(x(0), 2), {0.0, 1.0}));
    REQUIRE(p.m() == 2);
    std::vector<double> pt{0.3};
    CHECK(eval(p.inequalities[0], pt) == doctest::Approx(0.3));
    CHECK(eval(p.inequalities[1], pt) == doctest::Approx(0.7));
    CHECK(p.bounds_materialized);
  }
  SUBCASE("no finite bounds, no rows") {
    Problem p = normalize(one_var(power(x(0), 2), {}));
    CHECK(p.m() == 0);
  }
  SUBCASE("contradiction") {
    CHECK_THROWS_AS(normalize(one_var(x(0), {2.0, 1.0})), BoundsContradiction);
  }
  SUBCASE("worked example: with the sign constraints given as bounds") {
    Problem raw = parse_ampl_subset(
                      "var x1 >= 0; var x2 >= 0;\n"
                      "minimize f: 0.5*(8*x1^2 + 4*x1*x2 + 10*x2^2) + 1.5*x1 - 2*x2 + 4;\n"
                      "subject to g1: x1 - 2*x2 + 6 >= 0;\n"
                      "subject to g2: 1 - x1^2 - x2^2 >= 0;\n"
                      "subject to h1: 2*x1 + x2 - 2 = 0;")
                      .problem;
    Problem p = normalize(raw);
    CHECK(p.m() == 4);
    CHECK(p.p() == 1);
    // original rows first, then bound rows
    std::vector<double> pt{0.25, 0.5};
    CHECK(eval(p.inequalities[0], pt) == doctest::Approx(0.25 - 1.0 + 6.0));
    CHECK(eval(p.inequalities[2], pt) == 0.25);
    CHECK(eval(p.inequalities[3], pt) == 0.5);
  }
  SUBCASE("lower bounds precede upper bounds") {
    Problem raw;
    raw.n_vars = 2;
    raw.objective = c(0);
    raw.source_bounds = std::vector<VariableBounds>{{-1, 1}, {-2, 2}};
    Problem p = normalize(raw);
    REQUIRE(p.m() == 4);
    std::vector<double> z{0, 0};
    CHECK(eval(p.inequalities[0], z) == 1);
    CHECK(eval(p.inequalities[1], z) == 2);
    CHECK(eval(p.inequalities[2], z) == 1);
    CHECK(eval(p.inequalities[3], z) == 2);
  }
  SUBCASE("cubic constraint is rejected") {
    Problem raw = one_var(x(0), {});
    raw.inequalities.push_back(power(x(0), 3));
    CHECK_THROWS_AS(normalize(raw), DegreeError);
  }
}

TEST_CASE("normalization conserves the feasible set") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4;
    Problem raw;
    raw.n_vars = n;
    raw.objective = c(0);
    std::vector<VariableBounds> b(n);
    for (auto& bk : b) {
      if (rng() % 3) bk.lower = u(rng) - 1;
      if (rng() % 3) bk.upper = std::max(bk.lower, 0.0) + std::abs(u(rng));
    }
    raw.source_bounds = b;
    Problem p = normalize(raw);
    CHECK(p.n_vars == n);
    for (int s = 0; s < 40; ++s) {
      std::vector<double> pt(n);
      for (double& v : pt) v = u(rng);
      bool in_box = true;
      for (int k = 0; k < n; ++k) in_box = in_box && pt[k] >= b[k].lower && pt[k] <= b[k].upper;
      bool rows_ok = true;
      for (double g : p.inequality_values(pt)) rows_ok = rows_ok && g >= 0;
      CHECK(in_box == rows_ok);
    }
  }
}

TEST_CASE("differentiate the worked example") {
  Problem p = testing::eq5();
  GradientSet gs = differentiate(p);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int s = 0; s < 10; ++s) {
    std::vector<double> v{u(rng), u(rng)};
    CHECK(eval(gs.grad_f[0], v) == doctest::Approx(8 * v[0] + 2 * v[1] + 1.5));
    CHECK(eval(gs.grad_f[1], v) == doctest::Approx(2 * v[0] + 10 * v[1] - 2));
    CHECK(eval(gs.g_entry(1, 0), v) == doctest::Approx(-2 * v[0]));
    CHECK(eval(gs.g_entry(1, 1), v) == doctest::Approx(-2 * v[1]));
  }
  // linear rows fold to constants
  CHECK(gs.g_entry(0, 0).is_const(1));
  CHECK(gs.g_entry(0, 1).is_const(-2));
  CHECK(gs.h_entry(0, 0).is_const(2));
  CHECK(gs.h_entry(0, 1).is_const(1));
  CHECK(gs.g_sparsity(2) == std::vector<int>{0});
}

TEST_CASE("gradient of a constant objective is all zeros") {
  Problem p;
  p.n_vars = 3;
  p.objective = c(7);
  GradientSet gs = differentiate(p);
  REQUIRE(gs.grad_f.size() == 3);
  for (const Expr& e : gs.grad_f) CHECK(e.is_const(0));
  CHECK(gs.f_sparsity.empty());
}

TEST_CASE("eval examples and errors") {
  Problem p = testing::eq5();
  std::vector<double> z{0, 0};
  CHECK(p.objective_value(z) == 4);
  CHECK(p.equality_values(z)[0] == -2);
  std::vector<double> pt{3, 4};
  CHECK(eval(mul({x(0), x(1)}), pt) == 12);
  std::vector<double> neg{-1};
  CHECK_THROWS_AS(eval(apply(FuncKind::Log, x(0)), neg), DomainError);
  std::vector<double> big{1000};
  CHECK_THROWS_AS(eval(apply(FuncKind::Exp, x(0)), big), NonFinite);
  std::vector<double> short_pt{1};
  CHECK_THROWS_AS(eval(x(1), short_pt), LengthMismatch);
}

TEST_CASE("eval is bit-identical on repeat") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    Expr e = random_expr(rng, 3, 4);
    std::vector<double> pt{0.3, -0.7, 1.1};
    double a = eval(e, pt), b = eval(e, pt);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("lagrangian gradient") {
  Problem p = testing::eq5();
  GradientSet gs = differentiate(p);
  std::vector<double> lam(4, 0.0), mu{0.0};
  std::vector<double> z{0, 0};
  auto g0 = lagrangian_gradient(p, gs, z, lam, mu);
  CHECK(g0[0] == 1.5);
  CHECK(g0[1] == -2);

  auto an = testing::eq5_analytic();
  CHECK(an.x1 == doctest::Approx(0.7625).epsilon(1e-12));
  CHECK(an.x2 == doctest::Approx(0.475).epsilon(1e-12));
  CHECK(an.f == doctest::Approx(8.371875).epsilon(1e-12));
  CHECK(an.mu == doctest::Approx(-4.275).epsilon(1e-12));
  std::vector<double> v{0.7625, 0.475}, mu_star{-4.275};
  auto g = lagrangian_gradient(p, gs, v, lam, mu_star);
  CHECK(std::abs(g[0]) <= 1e-12);
  CHECK(std::abs(g[1]) <= 1e-12);

  // with zero multipliers it is just grad f
  std::vector<double> w{0.1, -0.4};
  auto gl = lagrangian_gradient(p, gs, w, lam, mu);
  CHECK(gl[0] == eval(gs.grad_f[0], w));
  CHECK(gl[1] == eval(gs.grad_f[1], w));
  CHECK_THROWS_AS(lagrangian_gradient(p, gs, w, std::vector<double>(3), mu), LengthMismatch);
}

TEST_CASE("symbolic partials match central differences (100 cases)") {
  std::mt19937_64 rng(20240607);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 4;
    Expr f = random_expr(rng, n, 3);
    std::vector<double> pt(n);
    for (double& v : pt) v = u(rng);
    for (int k = 0; k < n; ++k) {
      const double sym = eval(differentiate(f, k), pt);
      const double h = 1e-6 * std::max(1.0, std::abs(pt[k]));
      auto at = [&](double d) {
        std::vector<double> q = pt;
        q[k] += d;
        return eval(f, q);
      };
      const double fd = (at(h) - at(-h)) / (2 * h);
      CHECK_MESSAGE(std::abs(fd - sym) <= 1e-6 * std::max(1.0, std::abs(sym)),
                    to_infix(f, [](int i) { return "x" + std::to_string(i + 1); }), " d/dx",
                    k + 1);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("sparsity is sound") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed;
    spec.n = 30;
    spec.m_lin = 3;
    spec.m_quad = 2;
    spec.p_eq = 2;
    spec.density = Density::Sparse;
    Problem p = generate_problem(spec).problem;
    GradientSet gs = differentiate(p);
    std::vector<double> pt(30);
    for (double& v : pt) v = u(rng);
    for (int i = 0; i < p.m(); ++i) {
      const auto& sp = gs.g_sparsity(i);
      CHECK(sp == variables(p.inequalities[i]));
      const double base = eval(p.inequalities[i], pt);
      for (int k = 0; k < 30; ++k) {
        std::vector<double> q = pt;
        q[k] += 0.5;
        if (eval(p.inequalities[i], q) != base)
          CHECK(std::binary_search(sp.begin(), sp.end(), k));
      }
    }
  }
}
