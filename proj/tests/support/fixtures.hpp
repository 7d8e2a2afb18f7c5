#pragma once

// Shared by the unit tests and the acceptance runner.

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kktsynth/frontends.hpp"
#include "kktsynth/problem.hpp"
#include "kktsynth/verify.hpp"

#ifndef KKTSYNTH_SOURCE_DIR
#error "KKTSYNTH_SOURCE_DIR must point at the repository root"
#endif

namespace kktsynth::testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(KKTSYNTH_SOURCE_DIR) / rel;
}

inline Problem load_problem(const std::string& rel) {
  return normalize(parse_file(source_path(rel)).problem);
}

inline Problem from_ampl(const std::string& text) {
  return normalize(parse_ampl_subset(text).problem);
}

inline Problem eq5() { return load_problem("problems/eq5.mod"); }

/**
 * The worked example solved by hand, without the active-set oracle: only the equality
 * 2x1 + x2 = 2 is active, so substitute x2 = 2 - 2x1 and minimize the
 * resulting parabola. The coefficients are recovered from three samples of
 * the parsed objective; mu follows from the first stationarity row
 * df/dx1 + 2 mu = 0.
 */
struct Eq5Analytic {
  double x1, x2, f, mu;
};

inline Eq5Analytic eq5_analytic() {
  const Problem p = eq5();
  auto phi = [&](double t) {
    std::array<double, 2> x{t, 2.0 - 2.0 * t};
    return p.objective_value(x);
  };
  const double f0 = phi(0.0), f1 = phi(1.0), f2 = phi(2.0);
  const double a = (f2 - 2.0 * f1 + f0) / 2.0;  // phi = a t^2 + b t + c
  const double b = f1 - f0 - a;
  Eq5Analytic r{};
  r.x1 = -b / (2.0 * a);
  r.x2 = 2.0 - 2.0 * r.x1;
  r.f = phi(r.x1);
  // df/dx1 of 4x1^2 + 2x1x2 + 5x2^2 + 1.5x1 - 2x2 + 4
  const double dfdx1 = 8.0 * r.x1 + 2.0 * r.x2 + 1.5;
  r.mu = -dfdx1 / 2.0;
  return r;
}

/// Penalty equilibrium on the worked example with the inequalities inactive:
/// (H + kp a a') v = -c + 2 kp a, a = (2, 1), H = [[8, 2], [2, 10]], c = (1.5, -2).
inline std::array<double, 2> eq5_penalty_point(double kp) {
  const double h11 = 8 + kp * 4, h12 = 2 + kp * 2, h22 = 10 + kp * 1;
  const double r1 = -1.5 + 2 * kp * 2, r2 = 2.0 + 2 * kp * 1;
  const double det = h11 * h22 - h12 * h12;
  return {(h22 * r1 - h12 * r2) / det, (h11 * r2 - h12 * r1) / det};
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct NamedProblem {
  std::string name;
  Problem problem;
};

// Small instances for netlist/ODE agreement: N <= 5, M + P <= 6.
inline std::vector<NamedProblem> small_suite() {
  std::vector<NamedProblem> out;
  out.push_back({"eq5", eq5()});
  auto ampl = [&](const std::string& name, const std::string& text) {
    out.push_back({name, normalize(parse_ampl_subset(text).problem)});
  };
  ampl("unconstrained_1d", "var x; minimize f: 0.5*x^2;");
  ampl("box_1d", "var x >= 0 <= 1; minimize f: (x - 2)^2;");
  ampl("bilinear",
       "var x; var y; minimize f: x^2 + y^2 + x*y - x;\n"
       "subject to c1: x*y + 1 >= 0;\nsubject to c2: x + y = 1;");
  ampl("trig_objective",
       "var a; var b; minimize f: a^2 + b^2 + 0.3*sin(a) + 0.2*cos(b) + 0.1*exp(a);\n"
       "subject to r: 2 - a^2 - b^2 >= 0;\nsubject to e: a - b - 0.5 = 0;");
  ampl("log_objective",
       "var u >= -0.25; minimize f: u^2 + u - 0.5*log(1 + u^2);");
  ampl("three_vars",
       "var x1; var x2; var x3;\n"
       "minimize f: x1^2 + 2*x2^2 + 3*x3^2 - x1*x3 + x2 - 4;\n"
       "subject to a: x1 + x2 + x3 - 1 >= 0;\n"
       "subject to b: 4 - x1^2 - x3^2 >= 0;\n"
       "subject to c: x1 - 0.5*x2 = 0.25;");
  for (int s = 0; s < 6; ++s) {
    GeneratorSpec g;
    g.seed = 77 + static_cast<std::uint64_t>(s);
    g.n = 2 + s % 4;
    g.m_lin = 1 + s % 3;
    g.m_quad = s % 2;
    g.p_eq = s % 3 == 0 ? 1 : 0;
    g.density = s % 2 ? Density::Sparse : Density::Dense;
    out.push_back({"gen" + std::to_string(s), generate_problem(g).problem});
  }
  return out;
}

}  // namespace kktsynth::testing
