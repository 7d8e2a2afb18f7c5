#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kktsynth/method.hpp"
#include "kktsynth/problem.hpp"
#include "kktsynth/simulator.hpp"

namespace kktsynth {

// --- KKT certification -----------------------------------------------------

/// Residuals of the first-order conditions, all infinity norms.
struct KktReport {
  double stationarity = 0.0;  // ||grad_x L||
  double primal_ineq = 0.0;   // max(0, -min g)
  double primal_eq = 0.0;     // ||h||
  double dual_feas = 0.0;     // max(0, max lambda)
  double comp_slack = 0.0;    // max |lambda_i g_i|
  double tolerance = 1e-6;
  bool pass = false;

  double worst() const;
};

KktReport kkt_residuals(const Problem& p, const GradientSet& gs, std::span<const double> v,
                        std::span<const double> lambda, std::span<const double> mu,
                        double tolerance = 1e-6);

// --- exact small-instance oracle -------------------------------------------

struct OracleSolution {
  std::vector<double> x_star;
  std::vector<double> lambda_star;
  std::vector<double> mu_star;
  double f_star = 0.0;
  std::vector<int> active_set;  // inequality i -> i, equality j -> M + j
};

inline constexpr int kOracleMaxRows = 20;
inline constexpr int kOracleMaxRowsQuadratic = 15;

/**
 * Active-set enumeration on a normalized QP. Every subset of inequalities
 * (with all equalities) is solved as an equality-constrained problem; the
 * feasible candidate with correctly signed multipliers and least objective
 * wins. Linear constraints with a positive definite Hessian use one Cholesky
 * factorization shared by all subsets; otherwise each subset's KKT system is
 * solved by Newton's method from several starts.
 * Throws NotQp, TooLarge, Infeasible.
 */
OracleSolution oracle_solve(const Problem& p);

// --- random instances -------------------------------------------------------

enum class Density { Sparse, Dense };
std::string_view to_string(Density d);
std::optional<Density> density_from_name(std::string_view s);

struct GeneratorSpec {
  std::uint64_t seed = 1;
  int n = 10;
  int m_lin = 0;
  int m_quad = 0;
  int p_eq = 0;
  Density density = Density::Dense;
};

struct GeneratedProblem {
  Problem problem;
  std::vector<double> x0;  // strictly feasible: g(x0) >= 0.1, h(x0) = 0
};

inline constexpr double kGeneratorMargin = 0.1;

/// Strictly convex objective 1/2 x'(A'A + I)x + b'x; linear rows, ball
/// constraints and equalities all feasible at a random interior point x0.
/// Deterministic in `spec`.
GeneratedProblem generate_problem(const GeneratorSpec& spec);

// --- benchmark harness ------------------------------------------------------

struct BenchInstance {
  std::string id;
  GeneratorSpec spec;
};

struct SuiteSpec {
  std::vector<BenchInstance> instances;
  std::vector<SolverMethod> methods{SolverMethod::AugmentedLagrangian,
                                    SolverMethod::PrimalDual};
  CircuitGains gains;
  double t_stop = 0.0;  // <= 0: 20/gamma
  double rel_tol = kSolveRelTol;
  int horizon_extensions = 4;  // each doubles t_stop while the run has not settled
  double gate_mean_rel_err_pct = 0.1;
};

/// JSON suite; throws Error on malformed input or an empty instance list.
SuiteSpec parse_suite(std::string_view json_text);
/// 20 seeded strictly convex QPs with N in [10, 100] and M + P <= 12.
SuiteSpec default_suite();

struct BenchRecord {
  std::string id;
  int n = 0, m = 0, p = 0;
  Density density = Density::Dense;
  SolverMethod method = SolverMethod::AugmentedLagrangian;
  double settling_time_s = 0.0;
  double wall_time_s = 0.0;
  double rel_error_pct = 0.0;  // NaN when no oracle value is available
  bool kkt_pass = false;
  // extra columns after the fixed ones
  bool settled = false;
  double f_settled = 0.0;
  double f_star = 0.0;
  std::string error;  // non-empty when the instance failed
};

struct Quantiles {
  double q0 = 0, q10 = 0, q25 = 0, q50 = 0, q75 = 0, q90 = 0, q100 = 0;
};

struct MethodSummary {
  std::size_t count = 0;
  double mean_time_ms = 0, median_time_ms = 0;
  double mean_rel_err_pct = 0, median_rel_err_pct = 0;
  std::size_t settled = 0, kkt_pass = 0;
};

struct BenchSummary {
  MethodSummary overall;
  std::map<std::string, MethodSummary> per_method;
  Quantiles time_ms;
  Quantiles rel_err_pct;
  std::size_t failed = 0;
  bool gate_pass = false;
};

struct BenchResult {
  std::vector<BenchRecord> records;  // ordered by instance then method
  BenchSummary summary;
};

/// rel_error in percent: |f - f*| / max(1, |f*|) * 100.
double relative_error_pct(double f, double f_star);

double mean(std::span<const double> xs);
double median(std::vector<double> xs);
Quantiles quantiles(std::vector<double> xs);

/// Worker count from KKTSYNTH_THREADS, else the hardware concurrency.
unsigned bench_threads();

BenchResult bench(const SuiteSpec& suite, unsigned threads = 0);
BenchSummary summarize(const std::vector<BenchRecord>& records, double gate_mean_rel_err_pct);

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);
std::string summary_json(const BenchSummary& s);

}  // namespace kktsynth
