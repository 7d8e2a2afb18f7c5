#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kktsynth/expr.hpp"

namespace kktsynth {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct VariableBounds {
  double lower = -kInf;
  double upper = kInf;
};

/**
 * minimize f(x) subject to g_i(x) >= 0 (i < M), h_j(x) = 0 (j < P).
 *
 * A parsed problem carries its variable bounds in `source_bounds`;
 * `normalize` turns finite bounds into inequality rows and sets
 * `bounds_materialized`. The bounds stay attached for reporting.
 */
struct Problem {
  int n_vars = 0;
  Expr objective;
  std::vector<Expr> inequalities;
  std::vector<Expr> equalities;
  std::vector<std::string> var_names;
  std::vector<std::string> ineq_names;
  std::vector<std::string> eq_names;
  std::optional<std::vector<VariableBounds>> source_bounds;
  bool bounds_materialized = false;

  int m() const { return static_cast<int>(inequalities.size()); }
  int p() const { return static_cast<int>(equalities.size()); }

  /// Name of variable k (generated as x<k+1> when absent).
  std::string var_name(int k) const;

  double objective_value(std::span<const double> x) const;
  std::vector<double> inequality_values(std::span<const double> x) const;
  std::vector<double> equality_values(std::span<const double> x) const;
};

/// Appends finite bounds as rows x_k - lo >= 0 (all lower bounds in variable
/// order) then up - x_k >= 0. Rejects constraints of degree > 2.
/// Throws BoundsContradiction, DegreeError, UnsupportedExpression.
Problem normalize(Problem raw);

/// Sparse gradient of one constraint row; `index` is sorted and lists exactly
/// the variables that appear in the row.
struct SparseGradient {
  std::vector<int> index;
  std::vector<Expr> entry;

  std::size_t nnz() const { return index.size(); }
};

struct GradientSet {
  std::vector<Expr> grad_f;         // N entries, constant 0 where f ignores x_k
  std::vector<int> f_sparsity;      // variables that appear in f
  std::vector<SparseGradient> grad_g;
  std::vector<SparseGradient> grad_h;

  /// Entry (i, k) of the inequality Jacobian (constant 0 if structurally zero).
  Expr g_entry(int i, int k) const;
  Expr h_entry(int j, int k) const;
  const std::vector<int>& g_sparsity(int i) const { return grad_g[i].index; }
  const std::vector<int>& h_sparsity(int j) const { return grad_h[j].index; }
};

/// Exact symbolic gradients of f, g and h with constant folding.
GradientSet differentiate(const Problem& p);

/// grad f(v) + sum_i lambda_i grad g_i(v) + sum_j mu_j grad h_j(v).
std::vector<double> lagrangian_gradient(const Problem& p, const GradientSet& gs,
                                        std::span<const double> v,
                                        std::span<const double> lambda,
                                        std::span<const double> mu);

}  // namespace kktsynth
