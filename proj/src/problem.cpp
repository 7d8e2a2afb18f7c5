#include "kktsynth/problem.hpp"

#include <algorithm>
#include <cmath>

#include "kktsynth/errors.hpp"

namespace kktsynth {

std::string Problem::var_name(int k) const {
  if (k >= 0 && static_cast<std::size_t>(k) < var_names.size() && !var_names[k].empty()) {
    return var_names[k];
  }
  return "x" + std::to_string(k + 1);
}

double Problem::objective_value(std::span<const double> x) const {
  return objective ? eval(objective, x) : 0.0;
}

std::vector<double> Problem::inequality_values(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(inequalities.size());
  for (const Expr& g : inequalities) out.push_back(eval(g, x));
  return out;
}

std::vector<double> Problem::equality_values(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(equalities.size());
  for (const Expr& h : equalities) out.push_back(eval(h, x));
  return out;
}

namespace {

void check_indices(const Expr& e, int n, const std::string& what) {
  const int m = max_variable(e);
  if (m >= n) {
    throw LengthMismatch(what + " references variable index " + std::to_string(m) +
                         " but the problem has " + std::to_string(n) + " variables");
  }
}

void check_constraint_degree(const Expr& e, const std::string& what) {
  const auto d = degree(e);
  if (!d) {
    throw DegreeError(what + " is not polynomial; constraints must be linear or quadratic");
  }
  if (*d > 2) {
    throw DegreeError(what + " has degree " + std::to_string(*d) +
                      "; constraints must be linear or quadratic");
  }
}

std::string row_label(const std::vector<std::string>& names, std::size_t i, const char* kind) {
  if (i < names.size() && !names[i].empty()) return std::string(kind) + " '" + names[i] + "'";
  return std::string(kind) + " #" + std::to_string(i + 1);
}

}  // namespace

Problem normalize(Problem raw) {
  if (raw.n_vars < 0) throw LengthMismatch("negative variable count");
  if (!raw.objective) raw.objective = Expr::constant(0.0);
  if (raw.var_names.size() < static_cast<std::size_t>(raw.n_vars)) {
    for (int k = static_cast<int>(raw.var_names.size()); k < raw.n_vars; ++k) {
      raw.var_names.push_back("x" + std::to_string(k + 1));
    }
  }
  raw.ineq_names.resize(raw.inequalities.size());
  raw.eq_names.resize(raw.equalities.size());

  check_indices(raw.objective, raw.n_vars, "objective");
  for (std::size_t i = 0; i < raw.inequalities.size(); ++i) {
    const std::string what = row_label(raw.ineq_names, i, "inequality");
    check_indices(raw.inequalities[i], raw.n_vars, what);
    check_constraint_degree(raw.inequalities[i], what);
  }
  for (std::size_t j = 0; j < raw.equalities.size(); ++j) {
    const std::string what = row_label(raw.eq_names, j, "equality");
    check_indices(raw.equalities[j], raw.n_vars, what);
    check_constraint_degree(raw.equalities[j], what);
  }

  if (raw.bounds_materialized || !raw.source_bounds) {
    raw.bounds_materialized = true;
    return raw;
  }

  const auto& bounds = *raw.source_bounds;
  if (bounds.size() != static_cast<std::size_t>(raw.n_vars)) {
    throw LengthMismatch("bounds vector length does not match variable count");
  }
  for (int k = 0; k < raw.n_vars; ++k) {
    const auto& b = bounds[k];
    if (std::isnan(b.lower) || std::isnan(b.upper) || b.lower > b.upper ||
        b.lower == kInf || b.upper == -kInf) {
      throw BoundsContradiction("variable '" + raw.var_name(k) + "' has lower bound " +
                                format_number(b.lower) + " above upper bound " +
                                format_number(b.upper));
    }
  }
  for (int k = 0; k < raw.n_vars; ++k) {
    if (std::isfinite(bounds[k].lower)) {
      raw.inequalities.push_back(
          add({Expr::variable(k), Expr::constant(-bounds[k].lower)}));
      raw.ineq_names.push_back(raw.var_name(k) + "_lo");
    }
  }
  for (int k = 0; k < raw.n_vars; ++k) {
    if (std::isfinite(bounds[k].upper)) {
      raw.inequalities.push_back(
          add({Expr::constant(bounds[k].upper), negate(Expr::variable(k))}));
      raw.ineq_names.push_back(raw.var_name(k) + "_up");
    }
  }
  raw.bounds_materialized = true;
  return raw;
}

namespace {

SparseGradient sparse_gradient(const Expr& e) {
  SparseGradient out;
  auto g = gradient(e);
  out.index.reserve(g.size());
  out.entry.reserve(g.size());
  for (auto& [k, d] : g) {
    out.index.push_back(k);
    out.entry.push_back(std::move(d));
  }
  return out;
}

Expr lookup(const SparseGradient& row, int k) {
  auto it = std::lower_bound(row.index.begin(), row.index.end(), k);
  if (it == row.index.end() || *it != k) return Expr::constant(0.0);
  return row.entry[static_cast<std::size_t>(it - row.index.begin())];
}

}  // namespace

Expr GradientSet::g_entry(int i, int k) const { return lookup(grad_g.at(i), k); }
Expr GradientSet::h_entry(int j, int k) const { return lookup(grad_h.at(j), k); }

GradientSet differentiate(const Problem& p) {
  GradientSet gs;
  const Expr zero = Expr::constant(0.0);
  gs.grad_f.assign(static_cast<std::size_t>(p.n_vars), zero);
  if (p.objective) {
    for (auto& [k, d] : gradient(p.objective)) {
      gs.f_sparsity.push_back(k);
      gs.grad_f[static_cast<std::size_t>(k)] = std::move(d);
    }
  }
  gs.grad_g.reserve(p.inequalities.size());
  for (const Expr& g : p.inequalities) gs.grad_g.push_back(sparse_gradient(g));
  gs.grad_h.reserve(p.equalities.size());
  for (const Expr& h : p.equalities) gs.grad_h.push_back(sparse_gradient(h));
  return gs;
}

std::vector<double> lagrangian_gradient(const Problem& p, const GradientSet& gs,
                                        std::span<const double> v,
                                        std::span<const double> lambda,
                                        std::span<const double> mu) {
  if (v.size() != static_cast<std::size_t>(p.n_vars) || lambda.size() != gs.grad_g.size() ||
      mu.size() != gs.grad_h.size()) {
    throw LengthMismatch("lagrangian_gradient: argument lengths do not match the problem");
  }
  std::vector<double> out(v.size(), 0.0);
  for (int k : gs.f_sparsity) out[k] = eval(gs.grad_f[k], v);
  auto accumulate = [&](const SparseGradient& row, double weight) {
    if (weight == 0.0) return;
    for (std::size_t t = 0; t < row.nnz(); ++t) {
      out[row.index[t]] += weight * eval(row.entry[t], v);
    }
  };
  for (std::size_t i = 0; i < lambda.size(); ++i) accumulate(gs.grad_g[i], lambda[i]);
  for (std::size_t j = 0; j < mu.size(); ++j) accumulate(gs.grad_h[j], mu[j]);
  return out;
}

}  // namespace kktsynth
