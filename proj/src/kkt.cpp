#include <algorithm>
#include <cmath>
#include <string>

#include "kktsynth/errors.hpp"
#include "kktsynth/verify.hpp"

namespace kktsynth {

double KktReport::worst() const {
  return std::max({stationarity, primal_ineq, primal_eq, dual_feas, comp_slack});
}

KktReport kkt_residuals(const Problem& p, const GradientSet& gs, std::span<const double> v,
                        std::span<const double> lambda, std::span<const double> mu,
                        double tolerance) {
  if (v.size() != static_cast<std::size_t>(p.n_vars) ||
      lambda.size() != p.inequalities.size() || mu.size() != p.equalities.size())
    throw LengthMismatch("kkt_residuals: expected lengths " + std::to_string(p.n_vars) + ", " +
                         std::to_string(p.m()) + ", " + std::to_string(p.p()));
  KktReport r;
  r.tolerance = tolerance;
  for (double x : lagrangian_gradient(p, gs, v, lambda, mu))
    r.stationarity = std::max(r.stationarity, std::abs(x));
  std::vector<double> g = p.inequality_values(v);
  for (std::size_t i = 0; i < g.size(); ++i) {
    r.primal_ineq = std::max(r.primal_ineq, -g[i]);
    r.dual_feas = std::max(r.dual_feas, lambda[i]);
    r.comp_slack = std::max(r.comp_slack, std::abs(lambda[i] * g[i]));
  }
  for (double h : p.equality_values(v)) r.primal_eq = std::max(r.primal_eq, std::abs(h));
  r.pass = r.stationarity <= tolerance && r.primal_ineq <= tolerance &&
           r.primal_eq <= tolerance && r.dual_feas <= tolerance && r.comp_slack <= tolerance;
  return r;
}

double relative_error_pct(double f, double f_star) {
  return std::abs(f - f_star) / std::max(1.0, std::abs(f_star)) * 100.0;
}

}  // namespace kktsynth
