#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kktsynth/problem.hpp"

namespace kktsynth {

enum class SolverMethod { Penalty, PrimalDual, AugmentedLagrangian };

/// "penalty", "primal-dual", "aug-lagrangian".
std::string_view to_string(SolverMethod m);
std::optional<SolverMethod> method_from_name(std::string_view name);

/**
 * Component values of the solver circuit and the loop gains they set.
 *
 * gamma = 1/(R_gamma C_gamma) scales the primal gradient flow, kappa_p =
 * R_rho/R_o is the proportional dual gain and kappa_I = 1/(R_o C_rho) the
 * integral dual gain. Defaults give gamma = 1e3/s, kappa_p = 10 and
 * kappa_I = 1e4/s.
 */
struct CircuitGains {
  double r_gamma = 10e3;
  double c_gamma = 100e-9;
  double r_rho = 100e3;
  double c_rho = 10e-9;
  double r_o = 10e3;
  double r_lim = 10e3;

  double gamma() const { return 1.0 / (r_gamma * c_gamma); }
  double kappa_p() const { return r_rho / r_o; }
  double kappa_i() const { return 1.0 / (r_o * c_rho); }

  /// Throws GainError unless every value and derived gain is finite and > 0.
  void validate() const;
};

struct DualValues {
  std::vector<double> lambda;  // one per inequality, always <= 0
  std::vector<double> mu;      // one per equality
};

/// constant + sum(coef * x[index]) + sum(nonlinear terms).
class CompiledFunction {
 public:
  CompiledFunction() = default;
  explicit CompiledFunction(const Expr& e);

  double operator()(std::span<const double> x) const;
  bool is_constant() const { return index_.empty() && nonlinear_.empty(); }
  double constant() const { return constant_; }

 private:
  double constant_ = 0.0;
  std::vector<int> index_;
  std::vector<double> coef_;
  std::vector<Expr> nonlinear_;
};

/**
 * The ideal continuous-time solver circuit as an ODE.
 *
 * State layout is [v | z | w]: N primal node voltages, then one integrator
 * state per inequality and per equality (absent for Penalty).
 *
 *   dv/dt = -gamma (grad f(v) + sum lambda_i grad g_i(v) + sum mu_j grad h_j(v))
 *   Penalty:    lambda = min(0, kp g(v)),      mu = kp h(v)
 *   PrimalDual: dz/dt = kI g(v), lambda = min(0, z);  dw/dt = kI h(v), mu = w
 *   AugLag:     dz/dt = kI g(v), lambda = min(0, kp g(v) + z)
 *               dw/dt = kI h(v), mu = kp h(v) + w
 *
 * With anti-windup, z is held at <= 0: its derivative is zeroed while z >= 0
 * and g > 0, and `project` clips z to 0 after each accepted step.
 *
 * Immutable once compiled; copies share the compiled data and all methods are
 * safe to call concurrently.
 */
class DynamicalSystem {
 public:
  std::size_t n_primal() const;
  std::size_t n_ineq_states() const;
  std::size_t n_eq_states() const;
  std::size_t state_size() const;
  std::size_t n_ineq() const;
  std::size_t n_eq() const;

  const CircuitGains& gains() const;
  SolverMethod method() const;
  bool anti_windup() const;

  void rhs(std::span<const double> state, std::span<double> dstate) const;
  std::vector<double> rhs(std::span<const double> state) const;

  DualValues duals(std::span<const double> state) const;

  /// Anti-windup clip applied after an accepted integration step.
  void project(std::span<double> state) const;

  std::vector<double> constraint_values_g(std::span<const double> v) const;
  std::vector<double> constraint_values_h(std::span<const double> v) const;

  struct Data;

 private:
  friend DynamicalSystem compile(const Problem&, const GradientSet&, SolverMethod,
                                 const CircuitGains&, bool);
  std::shared_ptr<const Data> data_;
};

/// Throws GainError, LengthMismatch (gradient set does not match problem).
DynamicalSystem compile(const Problem& p, const GradientSet& gs, SolverMethod m,
                        const CircuitGains& gains = {}, bool anti_windup = true);

/// [v0 or 0 | 0 | 0]. Throws LengthMismatch.
std::vector<double> initial_state(const DynamicalSystem& ds,
                                  std::optional<std::span<const double>> v0 = std::nullopt);

DualValues duals(const DynamicalSystem& ds, std::span<const double> state);

}  // namespace kktsynth
