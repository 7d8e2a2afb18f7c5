#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "kktsynth/method.hpp"

namespace kktsynth {

// Tolerance used by solve and bench. At 1e-6 the step sits on the stability
// boundary of the fast dual modes and the residual noise shows up in the
// KKT stationarity check at ~1e-5.
inline constexpr double kSolveRelTol = 1e-8;

/// Integration and settling controls. Defaults follow the circuit: the
/// horizon is 20 primal time constants and the band is 0.01% of final value.
struct SimConfig {
  double t_stop = 20e-3;
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double max_step = 0.0;   // <= 0: t_stop / 100
  double min_step = 1e-15;
  double settle_rel = 1e-4;
  double settle_abs_floor = 1e-6;
  int record_stride = 1;
  bool early_stop = false;  // stop once the gradient monitor stays below 1e-10
  double initial_step = 0.0;  // <= 0: chosen from the rhs at s0

  /// Defaults with t_stop = 20/gamma.
  static SimConfig defaults_for(const CircuitGains& gains);
  double effective_max_step() const { return max_step > 0 ? max_step : t_stop / 100.0; }
  /// Throws Error when a field is non-positive or not finite.
  void validate() const;
};

/// A generic autonomous ODE: rhs plus an optional projection after each step.
struct OdeSystem {
  std::size_t size = 0;
  std::function<void(std::span<const double>, std::span<double>)> rhs;
  std::function<void(std::span<double>)> project;  // may be empty
  /// Stationarity proxy for early stop; may be empty.
  std::function<double(std::span<const double>, std::span<const double>)> monitor;
};

OdeSystem as_ode(const DynamicalSystem& ds);

/// Recorded states, stored row-major in one buffer.
struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> states;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  bool stopped_early = false;

  std::size_t size() const { return times.size(); }
  std::span<const double> state(std::size_t i) const {
    return std::span<const double>(states).subspan(i * dim, dim);
  }
  std::span<const double> final_state() const { return state(size() - 1); }
};

/**
 * Dormand-Prince 5(4) with FSAL, error norm
 * sqrt(mean((err_i / (abs_tol + rel_tol * max(|y_i|, |y_new_i|)))^2)) <= 1.
 * Throws Divergence, StepUnderflow, LengthMismatch.
 */
Trajectory integrate(const OdeSystem& sys, std::span<const double> s0, const SimConfig& cfg);
Trajectory integrate(const DynamicalSystem& ds, std::span<const double> s0,
                     const SimConfig& cfg);

struct SettleResult {
  bool settled = false;
  double settling_time = 0.0;
  std::vector<double> final_state;
};

/// Post-hoc settling on the first `n_watch` components (the primal voltages).
SettleResult settle_analysis(const Trajectory& tr, std::size_t n_watch, const SimConfig& cfg);
SettleResult settle_analysis(const Trajectory& tr, const DynamicalSystem& ds,
                             const SimConfig& cfg);

/// ||rhs(state)||_inf / gamma.
double gradient_norm_monitor(const DynamicalSystem& ds, std::span<const double> state);

/// time,v1..vN,lam1..lamM,mu1..muP with 17 significant digits.
void write_waveform_csv(std::ostream& os, const Trajectory& tr, const DynamicalSystem& ds);

}  // namespace kktsynth
