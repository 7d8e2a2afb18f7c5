#include "kktsynth/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "kktsynth/errors.hpp"

namespace kktsynth {

SimConfig SimConfig::defaults_for(const CircuitGains& gains) {
  SimConfig c;
  c.t_stop = 20.0 / gains.gamma();
  return c;
}

void SimConfig::validate() const {
  auto pos = [](double v, const char* what) {
    if (!std::isfinite(v) || v <= 0.0)
      throw Error(std::string(what) + " must be finite and positive, got " + format_number(v));
  };
  pos(t_stop, "t_stop");
  pos(rel_tol, "rel_tol");
  pos(abs_tol, "abs_tol");
  pos(effective_max_step(), "max_step");
  pos(min_step, "min_step");
  pos(settle_rel, "settle_rel");
  pos(settle_abs_floor, "settle_abs_floor");
  if (record_stride < 1) throw Error("record_stride must be at least 1");
}

OdeSystem as_ode(const DynamicalSystem& ds) {
  OdeSystem sys;
  sys.size = ds.state_size();
  sys.rhs = [ds](std::span<const double> y, std::span<double> f) { ds.rhs(y, f); };
  if (ds.anti_windup() && ds.n_ineq_states() > 0)
    sys.project = [ds](std::span<double> y) { ds.project(y); };
  const double gamma = ds.gains().gamma();
  sys.monitor = [gamma](std::span<const double>, std::span<const double> f) {
    double m = 0.0;
    for (double x : f) m = std::max(m, std::abs(x));
    return m / gamma;
  };
  return sys;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
// error = 5th order - 4th order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kDivergence = 1e9;
constexpr double kEarlyStopLevel = 1e-10;
constexpr int kEarlyStopCount = 100;

double rms_norm(std::span<const double> x, std::span<const double> y, const SimConfig& cfg) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
    double r = x[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// Starting step from the local scale of the solution and its derivative.
double initial_step(const OdeSystem& sys, std::span<const double> y0,
                    std::span<const double> f0, const SimConfig& cfg) {
  const std::size_t n = sys.size;
  double d0 = rms_norm(y0, y0, cfg), d1 = rms_norm(f0, y0, cfg);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, cfg.effective_max_step());
  std::vector<double> y1(n), f1(n), diff(n);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + h0 * f0[i];
  sys.rhs(y1, f1);
  for (std::size_t i = 0; i < n; ++i) diff[i] = (f1[i] - f0[i]) / h0;
  double d2 = rms_norm(diff, y0, cfg);
  if (d1 == 0.0 && d2 == 0.0) return cfg.effective_max_step();  // nothing moves
  double dm = std::max(d1, d2);
  double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min({100.0 * h0, h1, cfg.effective_max_step()});
}

void check_finite(std::span<const double> y, double t) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(std::abs(y[i]) <= kDivergence))
      throw Divergence("state component " + std::to_string(i) + " reached " +
                       format_number(y[i]) + " at t = " + format_number(t) +
                       " s; the compiled system is unstable for these gains");
  }
}

}  // namespace

Trajectory integrate(const OdeSystem& sys, std::span<const double> s0, const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = sys.size;
  if (s0.size() != n)
    throw LengthMismatch("initial state has " + std::to_string(s0.size()) +
                         " entries, expected " + std::to_string(n));

  Trajectory tr;
  tr.dim = n;
  std::vector<double> y(s0.begin(), s0.end());
  if (sys.project) sys.project(y);
  check_finite(y, 0.0);
  auto record = [&](double t) {
    tr.times.push_back(t);
    tr.states.insert(tr.states.end(), y.begin(), y.end());
  };
  record(0.0);

  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n),
      err(n), scale_ref(n);
  sys.rhs(y, k1);

  const double t_stop = cfg.t_stop, h_max = cfg.effective_max_step();
  double t = 0.0;
  double h = cfg.initial_step > 0 ? std::min(cfg.initial_step, h_max) : initial_step(sys, y, k1, cfg);
  bool last_rejected = false;
  int quiet_steps = 0;
  std::size_t since_record = 0;

  while (t < t_stop) {
    bool last = false;
    if (t + h >= t_stop || t_stop - (t + h) <= 1e-12 * t_stop) {
      h = t_stop - t;
      last = true;
    }
    if (h < cfg.min_step && !last)
      throw StepUnderflow("step size " + format_number(h) + " s fell below min_step at t = " +
                          format_number(t) +
                          " s; the system is too stiff for the explicit integrator, "
                          "lower kappa_I or kappa_p (raise R_o or C_rho, lower R_rho)");

    auto stage = [&](std::vector<double>& out, std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& [a, k] : terms) acc += a * (*k)[i];
        tmp[i] = y[i] + h * acc;
      }
      sys.rhs(tmp, out);
    };
    // A trial stage far outside the trajectory can overflow or leave a
    // function's domain; that is a rejected step, not an error.
    double en = 1e10;
    try {
      stage(k2, {{a21, &k1}});
      stage(k3, {{a31, &k1}, {a32, &k2}});
      stage(k4, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
      stage(k5, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
      stage(k6, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
      sys.rhs(ynew, k7);
      for (std::size_t i = 0; i < n; ++i) {
        err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        scale_ref[i] = std::max(std::abs(y[i]), std::abs(ynew[i]));
      }
      en = rms_norm(err, scale_ref, cfg);
    } catch (const NonFinite&) {
    } catch (const DomainError&) {
    }
    if (!std::isfinite(en)) en = 1e10;

    double fac = en == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 10.0);
    if (en <= 1.0) {
      t = last ? t_stop : t + h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      if (sys.project) {
        tmp = y;
        sys.project(y);
        if (tmp != y) sys.rhs(y, k1);
      }
      check_finite(y, t);
      ++tr.accepted_steps;
      if (++since_record >= static_cast<std::size_t>(cfg.record_stride) || t >= t_stop) {
        record(t);
        since_record = 0;
      }
      if (cfg.early_stop && sys.monitor) {
        quiet_steps = sys.monitor(y, k1) < kEarlyStopLevel ? quiet_steps + 1 : 0;
        if (quiet_steps >= kEarlyStopCount) {
          tr.stopped_early = true;
          if (since_record != 0) record(t);
          break;
        }
      }
      if (last_rejected) fac = std::min(fac, 1.0);
      last_rejected = false;
      h = std::min(h * fac, h_max);
    } else {
      ++tr.rejected_steps;
      last_rejected = true;
      h *= std::max(fac, 0.2);
      if (h < cfg.min_step)
        throw StepUnderflow("step size " + format_number(h) + " s fell below min_step at t = " +
                            format_number(t) +
                            " s; the system is too stiff for the explicit integrator, "
                            "lower kappa_I or kappa_p (raise R_o or C_rho, lower R_rho)");
    }
  }
  return tr;
}

Trajectory integrate(const DynamicalSystem& ds, std::span<const double> s0,
                     const SimConfig& cfg) {
  return integrate(as_ode(ds), s0, cfg);
}

SettleResult settle_analysis(const Trajectory& tr, std::size_t n_watch, const SimConfig& cfg) {
  SettleResult res;
  if (tr.size() == 0) return res;
  auto fin = tr.final_state();
  res.final_state.assign(fin.begin(), fin.end());
  n_watch = std::min(n_watch, tr.dim);

  std::vector<double> band(n_watch);
  for (std::size_t k = 0; k < n_watch; ++k)
    band[k] = std::max(cfg.settle_rel * std::abs(fin[k]), cfg.settle_abs_floor);
  auto inside = [&](std::size_t i) {
    auto s = tr.state(i);
    for (std::size_t k = 0; k < n_watch; ++k)
      if (std::abs(s[k] - fin[k]) > band[k]) return false;
    return true;
  };

  // Last recorded sample outside the band.
  std::size_t first_in = 0;
  for (std::size_t i = tr.size(); i-- > 0;) {
    if (!inside(i)) {
      first_in = i + 1;
      break;
    }
  }
  const double t0 = tr.times.front(), t1 = tr.times.back();
  res.settling_time = first_in < tr.size() ? tr.times[first_in] : t1;
  // Not steady if the band is still violated inside the last 5% of the run.
  const double tail = t1 - 0.05 * (t1 - t0);
  res.settled = first_in == 0 || tr.times[first_in - 1] < tail;
  return res;
}

SettleResult settle_analysis(const Trajectory& tr, const DynamicalSystem& ds,
                             const SimConfig& cfg) {
  return settle_analysis(tr, ds.n_primal(), cfg);
}

double gradient_norm_monitor(const DynamicalSystem& ds, std::span<const double> state) {
  std::vector<double> f = ds.rhs(state);
  double m = 0.0;
  for (double x : f) m = std::max(m, std::abs(x));
  return m / ds.gains().gamma();
}

void write_waveform_csv(std::ostream& os, const Trajectory& tr, const DynamicalSystem& ds) {
  os << "time";
  for (std::size_t k = 0; k < ds.n_primal(); ++k) os << ",v" << k + 1;
  for (std::size_t i = 0; i < ds.n_ineq(); ++i) os << ",lam" << i + 1;
  for (std::size_t j = 0; j < ds.n_eq(); ++j) os << ",mu" << j + 1;
  os << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t r = 0; r < tr.size(); ++r) {
    auto s = tr.state(r);
    put(tr.times[r]);
    for (std::size_t k = 0; k < ds.n_primal(); ++k) {
      os << ',';
      put(s[k]);
    }
    DualValues d = ds.duals(s);
    for (double l : d.lambda) {
      os << ',';
      put(l);
    }
    for (double m : d.mu) {
      os << ',';
      put(m);
    }
    os << '\n';
  }
}

}  // namespace kktsynth
