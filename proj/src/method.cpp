#include "kktsynth/method.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kktsynth/errors.hpp"

namespace kktsynth {

std::string_view to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::Penalty: return "penalty";
    case SolverMethod::PrimalDual: return "primal-dual";
    case SolverMethod::AugmentedLagrangian: return "aug-lagrangian";
  }
  return "?";
}

std::optional<SolverMethod> method_from_name(std::string_view name) {
  if (name == "penalty") return SolverMethod::Penalty;
  if (name == "primal-dual" || name == "pd") return SolverMethod::PrimalDual;
  if (name == "aug-lagrangian" || name == "al" || name == "auglag")
    return SolverMethod::AugmentedLagrangian;
  return std::nullopt;
}

void CircuitGains::validate() const {
  auto check = [](double v, const char* what) {
    if (!std::isfinite(v) || v <= 0.0)
      throw GainError(std::string(what) + " must be finite and positive, got " +
                      format_number(v));
  };
  check(r_gamma, "R_gamma");
  check(c_gamma, "C_gamma");
  check(r_rho, "R_rho");
  check(c_rho, "C_rho");
  check(r_o, "R_o");
  check(r_lim, "R_lim");
  check(gamma(), "gamma");
  check(kappa_p(), "kappa_p");
  check(kappa_i(), "kappa_I");
}

CompiledFunction::CompiledFunction(const Expr& e) {
  AffineSplit s = split_affine(e);
  constant_ = s.constant;
  index_ = std::move(s.index);
  coef_ = std::move(s.coef);
  nonlinear_ = std::move(s.nonlinear);
}

double CompiledFunction::operator()(std::span<const double> x) const {
  double acc = constant_;
  for (std::size_t t = 0; t < index_.size(); ++t) acc += coef_[t] * x[index_[t]];
  for (const Expr& e : nonlinear_) acc += eval(e, x);
  return acc;
}

namespace {

// Gradient of one row: constant entries flat, the rest compiled.
struct RowJacobian {
  std::vector<int> const_index;
  std::vector<double> const_value;
  std::vector<int> var_index;
  std::vector<CompiledFunction> var_entry;

  void build(const SparseGradient& sg) {
    for (std::size_t t = 0; t < sg.nnz(); ++t) {
      const Expr& e = sg.entry[t];
      if (e.is_const()) {
        if (e.value() == 0.0) continue;
        const_index.push_back(sg.index[t]);
        const_value.push_back(e.value());
      } else {
        var_index.push_back(sg.index[t]);
        var_entry.emplace_back(e);
      }
    }
  }

  // out += scale * grad(v)
  void accumulate(double scale, std::span<const double> v, std::span<double> out) const {
    for (std::size_t t = 0; t < const_index.size(); ++t)
      out[const_index[t]] += scale * const_value[t];
    for (std::size_t t = 0; t < var_index.size(); ++t)
      out[var_index[t]] += scale * var_entry[t](v);
  }
};

}  // namespace

struct DynamicalSystem::Data {
  std::size_t n = 0, m = 0, p = 0;
  SolverMethod method = SolverMethod::AugmentedLagrangian;
  CircuitGains gains;
  bool anti_windup = true;
  double gamma = 0, kp = 0, ki = 0;

  RowJacobian grad_f;
  std::vector<CompiledFunction> g, h;
  std::vector<RowJacobian> jg, jh;

  bool has_states() const { return method != SolverMethod::Penalty; }
};

namespace {

using Data = DynamicalSystem::Data;

void eval_rows(const std::vector<CompiledFunction>& rows, std::span<const double> v,
               std::span<double> out) {
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i](v);
}

double lambda_of(const Data& d, double g, const double* z) {
  switch (d.method) {
    case SolverMethod::Penalty: return std::min(0.0, d.kp * g);
    case SolverMethod::PrimalDual: return std::min(0.0, *z);
    case SolverMethod::AugmentedLagrangian: return std::min(0.0, d.kp * g + *z);
  }
  return 0.0;
}

double mu_of(const Data& d, double h, const double* w) {
  switch (d.method) {
    case SolverMethod::Penalty: return d.kp * h;
    case SolverMethod::PrimalDual: return *w;
    case SolverMethod::AugmentedLagrangian: return d.kp * h + *w;
  }
  return 0.0;
}

}  // namespace

std::size_t DynamicalSystem::n_primal() const { return data_->n; }
std::size_t DynamicalSystem::n_ineq() const { return data_->m; }
std::size_t DynamicalSystem::n_eq() const { return data_->p; }
std::size_t DynamicalSystem::n_ineq_states() const { return data_->has_states() ? data_->m : 0; }
std::size_t DynamicalSystem::n_eq_states() const { return data_->has_states() ? data_->p : 0; }
std::size_t DynamicalSystem::state_size() const {
  return n_primal() + n_ineq_states() + n_eq_states();
}
const CircuitGains& DynamicalSystem::gains() const { return data_->gains; }
SolverMethod DynamicalSystem::method() const { return data_->method; }
bool DynamicalSystem::anti_windup() const { return data_->anti_windup; }

void DynamicalSystem::rhs(std::span<const double> state, std::span<double> dstate) const {
  const Data& d = *data_;
  if (state.size() != state_size() || dstate.size() != state_size())
    throw LengthMismatch("state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_size()));
  auto v = state.first(d.n);
  const bool st = d.has_states();
  const double* z = st ? state.data() + d.n : nullptr;
  const double* w = st ? state.data() + d.n + d.m : nullptr;

  std::span<double> grad = dstate.first(d.n);
  std::fill(grad.begin(), grad.end(), 0.0);
  d.grad_f.accumulate(1.0, v, grad);

  // Row values go straight into the dual-state slots when those exist.
  std::vector<double> scratch;
  std::span<double> gv, hv;
  if (st) {
    gv = dstate.subspan(d.n, d.m);
    hv = dstate.subspan(d.n + d.m, d.p);
  } else {
    scratch.resize(d.m + d.p);
    gv = std::span<double>(scratch).first(d.m);
    hv = std::span<double>(scratch).subspan(d.m, d.p);
  }
  eval_rows(d.g, v, gv);
  eval_rows(d.h, v, hv);

  for (std::size_t i = 0; i < d.m; ++i) {
    double lam = lambda_of(d, gv[i], st ? z + i : nullptr);
    if (lam != 0.0) d.jg[i].accumulate(lam, v, grad);
  }
  for (std::size_t j = 0; j < d.p; ++j) {
    double mu = mu_of(d, hv[j], st ? w + j : nullptr);
    if (mu != 0.0) d.jh[j].accumulate(mu, v, grad);
  }
  for (double& x : grad) x *= -d.gamma;

  if (!st) return;
  for (std::size_t i = 0; i < d.m; ++i) {
    double g = gv[i];
    gv[i] = (d.anti_windup && z[i] >= 0.0 && g > 0.0) ? 0.0 : d.ki * g;
  }
  for (std::size_t j = 0; j < d.p; ++j) hv[j] *= d.ki;
}

std::vector<double> DynamicalSystem::rhs(std::span<const double> state) const {
  std::vector<double> out(state_size());
  rhs(state, out);
  return out;
}

DualValues DynamicalSystem::duals(std::span<const double> state) const {
  const Data& d = *data_;
  if (state.size() != state_size())
    throw LengthMismatch("state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_size()));
  auto v = state.first(d.n);
  const bool st = d.has_states();
  DualValues out;
  out.lambda.resize(d.m);
  out.mu.resize(d.p);
  for (std::size_t i = 0; i < d.m; ++i)
    out.lambda[i] = lambda_of(d, d.g[i](v), st ? state.data() + d.n + i : nullptr);
  for (std::size_t j = 0; j < d.p; ++j)
    out.mu[j] = mu_of(d, d.h[j](v), st ? state.data() + d.n + d.m + j : nullptr);
  return out;
}

void DynamicalSystem::project(std::span<double> state) const {
  const Data& d = *data_;
  if (!d.anti_windup || !d.has_states()) return;
  for (std::size_t i = 0; i < d.m; ++i) {
    double& z = state[d.n + i];
    if (z > 0.0) z = 0.0;
  }
}

std::vector<double> DynamicalSystem::constraint_values_g(std::span<const double> v) const {
  std::vector<double> out(data_->m);
  eval_rows(data_->g, v.first(data_->n), out);
  return out;
}

std::vector<double> DynamicalSystem::constraint_values_h(std::span<const double> v) const {
  std::vector<double> out(data_->p);
  eval_rows(data_->h, v.first(data_->n), out);
  return out;
}

DynamicalSystem compile(const Problem& p, const GradientSet& gs, SolverMethod m,
                        const CircuitGains& gains, bool anti_windup) {
  gains.validate();
  if (gs.grad_f.size() != static_cast<std::size_t>(p.n_vars) ||
      gs.grad_g.size() != p.inequalities.size() || gs.grad_h.size() != p.equalities.size())
    throw LengthMismatch("gradient set does not match the problem dimensions");

  auto d = std::make_shared<DynamicalSystem::Data>();
  d->n = static_cast<std::size_t>(p.n_vars);
  d->m = p.inequalities.size();
  d->p = p.equalities.size();
  d->method = m;
  d->gains = gains;
  d->anti_windup = anti_windup;
  d->gamma = gains.gamma();
  d->kp = gains.kappa_p();
  d->ki = gains.kappa_i();

  SparseGradient f;
  for (int k : gs.f_sparsity) {
    f.index.push_back(k);
    f.entry.push_back(gs.grad_f[k]);
  }
  d->grad_f.build(f);

  d->g.reserve(d->m);
  d->jg.resize(d->m);
  for (std::size_t i = 0; i < d->m; ++i) {
    d->g.emplace_back(p.inequalities[i]);
    d->jg[i].build(gs.grad_g[i]);
  }
  d->h.reserve(d->p);
  d->jh.resize(d->p);
  for (std::size_t j = 0; j < d->p; ++j) {
    d->h.emplace_back(p.equalities[j]);
    d->jh[j].build(gs.grad_h[j]);
  }

  DynamicalSystem ds;
  ds.data_ = std::move(d);
  return ds;
}

std::vector<double> initial_state(const DynamicalSystem& ds,
                                  std::optional<std::span<const double>> v0) {
  std::vector<double> s(ds.state_size(), 0.0);
  if (v0) {
    if (v0->size() != ds.n_primal())
      throw LengthMismatch("initial point has " + std::to_string(v0->size()) +
                           " entries, expected " + std::to_string(ds.n_primal()));
    std::copy(v0->begin(), v0->end(), s.begin());
  }
  return s;
}

DualValues duals(const DynamicalSystem& ds, std::span<const double> state) {
  return ds.duals(state);
}

}  // namespace kktsynth
