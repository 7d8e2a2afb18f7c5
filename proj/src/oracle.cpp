#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "kktsynth/errors.hpp"
#include "kktsynth/verify.hpp"

namespace kktsynth {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kFeasTol = 1e-9;
constexpr double kSignTol = 1e-9;
constexpr int kMaxOracleVars = 5000;

// 1/2 x'Qx + a'x + b, read off the symbolic gradient.
struct QuadForm {
  MatrixXd q;
  VectorXd a;
  double b = 0.0;
  bool quadratic = false;

  double value(const VectorXd& x) const {
    double v = a.dot(x) + b;
    if (quadratic) v += 0.5 * x.dot(q * x);
    return v;
  }
  VectorXd grad(const VectorXd& x) const { return quadratic ? VectorXd(q * x + a) : a; }
};

QuadForm quad_form(const Expr& e, int n, const char* what) {
  auto d = degree(e);
  if (!d || *d > 2) throw NotQp(std::string(what) + " is not polynomial of degree <= 2");
  QuadForm f;
  f.q = MatrixXd::Zero(n, n);
  f.a = VectorXd::Zero(n);
  std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
  f.b = eval(e, zero);
  for (const auto& [k, dk] : gradient(e)) {
    AffineSplit s = split_affine(dk);
    if (!s.is_affine()) throw NotQp(std::string(what) + " has a non-affine derivative");
    f.a[k] = s.constant;
    for (std::size_t t = 0; t < s.index.size(); ++t) {
      f.q(k, s.index[t]) += s.coef[t];
      f.quadratic = true;
    }
  }
  if (f.quadratic) f.q = 0.5 * (f.q + f.q.transpose());
  return f;
}

struct Candidate {
  VectorXd x;
  VectorXd nu;  // multipliers of the rows in the subset, subset order
  std::vector<int> rows;
  double f = std::numeric_limits<double>::infinity();
};

class Oracle {
 public:
  explicit Oracle(const Problem& p) : p_(p), n_(p.n_vars), m_(p.m()), pe_(p.p()) {
    const int rows = m_ + pe_;
    if (rows > kOracleMaxRows)
      throw TooLarge("oracle enumeration is limited to " + std::to_string(kOracleMaxRows) +
                     " constraints, problem has " + std::to_string(rows));
    if (n_ > kMaxOracleVars)
      throw TooLarge("oracle is limited to " + std::to_string(kMaxOracleVars) + " variables");
    obj_ = quad_form(p.objective, n_, "objective");
    for (int i = 0; i < m_; ++i) rows_.push_back(quad_form(p.inequalities[i], n_, "inequality"));
    for (int j = 0; j < pe_; ++j) rows_.push_back(quad_form(p.equalities[j], n_, "equality"));
    for (const QuadForm& r : rows_) any_quadratic_ = any_quadratic_ || r.quadratic;
    if (any_quadratic_ && rows > kOracleMaxRowsQuadratic)
      throw TooLarge("with quadratic constraints the oracle is limited to " +
                     std::to_string(kOracleMaxRowsQuadratic) + " constraints");
  }

  OracleSolution solve() {
    const MatrixXd h = obj_.quadratic ? obj_.q : MatrixXd::Zero(n_, n_);
    Eigen::LLT<MatrixXd> llt(h);
    const bool pd = n_ > 0 && llt.info() == Eigen::Success && h.diagonal().minCoeff() > 0;
    if (!any_quadratic_ && (pd || n_ == 0)) {
      enumerate_linear(llt);
    } else {
      enumerate_newton(pd ? std::optional<VectorXd>(llt.solve(-obj_.a)) : std::nullopt);
    }
    if (!best_.x.size() && n_ > 0)
      throw Infeasible("no feasible KKT point: every active-set candidate failed");
    return finish();
  }

 private:
  std::vector<int> subset(unsigned mask) const {
    std::vector<int> s;
    for (int i = 0; i < m_; ++i)
      if (mask & (1u << i)) s.push_back(i);
    for (int j = 0; j < pe_; ++j) s.push_back(m_ + j);
    return s;
  }

  // Feasibility and multiplier signs; keeps the least objective.
  void offer(const VectorXd& x, const VectorXd& nu, const std::vector<int>& rows) {
    for (std::size_t t = 0; t < rows.size(); ++t)
      if (rows[t] < m_ && nu[static_cast<Eigen::Index>(t)] > kSignTol) return;
    for (int i = 0; i < m_; ++i)
      if (rows_[i].value(x) < -kFeasTol) return;
    for (int j = 0; j < pe_; ++j)
      if (std::abs(rows_[m_ + j].value(x)) > kFeasTol) return;
    double f = obj_.value(x);
    if (f < best_.f - 1e-12 * std::max(1.0, std::abs(f))) {
      best_.x = x;
      best_.nu = nu;
      best_.rows = rows;
      best_.f = f;
    }
  }

  // Linear constraints, positive definite Hessian: x = x_u - W nu with
  // W = H^-1 A', and G_SS nu_S = r_S per subset.
  void enumerate_linear(const Eigen::LLT<MatrixXd>& llt) {
    const int rows = m_ + pe_;
    MatrixXd a(rows, n_);
    VectorXd b(rows);
    for (int r = 0; r < rows; ++r) {
      a.row(r) = rows_[r].a.transpose();
      b[r] = rows_[r].b;
    }
    VectorXd xu = n_ > 0 ? VectorXd(llt.solve(-obj_.a)) : VectorXd();
    MatrixXd w = n_ > 0 ? MatrixXd(llt.solve(a.transpose())) : MatrixXd(0, rows);
    MatrixXd g = a * w;
    VectorXd rr = a * xu + b;
    for (unsigned mask = 0; mask < (1u << m_); ++mask) {
      std::vector<int> s = subset(mask);
      const Eigen::Index k = static_cast<Eigen::Index>(s.size());
      VectorXd nu(k);
      if (k > 0) {
        MatrixXd gs(k, k);
        VectorXd rs(k);
        for (Eigen::Index i = 0; i < k; ++i) {
          rs[i] = rr[s[i]];
          for (Eigen::Index j = 0; j < k; ++j) gs(i, j) = g(s[i], s[j]);
        }
        Eigen::FullPivLU<MatrixXd> lu(gs);
        if (lu.rank() < k) continue;
        nu = lu.solve(rs);
      }
      VectorXd x = xu;
      for (Eigen::Index i = 0; i < k; ++i) x -= w.col(s[i]) * nu[i];
      offer(x, nu, s);
    }
  }

  // General case: Newton on grad f + sum nu_i grad c_i = 0, c_S = 0.
  void enumerate_newton(const std::optional<VectorXd>& unconstrained) {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<VectorXd> starts;
    starts.push_back(VectorXd::Zero(n_));
    if (unconstrained) starts.push_back(*unconstrained);
    for (int t = 0; t < 6; ++t) {
      VectorXd x(n_);
      for (int k = 0; k < n_; ++k) x[k] = normal(rng);
      starts.push_back(x);
    }
    for (unsigned mask = 0; mask < (1u << m_); ++mask) {
      std::vector<int> s = subset(mask);
      for (const VectorXd& x0 : starts) newton(s, x0);
    }
  }

  void newton(const std::vector<int>& s, const VectorXd& x0) {
    const Eigen::Index k = static_cast<Eigen::Index>(s.size()), dim = n_ + k;
    VectorXd z = VectorXd::Zero(dim);
    z.head(n_) = x0;
    MatrixXd jac(dim, dim);
    VectorXd res(dim);
    for (int it = 0; it < 60; ++it) {
      VectorXd x = z.head(n_);
      res.head(n_) = obj_.grad(x);
      jac.setZero();
      if (obj_.quadratic) jac.topLeftCorner(n_, n_) = obj_.q;
      for (Eigen::Index i = 0; i < k; ++i) {
        const QuadForm& c = rows_[s[i]];
        VectorXd gc = c.grad(x);
        double nu = z[n_ + i];
        res.head(n_) += nu * gc;
        res[n_ + i] = c.value(x);
        if (c.quadratic) jac.topLeftCorner(n_, n_) += nu * c.q;
        jac.block(0, n_ + i, n_, 1) = gc;
        jac.block(n_ + i, 0, 1, n_) = gc.transpose();
      }
      double scale = 1.0 + z.cwiseAbs().maxCoeff();
      if (res.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
        offer(x, z.tail(k), s);
        return;
      }
      Eigen::FullPivLU<MatrixXd> lu(jac);
      if (lu.rank() < dim) return;
      z -= lu.solve(res);
      if (!z.allFinite() || z.cwiseAbs().maxCoeff() > 1e12) return;
    }
  }

  OracleSolution finish() const {
    OracleSolution sol;
    sol.x_star.assign(best_.x.data(), best_.x.data() + best_.x.size());
    for (double& x : sol.x_star) x += 0.0;  // no -0 in reports
    sol.lambda_star.assign(static_cast<std::size_t>(m_), 0.0);
    sol.mu_star.assign(static_cast<std::size_t>(pe_), 0.0);
    for (std::size_t t = 0; t < best_.rows.size(); ++t) {
      int r = best_.rows[t];
      double nu = best_.nu[static_cast<Eigen::Index>(t)];
      if (r < m_) sol.lambda_star[r] = std::min(0.0, nu);
      else sol.mu_star[r - m_] = nu;
    }
    sol.active_set = best_.rows;
    sol.f_star = n_ > 0 ? best_.f : obj_.b;
    return sol;
  }

  const Problem& p_;
  int n_, m_, pe_;
  QuadForm obj_;
  std::vector<QuadForm> rows_;
  bool any_quadratic_ = false;
  Candidate best_;
};

}  // namespace

OracleSolution oracle_solve(const Problem& p) { return Oracle(p).solve(); }

}  // namespace kktsynth
