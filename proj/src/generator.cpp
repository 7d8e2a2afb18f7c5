#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "kktsynth/verify.hpp"

namespace kktsynth {

std::string_view to_string(Density d) { return d == Density::Sparse ? "sparse" : "dense"; }

std::optional<Density> density_from_name(std::string_view s) {
  if (s == "sparse") return Density::Sparse;
  if (s == "dense") return Density::Dense;
  return std::nullopt;
}

namespace {

constexpr int kObjectiveRowNnz = 3;
constexpr int kRowNnzCap = 1000;

// Distinct sorted column indices.
std::vector<int> pick_columns(std::mt19937_64& rng, int n, int count) {
  std::vector<int> cols;
  if (count >= n) {
    cols.resize(static_cast<std::size_t>(n));
    std::iota(cols.begin(), cols.end(), 0);
    return cols;
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  while (static_cast<int>(cols.size()) < count) {
    int k = pick(rng);
    if (!used[k]) {
      used[k] = 1;
      cols.push_back(k);
    }
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

Expr term(double c, int k) { return mul({Expr::constant(c), Expr::variable(k)}); }

}  // namespace

GeneratedProblem generate_problem(const GeneratorSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = std::max(0, spec.n);
  const bool sparse = spec.density == Density::Sparse;
  const int row_nnz = sparse ? std::min(kRowNnzCap, std::max(1, n / 10)) : n;

  GeneratedProblem out;
  Problem& p = out.problem;
  p.n_vars = n;
  p.bounds_materialized = true;
  for (int k = 0; k < n; ++k) p.var_names.push_back("x" + std::to_string(k + 1));

  out.x0.resize(static_cast<std::size_t>(n));
  for (double& x : out.x0) x = 2.0 * unit(rng) - 1.0;

  // H = A'A + I with A square; entries N(0, 1/n) dense or 3 per row sparse.
  // Upper triangle only, accumulated densely or in a map.
  std::vector<double> hd;
  std::map<std::pair<int, int>, double> hs;
  if (!sparse) hd.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  auto hadd = [&](int k, int l, double v) {
    if (sparse) hs[{k, l}] += v;
    else hd[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(l)] += v;
  };
  for (int k = 0; k < n; ++k) hadd(k, k, 1.0);
  {
    const int per_row = sparse ? std::min(kObjectiveRowNnz, n) : n;
    const double sd = 1.0 / std::sqrt(static_cast<double>(std::max(1, per_row)));
    std::vector<std::pair<int, double>> row;
    for (int r = 0; r < n; ++r) {
      row.clear();
      for (int k : pick_columns(rng, n, per_row)) row.emplace_back(k, sd * normal(rng));
      for (const auto& [k, ak] : row)
        for (const auto& [l, al] : row)
          if (k <= l) hadd(k, l, ak * al);
    }
  }
  std::vector<Expr> obj;
  auto hterm = [&](int k, int l, double v) {
    if (k == l)
      obj.push_back(mul({Expr::constant(0.5 * v), power(Expr::variable(k), 2)}));
    else if (v != 0.0)
      obj.push_back(mul({Expr::constant(v), Expr::variable(k), Expr::variable(l)}));
  };
  if (sparse) {
    for (const auto& [kl, v] : hs) hterm(kl.first, kl.second, v);
  } else {
    for (int k = 0; k < n; ++k)
      for (int l = k; l < n; ++l)
        hterm(k, l, hd[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(l)]);
  }
  for (int k = 0; k < n; ++k) obj.push_back(term(normal(rng), k));
  p.objective = add(std::move(obj));

  // a'x - a'x0 + margin + slack >= 0, unit-norm a.
  // Sparse equality rows each get a column no earlier equality row touches,
  // which keeps them linearly independent.
  std::vector<char> eq_touched;
  auto linear_row = [&](double offset, std::vector<Expr>& terms, bool equality) {
    std::vector<int> cols = pick_columns(rng, n, row_nnz);
    if (equality && sparse && n > 0) {
      if (eq_touched.empty()) eq_touched.assign(static_cast<std::size_t>(n), 0);
      bool fresh = std::any_of(cols.begin(), cols.end(), [&](int k) { return !eq_touched[k]; });
      if (!fresh) {
        std::vector<int> free_cols;
        for (int k = 0; k < n; ++k)
          if (!eq_touched[k]) free_cols.push_back(k);
        if (!free_cols.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, free_cols.size() - 1);
          cols.front() = free_cols[pick(rng)];
          std::sort(cols.begin(), cols.end());
        }
      }
      for (int k : cols) eq_touched[k] = 1;
    }
    std::vector<double> a(cols.size());
    double norm = 0.0;
    for (double& v : a) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    double ax0 = 0.0;
    terms.reserve(cols.size() + 1);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      double c = a[t] / norm;
      ax0 += c * out.x0[cols[t]];
      terms.push_back(term(c, cols[t]));
    }
    terms.push_back(Expr::constant(offset - ax0));
  };

  for (int i = 0; i < spec.m_lin; ++i) {
    std::vector<Expr> terms;
    linear_row(kGeneratorMargin + 0.5 * unit(rng), terms, false);
    p.inequalities.push_back(add(std::move(terms)));
    p.ineq_names.push_back("lin" + std::to_string(i + 1));
  }

  // 1 - ||x_K - c||^2 / rho^2 >= 0 with x0 inside at margin 0.1 + slack.
  for (int i = 0; i < spec.m_quad; ++i) {
    std::vector<int> cols = pick_columns(rng, n, row_nnz);
    std::vector<double> delta(cols.size());
    double d2 = 0.0;
    for (double& v : delta) {
      v = normal(rng);
      d2 += v * v;
    }
    const double dist = 0.5 + 1.5 * unit(rng);
    const double scale = d2 > 0 ? dist / std::sqrt(d2) : 0.0;
    d2 = dist * dist;
    const double inside = 1.0 - kGeneratorMargin - 0.4 * unit(rng);  // = d^2 / rho^2
    const double inv_rho2 = inside / d2;
    std::vector<Expr> terms;
    terms.reserve(2 * cols.size() + 1);
    double constant = 1.0;
    for (std::size_t t = 0; t < cols.size(); ++t) {
      const int k = cols[t];
      const double ck = out.x0[k] + scale * delta[t];
      // -(x - c)^2 / rho^2 = -x^2/rho^2 + 2c x/rho^2 - c^2/rho^2
      terms.push_back(mul({Expr::constant(-inv_rho2), power(Expr::variable(k), 2)}));
      if (ck != 0.0) terms.push_back(term(2.0 * ck * inv_rho2, k));
      constant -= ck * ck * inv_rho2;
    }
    terms.push_back(Expr::constant(constant));
    p.inequalities.push_back(add(std::move(terms)));
    p.ineq_names.push_back("ball" + std::to_string(i + 1));
  }

  for (int j = 0; j < spec.p_eq; ++j) {
    std::vector<Expr> terms;
    linear_row(0.0, terms, true);
    p.equalities.push_back(add(std::move(terms)));
    p.eq_names.push_back("eq" + std::to_string(j + 1));
  }
  return out;
}

}  // namespace kktsynth
