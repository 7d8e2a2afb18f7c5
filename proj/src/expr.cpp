#include "kktsynth/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <new>

#include "kktsynth/errors.hpp"

namespace kktsynth {

static_assert(sizeof(detail::ExprNode) % alignof(Expr) == 0);

std::string_view to_string(FuncKind f) {
  switch (f) {
    case FuncKind::Sin: return "sin";
    case FuncKind::Cos: return "cos";
    case FuncKind::Exp: return "exp";
    case FuncKind::Log: return "log";
  }
  return "?";
}

FuncKind func_from_name(std::string_view name) {
  if (name == "sin") return FuncKind::Sin;
  if (name == "cos") return FuncKind::Cos;
  if (name == "exp") return FuncKind::Exp;
  if (name == "log") return FuncKind::Log;
  throw UnsupportedExpression("function '" + std::string(name) +
                              "' is not supported (allowed: sin, cos, exp, log)");
}

// ---------------------------------------------------------------------------
// Node lifetime

Expr::Expr(const Expr& other) noexcept : node_(other.node_) {
  if (node_) node_->refs.fetch_add(1, std::memory_order_relaxed);
}

Expr& Expr::operator=(const Expr& other) noexcept {
  Expr tmp(other);
  std::swap(node_, tmp.node_);
  return *this;
}

Expr& Expr::operator=(Expr&& other) noexcept {
  Expr tmp(std::move(other));
  std::swap(node_, tmp.node_);
  return *this;
}

Expr::~Expr() {
  if (node_ && node_->refs.fetch_sub(1, std::memory_order_acq_rel) == 1) {
    auto* kids = const_cast<Expr*>(node_->children());
    for (std::uint32_t i = 0; i < node_->size; ++i) kids[i].~Expr();
    node_->~ExprNode();
    ::operator delete(node_);
  }
}

Expr Expr::make(ExprKind kind, std::span<const Expr> children) {
  void* mem = ::operator new(sizeof(detail::ExprNode) + children.size() * sizeof(Expr));
  auto* node = new (mem) detail::ExprNode;
  node->kind = kind;
  node->size = static_cast<std::uint32_t>(children.size());
  auto* kids = reinterpret_cast<Expr*>(node + 1);
  for (std::size_t i = 0; i < children.size(); ++i) new (kids + i) Expr(children[i]);
  Expr e;
  e.node_ = node;
  return e;
}

Expr Expr::constant(double value) {
  Expr e = make(ExprKind::Const, {});
  e.node_->value = value;
  return e;
}

Expr Expr::variable(int index) {
  if (index < 0) throw UnsupportedExpression("negative variable index");
  Expr e = make(ExprKind::Var, {});
  e.node_->index = index;
  return e;
}

Expr Expr::sum(std::span<const Expr> terms) {
  if (terms.empty()) throw UnsupportedExpression("empty sum");
  return make(ExprKind::Sum, terms);
}

Expr Expr::prod(std::span<const Expr> factors) {
  if (factors.empty()) throw UnsupportedExpression("empty product");
  return make(ExprKind::Prod, factors);
}

Expr Expr::pow(Expr base, int exponent) {
  if (exponent < 2) {
    throw UnsupportedExpression("power exponent must be an integer >= 2, got " +
                                std::to_string(exponent));
  }
  Expr e = make(ExprKind::Pow, std::span<const Expr>(&base, 1));
  e.node_->index = exponent;
  return e;
}

Expr Expr::func(FuncKind f, Expr arg) {
  Expr e = make(ExprKind::Func, std::span<const Expr>(&arg, 1));
  e.node_->func = f;
  return e;
}

// ---------------------------------------------------------------------------
// Folding builders

namespace {

const Expr& zero() {
  static const Expr z = Expr::constant(0.0);
  return z;
}
const Expr& one() {
  static const Expr o = Expr::constant(1.0);
  return o;
}
const Expr& minus_one() {
  static const Expr m = Expr::constant(-1.0);
  return m;
}

double apply_func(FuncKind f, double a) {
  switch (f) {
    case FuncKind::Sin: return std::sin(a);
    case FuncKind::Cos: return std::cos(a);
    case FuncKind::Exp: return std::exp(a);
    case FuncKind::Log:
      if (!(a > 0.0)) throw DomainError("log of non-positive value " + format_number(a));
      return std::log(a);
  }
  return 0.0;
}

double int_pow(double b, int n) {
  double r = 1.0;
  while (n > 0) {
    if (n & 1) r *= b;
    b *= b;
    n >>= 1;
  }
  return r;
}

struct ConstAccumulator {
  double value = 0.0;
  int count = 0;
  Expr single;

  void take(const Expr& c, bool product) {
    value = count == 0 ? c.value() : (product ? value * c.value() : value + c.value());
    single = c;
    ++count;
  }
  // Reuses the original node when only one constant was seen.
  Expr result() const { return count == 1 ? single : Expr::constant(value); }
};

void flatten_sum(const Expr& t, std::vector<Expr>& out, ConstAccumulator& acc) {
  switch (t.kind()) {
    case ExprKind::Sum:
      for (const Expr& c : t.children()) flatten_sum(c, out, acc);
      break;
    case ExprKind::Const:
      if (t.value() != 0.0) acc.take(t, false);
      break;
    default:
      out.push_back(t);
  }
}

// Returns false if a zero factor was found.
bool flatten_prod(const Expr& t, std::vector<Expr>& out, ConstAccumulator& acc) {
  switch (t.kind()) {
    case ExprKind::Prod:
      for (const Expr& c : t.children()) {
        if (!flatten_prod(c, out, acc)) return false;
      }
      return true;
    case ExprKind::Const:
      if (t.value() == 0.0) return false;
      if (t.value() != 1.0) acc.take(t, true);
      return true;
    default:
      out.push_back(t);
      return true;
  }
}

}  // namespace

Expr add(std::vector<Expr> terms) {
  std::vector<Expr> out;
  out.reserve(terms.size());
  ConstAccumulator acc;
  for (const Expr& t : terms) flatten_sum(t, out, acc);
  const bool has_const = acc.count > 0 && acc.value != 0.0;
  if (out.empty()) return has_const ? acc.result() : zero();
  if (has_const) out.push_back(acc.result());
  if (out.size() == 1) return out.front();
  return Expr::sum(out);
}

Expr mul(std::vector<Expr> factors) {
  std::vector<Expr> out;
  out.reserve(factors.size());
  ConstAccumulator acc;
  for (const Expr& f : factors) {
    if (!flatten_prod(f, out, acc)) return zero();
  }
  if (acc.count > 0 && acc.value == 0.0) return zero();
  const bool has_const = acc.count > 0 && acc.value != 1.0;
  if (out.empty()) return has_const ? acc.result() : one();
  if (has_const) out.insert(out.begin(), acc.result());
  if (out.size() == 1) return out.front();
  return Expr::prod(out);
}

Expr power(Expr base, int exponent) {
  if (exponent < 0) {
    throw UnsupportedExpression("negative exponents are not representable");
  }
  if (exponent == 0) return one();
  if (exponent == 1) return base;
  if (base.is_const()) return Expr::constant(int_pow(base.value(), exponent));
  return Expr::pow(std::move(base), exponent);
}

Expr apply(FuncKind f, Expr arg) {
  if (arg.is_const()) {
    if (f == FuncKind::Log && !(arg.value() > 0.0)) return Expr::func(f, std::move(arg));
    const double v = apply_func(f, arg.value());
    if (std::isfinite(v)) return Expr::constant(v);
  }
  return Expr::func(f, std::move(arg));
}

Expr negate(Expr e) {
  if (e.kind() == ExprKind::Sum) {
    std::vector<Expr> terms;
    terms.reserve(e.children().size());
    for (const Expr& t : e.children()) terms.push_back(negate(t));
    return add(std::move(terms));
  }
  return mul({minus_one(), std::move(e)});
}

Expr subtract(Expr a, Expr b) { return add({std::move(a), negate(std::move(b))}); }

Expr fold(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Const:
    case ExprKind::Var:
      return e;
    case ExprKind::Sum:
    case ExprKind::Prod: {
      std::vector<Expr> kids;
      kids.reserve(e.children().size());
      for (const Expr& c : e.children()) kids.push_back(fold(c));
      return e.kind() == ExprKind::Sum ? add(std::move(kids)) : mul(std::move(kids));
    }
    case ExprKind::Pow:
      return power(fold(e.children()[0]), e.exponent());
    case ExprKind::Func:
      return apply(e.func_kind(), fold(e.children()[0]));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_rec(const Expr& e, std::span<const double> x) {
  switch (e.kind()) {
    case ExprKind::Const:
      return e.value();
    case ExprKind::Var: {
      const auto i = static_cast<std::size_t>(e.index());
      if (i >= x.size()) {
        throw LengthMismatch("variable index " + std::to_string(i) +
                             " outside point of length " + std::to_string(x.size()));
      }
      return x[i];
    }
    case ExprKind::Sum: {
      double acc = 0.0;
      for (const Expr& c : e.children()) acc += eval_rec(c, x);
      return acc;
    }
    case ExprKind::Prod: {
      double acc = 1.0;
      for (const Expr& c : e.children()) acc *= eval_rec(c, x);
      return acc;
    }
    case ExprKind::Pow:
      return int_pow(eval_rec(e.children()[0], x), e.exponent());
    case ExprKind::Func:
      return apply_func(e.func_kind(), eval_rec(e.children()[0], x));
  }
  return 0.0;
}

}  // namespace

double eval(const Expr& e, std::span<const double> point) {
  const double v = eval_rec(e, point);
  if (!std::isfinite(v)) throw NonFinite("expression evaluated to a non-finite value");
  return v;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

using SparseGrad = std::vector<std::pair<int, Expr>>;

// Sorts by variable and sums entries that share a variable.
SparseGrad merge(SparseGrad terms) {
  std::stable_sort(terms.begin(), terms.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseGrad out;
  std::size_t i = 0;
  while (i < terms.size()) {
    std::size_t j = i + 1;
    while (j < terms.size() && terms[j].first == terms[i].first) ++j;
    if (j == i + 1) {
      out.push_back(std::move(terms[i]));
    } else {
      std::vector<Expr> group;
      for (std::size_t t = i; t < j; ++t) group.push_back(std::move(terms[t].second));
      out.emplace_back(terms[i].first, add(std::move(group)));
    }
    i = j;
  }
  return out;
}

SparseGrad chain(const Expr& outer_derivative, const Expr& inner) {
  SparseGrad g = gradient(inner);
  for (auto& [k, d] : g) d = mul({outer_derivative, d});
  return g;
}

}  // namespace

std::vector<std::pair<int, Expr>> gradient(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Const:
      return {};
    case ExprKind::Var:
      return {{e.index(), one()}};
    case ExprKind::Sum: {
      SparseGrad all;
      for (const Expr& c : e.children()) {
        SparseGrad g = gradient(c);
        std::move(g.begin(), g.end(), std::back_inserter(all));
      }
      return merge(std::move(all));
    }
    case ExprKind::Prod: {
      const auto kids = e.children();
      SparseGrad all;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        SparseGrad g = gradient(kids[i]);
        if (g.empty()) continue;
        std::vector<Expr> others;
        others.reserve(kids.size());
        for (std::size_t j = 0; j < kids.size(); ++j) {
          if (j != i) others.push_back(kids[j]);
        }
        for (auto& [k, d] : g) {
          std::vector<Expr> factors = others;
          factors.push_back(std::move(d));
          all.emplace_back(k, mul(std::move(factors)));
        }
      }
      return merge(std::move(all));
    }
    case ExprKind::Pow: {
      const Expr& base = e.children()[0];
      const int n = e.exponent();
      return chain(mul({Expr::constant(n), power(base, n - 1)}), base);
    }
    case ExprKind::Func: {
      const Expr& arg = e.children()[0];
      switch (e.func_kind()) {
        case FuncKind::Sin: return chain(apply(FuncKind::Cos, arg), arg);
        case FuncKind::Cos: return chain(negate(apply(FuncKind::Sin, arg)), arg);
        case FuncKind::Exp: return chain(e, arg);
        case FuncKind::Log:
          // 1/u has no Pow form; exp(-log u) is the same function on u > 0.
          return chain(apply(FuncKind::Exp, negate(e)), arg);
      }
    }
  }
  return {};
}

Expr differentiate(const Expr& e, int var) {
  for (auto& [k, d] : gradient(e)) {
    if (k == var) return d;
  }
  return zero();
}

// ---------------------------------------------------------------------------
// Structure queries

std::optional<int> degree(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Const: return 0;
    case ExprKind::Var: return 1;
    case ExprKind::Sum: {
      int d = 0;
      for (const Expr& c : e.children()) {
        auto dc = degree(c);
        if (!dc) return std::nullopt;
        d = std::max(d, *dc);
      }
      return d;
    }
    case ExprKind::Prod: {
      int d = 0;
      for (const Expr& c : e.children()) {
        auto dc = degree(c);
        if (!dc) return std::nullopt;
        d += *dc;
      }
      return d;
    }
    case ExprKind::Pow: {
      auto db = degree(e.children()[0]);
      if (!db) return std::nullopt;
      return *db * e.exponent();
    }
    case ExprKind::Func: {
      auto da = degree(e.children()[0]);
      if (da && *da == 0) return 0;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {
void collect_vars(const Expr& e, std::vector<int>& out) {
  if (e.kind() == ExprKind::Var) {
    out.push_back(e.index());
    return;
  }
  for (const Expr& c : e.children()) collect_vars(c, out);
}
}  // namespace

std::vector<int> variables(const Expr& e) {
  std::vector<int> out;
  collect_vars(e, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int max_variable(const Expr& e) {
  if (e.kind() == ExprKind::Var) return e.index();
  int m = -1;
  for (const Expr& c : e.children()) m = std::max(m, max_variable(c));
  return m;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (!a || !b || a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case ExprKind::Const: return a.value() == b.value();
    case ExprKind::Var: return a.index() == b.index();
    case ExprKind::Pow:
      if (a.exponent() != b.exponent()) return false;
      break;
    case ExprKind::Func:
      if (a.func_kind() != b.func_kind()) return false;
      break;
    default:
      break;
  }
  const auto ka = a.children();
  const auto kb = b.children();
  if (ka.size() != kb.size()) return false;
  for (std::size_t i = 0; i < ka.size(); ++i) {
    if (!structurally_equal(ka[i], kb[i])) return false;
  }
  return true;
}

std::size_t node_count(const Expr& e) {
  std::size_t n = 1;
  for (const Expr& c : e.children()) n += node_count(c);
  return n;
}

namespace {

// Distributes constant scale factors through sums; anything else that is not
// a constant, a variable or c*x is kept as a (scaled) nonlinear term.
void split_term(const Expr& t, double scale, AffineSplit& out,
                std::vector<std::pair<int, double>>& lin) {
  switch (t.kind()) {
    case ExprKind::Const:
      out.constant += scale * t.value();
      return;
    case ExprKind::Var:
      lin.emplace_back(t.index(), scale);
      return;
    case ExprKind::Sum:
      for (const Expr& c : t.children()) split_term(c, scale, out, lin);
      return;
    case ExprKind::Prod: {
      const auto kids = t.children();
      if (kids.size() == 2 && kids[0].is_const() &&
          (kids[1].kind() == ExprKind::Var || kids[1].kind() == ExprKind::Sum)) {
        split_term(kids[1], scale * kids[0].value(), out, lin);
        return;
      }
      break;
    }
    default:
      break;
  }
  out.nonlinear.push_back(scale == 1.0 ? t : mul({Expr::constant(scale), t}));
}

}  // namespace

AffineSplit split_affine(const Expr& e) {
  AffineSplit out;
  std::vector<std::pair<int, double>> lin;
  split_term(e, 1.0, out, lin);
  std::stable_sort(lin.begin(), lin.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [k, c] : lin) {
    if (!out.index.empty() && out.index.back() == k) {
      out.coef.back() += c;
    } else {
      out.index.push_back(k);
      out.coef.push_back(c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Printing

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

struct InfixPrinter {
  const std::function<std::string(int)>& var_text;
  PowerStyle style;
  std::string_view log_name;

  static bool leads_negative(const Expr& e) {
    if (e.is_const()) return e.value() < 0.0;
    return e.kind() == ExprKind::Prod && e.children()[0].is_const() &&
           e.children()[0].value() < 0.0;
  }

  // Renders -e for a term where leads_negative(e) holds.
  std::string negated(const Expr& e) {
    if (e.is_const()) return format_number(-e.value());
    const auto kids = e.children();
    const double c = -kids[0].value();
    std::string s;
    bool first = true;
    if (c != 1.0) {
      s = format_number(c);
      first = false;
    }
    for (std::size_t i = 1; i < kids.size(); ++i) {
      if (!first) s += "*";
      s += render(kids[i], 2);
      first = false;
    }
    return s;
  }

  std::string render(const Expr& e, int parent_prec) {
    switch (e.kind()) {
      case ExprKind::Const: {
        std::string s = format_number(e.value());
        return (e.value() < 0.0 && parent_prec > 1) ? "(" + s + ")" : s;
      }
      case ExprKind::Var:
        return var_text(e.index());
      case ExprKind::Sum: {
        std::string s;
        bool first = true;
        for (const Expr& c : e.children()) {
          if (first) {
            s += c.kind() == ExprKind::Prod && leads_negative(c) ? "-" + negated(c) : render(c, 1);
          } else if (leads_negative(c)) {
            s += " - " + negated(c);
          } else {
            s += " + " + render(c, 1);
          }
          first = false;
        }
        return parent_prec > 1 ? "(" + s + ")" : s;
      }
      case ExprKind::Prod: {
        std::string s;
        bool first = true;
        for (const Expr& c : e.children()) {
          if (!first) s += "*";
          s += first && c.is_const() ? format_number(c.value()) : render(c, 2);
          first = false;
        }
        return parent_prec > 2 ? "(" + s + ")" : s;
      }
      case ExprKind::Pow: {
        if (style == PowerStyle::PowCall) {
          return "pow(" + render(e.children()[0], 0) + ", " + std::to_string(e.exponent()) + ")";
        }
        std::string s = render(e.children()[0], 4) + "^" + std::to_string(e.exponent());
        return parent_prec > 3 ? "(" + s + ")" : s;
      }
      case ExprKind::Func: {
        const std::string_view name =
            e.func_kind() == FuncKind::Log ? log_name : to_string(e.func_kind());
        return std::string(name) + "(" + render(e.children()[0], 0) + ")";
      }
    }
    return {};
  }
};

}  // namespace

std::string to_infix(const Expr& e, const std::function<std::string(int)>& var_text,
                     PowerStyle power_style, std::string_view log_name) {
  InfixPrinter p{var_text, power_style, log_name};
  return p.render(e, 0);
}

}  // namespace kktsynth
