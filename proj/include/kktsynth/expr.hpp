#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kktsynth {

enum class ExprKind : std::uint8_t { Const, Var, Sum, Prod, Pow, Func };

/// Functions a behavioral voltage source can express directly.
enum class FuncKind : std::uint8_t { Sin, Cos, Exp, Log };

std::string_view to_string(FuncKind f);

/// Looks up a whitelisted function by name. Throws UnsupportedExpression.
FuncKind func_from_name(std::string_view name);

class Expr;

namespace detail {

struct ExprNode {
  double value = 0.0;
  mutable std::atomic<std::uint32_t> refs{1};
  std::int32_t index = 0;  // variable index, or exponent for Pow
  std::uint32_t size = 0;  // number of children
  ExprKind kind = ExprKind::Const;
  FuncKind func = FuncKind::Sin;

  const Expr* children() const;
};

}  // namespace detail

/**
 * Immutable, reference-counted symbolic expression over problem variables.
 *
 * Nodes are shared freely between expressions (a derivative typically reuses
 * subtrees of its source) and may be read concurrently from many threads.
 * A default-constructed Expr is empty and must be assigned before use.
 *
 * The raw factories below check the structural invariants only. Use the
 * folding builders (`add`, `mul`, `power`, `apply`) to get canonical trees.
 */
class Expr {
 public:
  Expr() noexcept = default;
  Expr(const Expr& other) noexcept;
  Expr(Expr&& other) noexcept : node_(std::exchange(other.node_, nullptr)) {}
  Expr& operator=(const Expr& other) noexcept;
  Expr& operator=(Expr&& other) noexcept;
  ~Expr();

  static Expr constant(double value);
  static Expr variable(int index);
  static Expr sum(std::span<const Expr> terms);
  static Expr prod(std::span<const Expr> factors);
  static Expr pow(Expr base, int exponent);
  static Expr func(FuncKind f, Expr arg);

  explicit operator bool() const noexcept { return node_ != nullptr; }

  ExprKind kind() const noexcept { return node_->kind; }
  double value() const noexcept { return node_->value; }
  int index() const noexcept { return node_->index; }
  int exponent() const noexcept { return node_->index; }
  FuncKind func_kind() const noexcept { return node_->func; }
  std::span<const Expr> children() const noexcept {
    return {node_->children(), node_->size};
  }

  bool is_const() const noexcept { return node_->kind == ExprKind::Const; }
  bool is_const(double v) const noexcept { return is_const() && value() == v; }

  /// Identity of the underlying node (shared subtrees compare equal).
  const void* id() const noexcept { return node_; }

 private:
  static Expr make(ExprKind kind, std::span<const Expr> children);

  detail::ExprNode* node_ = nullptr;
};

inline const Expr* detail::ExprNode::children() const {
  return reinterpret_cast<const Expr*>(this + 1);
}

// Folding builders: flatten nested sums/products, merge constants, drop
// additive zeros and multiplicative ones, collapse constant-only subtrees.
Expr add(std::vector<Expr> terms);
Expr mul(std::vector<Expr> factors);
Expr power(Expr base, int exponent);
Expr apply(FuncKind f, Expr arg);
Expr negate(Expr e);
Expr subtract(Expr a, Expr b);

/// Rebuilds `e` bottom-up through the folding builders.
Expr fold(const Expr& e);

/// Evaluates `e` at `point`. Throws DomainError, NonFinite, LengthMismatch.
double eval(const Expr& e, std::span<const double> point);

/// Symbolic partial derivative with respect to variable `var`, folded.
Expr differentiate(const Expr& e, int var);

/// All partial derivatives of `e`, one entry per variable that appears in
/// `e`, sorted by variable index.
std::vector<std::pair<int, Expr>> gradient(const Expr& e);

/// Polynomial degree, or nullopt when a function node has a non-constant
/// argument.
std::optional<int> degree(const Expr& e);

/// Sorted, de-duplicated list of variable indices referenced by `e`.
std::vector<int> variables(const Expr& e);

/// Largest variable index referenced by `e`, or -1.
int max_variable(const Expr& e);

/// Structural (tree) equality, exact on constants.
bool structurally_equal(const Expr& a, const Expr& b);

/// Number of nodes in the tree (shared subtrees counted each time).
std::size_t node_count(const Expr& e);

/// e = constant + sum(coef[t] * x[index[t]]) + sum(nonlinear).
struct AffineSplit {
  double constant = 0.0;
  std::vector<int> index;
  std::vector<double> coef;
  std::vector<Expr> nonlinear;

  bool is_affine() const { return nonlinear.empty(); }
};

/// Splits the top-level sum of `e` into its affine part and the rest.
/// Repeated variables are merged; `index` is sorted.
AffineSplit split_affine(const Expr& e);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

/// Renders `e` in infix syntax. `var_text(k)` supplies the text of a
/// variable; integer powers are printed with `power_style`.
enum class PowerStyle { Caret, PowCall };
std::string to_infix(const Expr& e, const std::function<std::string(int)>& var_text,
                     PowerStyle power_style = PowerStyle::Caret,
                     std::string_view log_name = "log");

}  // namespace kktsynth
