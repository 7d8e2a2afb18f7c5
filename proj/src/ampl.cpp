#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "kktsynth/frontends.hpp"

namespace kktsynth {

std::string_view to_string(SourceFormat f) {
  return f == SourceFormat::Mps ? "mps" : "ampl";
}

std::optional<SourceFormat> detect_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".mps" || ext == ".MPS") return SourceFormat::Mps;
  if (ext == ".mod" || ext == ".MOD") return SourceFormat::AmplSubset;
  return std::nullopt;
}

std::optional<SourceFormat> format_from_name(std::string_view name) {
  if (name == "mps") return SourceFormat::Mps;
  if (name == "ampl" || name == "mod") return SourceFormat::AmplSubset;
  return std::nullopt;
}

std::string ParseDiagnostic::to_string() const {
  std::ostringstream os;
  os << (severity == Severity::Error ? "error" : "warning");
  if (line > 0) os << " at " << line << ":" << column;
  os << ": " << message;
  return os.str();
}

namespace {
std::string summarize(const std::vector<ParseDiagnostic>& d) {
  if (d.empty()) return "parse error";
  std::string s = d.front().to_string();
  if (d.size() > 1) s += " (+" + std::to_string(d.size() - 1) + " more)";
  return s;
}
}  // namespace

ParseError::ParseError(std::vector<ParseDiagnostic> diagnostics)
    : Error(summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

// ---------------------------------------------------------------------------
// AMPL subset

namespace {

enum class Tok {
  Ident, Number, Plus, Minus, Star, Slash, Caret, LParen, RParen, Semi, Colon, Comma,
  Ge, Le, Eq, End, Bad
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                src_[pos_] == '.')) {
          advance();
        }
        t.kind = Tok::Ident;
        t.text = std::string(src_.substr(start, pos_ - start));
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number(t);
      } else {
        lex_symbol(t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                                  src_[pos_] == '.')) {
      advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
      if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
        while (pos_ < look) advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          advance();
        }
      }
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
    t.kind = (ec == std::errc() && ptr == t.text.data() + t.text.size() &&
              std::isfinite(t.number))
                 ? Tok::Number
                 : Tok::Bad;
  }

  void lex_symbol(Token& t) {
    const char c = src_[pos_];
    const char n = pos_ + 1 < src_.size() ? src_[pos_ + 1] : '\0';
    auto two = [&](Tok k) {
      t.kind = k;
      t.text = std::string(src_.substr(pos_, 2));
      advance();
      advance();
    };
    auto one = [&](Tok k) {
      t.kind = k;
      t.text = std::string(1, c);
      advance();
    };
    switch (c) {
      case '+': return one(Tok::Plus);
      case '-': return one(Tok::Minus);
      case '*': return n == '*' ? two(Tok::Caret) : one(Tok::Star);
      case '/': return one(Tok::Slash);
      case '^': return one(Tok::Caret);
      case '(': return one(Tok::LParen);
      case ')': return one(Tok::RParen);
      case ';': return one(Tok::Semi);
      case ':': return one(Tok::Colon);
      case ',': return one(Tok::Comma);
      case '>': return n == '=' ? two(Tok::Ge) : one(Tok::Bad);
      case '<': return n == '=' ? two(Tok::Le) : one(Tok::Bad);
      case '=': return n == '=' ? two(Tok::Eq) : one(Tok::Eq);
      default: return one(Tok::Bad);
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct SyntaxError {
  int line;
  int column;
  std::string message;
};

class AmplParser {
 public:
  explicit AmplParser(std::string_view text) : toks_(Lexer(text).run()) {}

  ParseResult run() {
    while (peek().kind != Tok::End) {
      try {
        statement();
      } catch (const SyntaxError& e) {
        errors_.push_back({ParseDiagnostic::Severity::Error, e.line, e.column, e.message});
        recover();
      }
    }
    if (!errors_.empty()) throw ParseError(errors_);
    if (!objective_) {
      warnings_.push_back({ParseDiagnostic::Severity::Warning, 0, 0,
                           "no objective; minimizing the constant 0"});
      problem_.objective = Expr::constant(0.0);
    }
    problem_.n_vars = static_cast<int>(vars_.size());
    problem_.source_bounds = std::move(bounds_);
    return {std::move(problem_), std::move(warnings_)};
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (t.kind != Tok::End) ++pos_;
    return t;
  }
  [[noreturn]] static void fail(const Token& t, std::string msg) {
    throw SyntaxError{t.line, t.column, std::move(msg)};
  }
  const Token& expect(Tok k, const char* what) {
    if (peek().kind != k) {
      fail(peek(), std::string("expected ") + what + " but found '" + describe(peek()) + "'");
    }
    return next();
  }
  static std::string describe(const Token& t) {
    return t.kind == Tok::End ? "end of input" : t.text;
  }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    next();
    return true;
  }
  bool accept_word(std::string_view w) {
    if (peek().kind == Tok::Ident && peek().text == w) {
      next();
      return true;
    }
    return false;
  }

  void recover() {
    while (peek().kind != Tok::End && peek().kind != Tok::Semi) next();
    accept(Tok::Semi);
  }

  void statement() {
    const Token& head = peek();
    if (head.kind != Tok::Ident) fail(head, "expected a statement but found '" + describe(head) + "'");
    if (accept_word("var")) return declaration();
    if (accept_word("minimize")) return objective(head);
    if (head.text == "maximize") {
      fail(head, "maximize is not supported; negate the objective and minimize");
    }
    if (accept_word("subject")) {
      if (!accept_word("to")) fail(peek(), "expected 'to' after 'subject'");
      return constraint();
    }
    if (accept_word("s.t.")) return constraint();
    fail(head, "unsupported statement '" + head.text + "'");
  }

  void declaration() {
    const Token& name = expect(Tok::Ident, "a variable name");
    if (var_index_.count(name.text) || reserved(name.text)) {
      fail(name, "'" + name.text + "' is already declared");
    }
    VariableBounds b;
    for (;;) {
      accept(Tok::Comma);
      if (accept(Tok::Ge)) {
        b.lower = constant_expr("lower bound");
      } else if (accept(Tok::Le)) {
        b.upper = constant_expr("upper bound");
      } else {
        break;
      }
    }
    expect(Tok::Semi, "';'");
    var_index_.emplace(name.text, static_cast<int>(vars_.size()));
    vars_.push_back(Expr::variable(static_cast<int>(vars_.size())));
    problem_.var_names.push_back(name.text);
    bounds_.push_back(b);
  }

  double constant_expr(const char* what) {
    const Token& at = peek();
    Expr e = expression();
    if (!e.is_const()) fail(at, std::string(what) + " must be a constant expression");
    return e.value();
  }

  void objective(const Token& head) {
    if (objective_) fail(head, "multiple objectives; only one minimize statement is allowed");
    expect(Tok::Ident, "an objective name");
    expect(Tok::Colon, "':'");
    Expr f = expression();
    expect(Tok::Semi, "';'");
    problem_.objective = std::move(f);
    objective_ = true;
  }

  void constraint() {
    const Token& name = expect(Tok::Ident, "a constraint name");
    if (!row_names_.insert(name.text).second) {
      fail(name, "constraint '" + name.text + "' is already declared");
    }
    expect(Tok::Colon, "':'");
    Expr lhs = expression();
    const Token& op = peek();
    if (op.kind != Tok::Ge && op.kind != Tok::Le && op.kind != Tok::Eq) {
      fail(op, "expected '>=', '<=' or '=' but found '" + describe(op) + "'");
    }
    next();
    Expr rhs = expression();
    expect(Tok::Semi, "';'");
    if (op.kind == Tok::Ge) {
      problem_.inequalities.push_back(subtract(lhs, rhs));
      problem_.ineq_names.push_back(name.text);
    } else if (op.kind == Tok::Le) {
      problem_.inequalities.push_back(subtract(rhs, lhs));
      problem_.ineq_names.push_back(name.text);
    } else {
      problem_.equalities.push_back(subtract(lhs, rhs));
      problem_.eq_names.push_back(name.text);
    }
  }

  static bool reserved(const std::string& w) {
    return w == "var" || w == "minimize" || w == "maximize" || w == "subject" || w == "to" ||
           w == "s.t.";
  }

  Expr expression() {
    Expr acc = term();
    for (;;) {
      if (accept(Tok::Plus)) {
        acc = add({acc, term()});
      } else if (accept(Tok::Minus)) {
        acc = subtract(acc, term());
      } else {
        return acc;
      }
    }
  }

  Expr term() {
    Expr acc = unary();
    for (;;) {
      if (accept(Tok::Star)) {
        acc = mul({acc, unary()});
      } else if (peek().kind == Tok::Slash) {
        const Token& slash = next();
        Expr d = unary();
        if (!d.is_const()) fail(slash, "division by a non-constant expression");
        if (d.value() == 0.0) fail(slash, "division by zero");
        acc = mul({acc, Expr::constant(1.0 / d.value())});
      } else {
        return acc;
      }
    }
  }

  Expr unary() {
    if (accept(Tok::Minus)) return negate(unary());
    if (accept(Tok::Plus)) return unary();
    return power_expr();
  }

  Expr power_expr() {
    Expr base = primary();
    if (peek().kind != Tok::Caret) return base;
    next();
    const Token& at = peek();
    Expr ex = unary();
    if (!ex.is_const() || ex.value() != std::floor(ex.value())) {
      fail(at, "non-integer exponent; only integer powers are supported");
    }
    if (ex.value() < 0.0) fail(at, "negative exponent; reciprocal powers are not supported");
    if (ex.value() > 64.0) fail(at, "exponent too large");
    return power(std::move(base), static_cast<int>(ex.value()));
  }

  Expr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Number:
        next();
        return Expr::constant(t.number);
      case Tok::LParen: {
        next();
        Expr e = expression();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Ident: {
        next();
        if (peek().kind == Tok::LParen) {
          FuncKind f;
          try {
            f = func_from_name(t.text);
          } catch (const UnsupportedExpression& e) {
            fail(t, e.what());
          }
          next();
          Expr arg = expression();
          expect(Tok::RParen, "')'");
          return apply(f, std::move(arg));
        }
        auto it = var_index_.find(t.text);
        if (it == var_index_.end()) fail(t, "undeclared identifier '" + t.text + "'");
        return vars_[static_cast<std::size_t>(it->second)];
      }
      case Tok::Bad:
        fail(t, "unexpected character '" + t.text + "'");
      default:
        fail(t, "expected an expression but found '" + describe(t) + "'");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  Problem problem_;
  bool objective_ = false;
  std::vector<Expr> vars_;
  std::vector<VariableBounds> bounds_;
  std::unordered_map<std::string, int> var_index_;
  std::set<std::string> row_names_;
  std::vector<ParseDiagnostic> errors_;
  std::vector<ParseDiagnostic> warnings_;
};

bool valid_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return s != "var" && s != "minimize" && s != "maximize" && s != "subject" && s != "to";
}

// Picks unique identifiers, keeping the originals where they are valid.
std::vector<std::string> identifiers(const std::vector<std::string>& names, std::size_t count,
                                     const std::string& fallback, std::set<std::string>& used) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string s = i < names.size() ? names[i] : std::string();
    if (!valid_identifier(s) || used.count(s)) s = fallback + std::to_string(i + 1);
    while (used.count(s)) s += "_";
    used.insert(s);
    out.push_back(s);
  }
  return out;
}

}  // namespace

ParseResult parse_ampl_subset(std::string_view text) { return AmplParser(text).run(); }

ParseResult parse_file(const std::filesystem::path& path, std::optional<SourceFormat> format) {
  if (!format) format = detect_format(path);
  if (!format) {
    throw ParseError({{ParseDiagnostic::Severity::Error, 0, 0,
                       "cannot infer the input format of '" + path.string() +
                           "' (use .mps or .mod, or pass --format)"}});
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError({{ParseDiagnostic::Severity::Error, 0, 0,
                       "cannot open '" + path.string() + "'"}});
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return *format == SourceFormat::Mps ? parse_mps(text) : parse_ampl_subset(text);
}

std::string emit_ampl(const Problem& p) {
  std::set<std::string> used;
  const auto vars = identifiers(p.var_names, static_cast<std::size_t>(p.n_vars), "x", used);
  const auto ineqs = identifiers(p.ineq_names, p.inequalities.size(), "g", used);
  const auto eqs = identifiers(p.eq_names, p.equalities.size(), "h", used);
  auto var_text = [&](int k) { return vars[static_cast<std::size_t>(k)]; };

  std::ostringstream os;
  for (int k = 0; k < p.n_vars; ++k) {
    os << "var " << vars[k];
    if (p.source_bounds && !p.bounds_materialized) {
      const auto& b = (*p.source_bounds)[k];
      if (std::isfinite(b.lower)) os << " >= " << format_number(b.lower);
      if (std::isfinite(b.upper)) os << " <= " << format_number(b.upper);
    }
    os << ";\n";
  }
  std::string obj = "obj";
  while (used.count(obj)) obj += "_";
  os << "minimize " << obj << ": "
     << to_infix(p.objective ? p.objective : Expr::constant(0.0), var_text) << ";\n";
  for (std::size_t i = 0; i < p.inequalities.size(); ++i) {
    os << "subject to " << ineqs[i] << ": " << to_infix(p.inequalities[i], var_text)
       << " >= 0;\n";
  }
  for (std::size_t j = 0; j < p.equalities.size(); ++j) {
    os << "subject to " << eqs[j] << ": " << to_infix(p.equalities[j], var_text) << " = 0;\n";
  }
  return os.str();
}

}  // namespace kktsynth
