#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "kktsynth/frontends.hpp"

namespace kktsynth {

namespace {

struct Token {
  std::string_view text;
  int column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

enum class Section {
  None, Name, ObjSense, Rows, Columns, Rhs, Ranges, Bounds, QuadObj, QcMatrix, End
};

enum class RowType { N, L, G, E };

struct Row {
  std::string name;
  RowType type;
  std::vector<std::pair<int, double>> linear;
  std::map<std::pair<int, int>, double> quad;
  double rhs = 0.0;
  std::optional<double> range;
};

struct Bound {
  double lower = 0.0;
  double upper = kInf;
};

class MpsReader {
 public:
  explicit MpsReader(std::string_view text) : text_(text) {}

  ParseResult run() {
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text_.size() && section_ != Section::End) {
      std::size_t eol = text_.find('\n', pos);
      if (eol == std::string_view::npos) eol = text_.size();
      std::string_view line = text_.substr(pos, eol - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      ++line_no;
      line_ = line_no;
      handle_line(line);
      if (eol == text_.size()) break;
      pos = eol + 1;
    }
    if (section_ != Section::End) {
      warn(line_, 1, "missing ENDATA");
    }
    if (!errors_.empty()) throw ParseError(errors_);
    return build();
  }

 private:
  void error(int line, int column, std::string msg) {
    errors_.push_back({ParseDiagnostic::Severity::Error, line, column, std::move(msg)});
  }
  void warn(int line, int column, std::string msg) {
    warnings_.push_back({ParseDiagnostic::Severity::Warning, line, column, std::move(msg)});
  }

  std::optional<double> number(const Token& t) {
    double v = 0.0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    if (!t.text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
      // Infinite bound values are written as large magnitudes or "Inf".
      if (t.text == "Inf" || t.text == "inf" || t.text == "+Inf" || t.text == "Infinity") {
        return kInf;
      }
      if (t.text == "-Inf" || t.text == "-inf" || t.text == "-Infinity") return -kInf;
      error(line_, t.column, "malformed number '" + std::string(t.text) + "'");
      return std::nullopt;
    }
    return v;
  }

  void malformed(const std::vector<Token>& toks, const char* expected) {
    error(line_, toks.empty() ? 1 : toks.front().column,
          std::string("malformed line, expected ") + expected +
              " (only free-format MPS is supported; convert fixed-column files to "
              "whitespace-delimited free format)");
  }

  void handle_line(std::string_view line) {
    if (line.empty() || line.front() == '*') return;
    auto toks = tokenize(line);
    if (toks.empty()) return;
    if (line.front() != ' ' && line.front() != '\t') {
      start_section(toks);
      return;
    }
    switch (section_) {
      case Section::None:
      case Section::Name:
        error(line_, toks.front().column, "data line outside of any section");
        break;
      case Section::ObjSense: objsense(toks); break;
      case Section::Rows: rows(toks); break;
      case Section::Columns: columns(toks); break;
      case Section::Rhs: rhs_or_ranges(toks, false); break;
      case Section::Ranges: rhs_or_ranges(toks, true); break;
      case Section::Bounds: bounds(toks); break;
      case Section::QuadObj: quad_entry(toks, objective_row_); break;
      case Section::QcMatrix: quad_entry(toks, qc_row_); break;
      case Section::End: break;
    }
  }

  void start_section(const std::vector<Token>& toks) {
    const std::string_view kw = toks.front().text;
    if (kw == "NAME") {
      section_ = Section::Name;
      if (toks.size() > 1) name_ = std::string(toks[1].text);
    } else if (kw == "OBJSENSE") {
      section_ = Section::ObjSense;
      if (toks.size() > 1) objsense({toks.begin() + 1, toks.end()});
    } else if (kw == "ROWS") {
      section_ = Section::Rows;
    } else if (kw == "COLUMNS") {
      section_ = Section::Columns;
    } else if (kw == "RHS") {
      section_ = Section::Rhs;
    } else if (kw == "RANGES") {
      section_ = Section::Ranges;
    } else if (kw == "BOUNDS") {
      section_ = Section::Bounds;
    } else if (kw == "QUADOBJ" || kw == "QMATRIX") {
      section_ = Section::QuadObj;
      if (!objective_row_) {
        error(line_, toks.front().column, std::string(kw) + " given but no objective row");
      }
    } else if (kw == "QCMATRIX") {
      section_ = Section::QcMatrix;
      qc_row_.reset();
      if (toks.size() != 2) {
        error(line_, toks.front().column, "QCMATRIX header must name exactly one row");
      } else {
        qc_row_ = find_row(toks[1]);
        if (qc_row_ && rows_[*qc_row_].type == RowType::N) {
          error(line_, toks[1].column, "QCMATRIX row must be a constraint row");
          qc_row_.reset();
        }
      }
    } else if (kw == "ENDATA") {
      section_ = Section::End;
    } else {
      error(line_, toks.front().column, "unknown section '" + std::string(kw) + "'");
      section_ = Section::None;
    }
  }

  void objsense(const std::vector<Token>& toks) {
    const auto s = toks.front().text;
    if (s == "MIN" || s == "MINIMIZE") return;
    if (s == "MAX" || s == "MAXIMIZE") {
      error(line_, toks.front().column,
            "maximization is not supported; negate the objective and minimize");
      return;
    }
    error(line_, toks.front().column, "unknown objective sense '" + std::string(s) + "'");
  }

  std::optional<int> find_row(const Token& t) {
    auto it = row_index_.find(std::string(t.text));
    if (it == row_index_.end()) {
      error(line_, t.column, "reference to undeclared row '" + std::string(t.text) + "'");
      return std::nullopt;
    }
    return it->second;
  }

  std::optional<int> find_col(const Token& t) {
    auto it = col_index_.find(std::string(t.text));
    if (it == col_index_.end()) {
      error(line_, t.column, "reference to undeclared column '" + std::string(t.text) + "'");
      return std::nullopt;
    }
    return it->second;
  }

  void rows(const std::vector<Token>& toks) {
    if (toks.size() != 2) return malformed(toks, "'<type> <row name>'");
    const std::string_view t = toks[0].text;
    RowType type;
    if (t == "N") type = RowType::N;
    else if (t == "L") type = RowType::L;
    else if (t == "G") type = RowType::G;
    else if (t == "E") type = RowType::E;
    else return error(line_, toks[0].column, "unknown row type '" + std::string(t) + "'");
    std::string name(toks[1].text);
    if (row_index_.count(name)) {
      return error(line_, toks[1].column, "duplicate row '" + name + "'");
    }
    if (type == RowType::N) {
      if (objective_row_) {
        return error(line_, toks[0].column,
                     "duplicate objective row '" + name + "' (only one N row is allowed)");
      }
      objective_row_ = static_cast<int>(rows_.size());
    }
    row_index_.emplace(name, static_cast<int>(rows_.size()));
    rows_.push_back({std::move(name), type, {}, {}, 0.0, std::nullopt});
  }

  int declare_column(const Token& t) {
    std::string name(t.text);
    auto it = col_index_.find(name);
    if (it != col_index_.end()) {
      if (it->second != static_cast<int>(columns_.size()) - 1) {
        warn(line_, t.column, "column '" + name + "' entries are not contiguous");
      }
      return it->second;
    }
    const int k = static_cast<int>(columns_.size());
    col_index_.emplace(name, k);
    columns_.push_back(std::move(name));
    return k;
  }

  void columns(const std::vector<Token>& toks) {
    if (toks.size() >= 2 && (toks[1].text == "'MARKER'" || toks[1].text == "MARKER")) {
      return error(line_, toks[1].column, "integer markers are not supported");
    }
    if (toks.size() != 1 && toks.size() != 3 && toks.size() != 5) {
      return malformed(toks, "'<column> [<row> <value> [<row> <value>]]'");
    }
    const int k = declare_column(toks[0]);
    for (std::size_t t = 1; t + 1 < toks.size(); t += 2) {
      auto r = find_row(toks[t]);
      auto v = number(toks[t + 1]);
      if (!r || !v) continue;
      auto& lin = rows_[*r].linear;
      auto dup = std::find_if(lin.begin(), lin.end(), [&](const auto& e) { return e.first == k; });
      if (dup != lin.end()) {
        warn(line_, toks[t].column, "duplicate entry for column '" + columns_[k] +
                                        "' in row '" + rows_[*r].name + "'; values summed");
        dup->second += *v;
      } else {
        lin.emplace_back(k, *v);
      }
    }
  }

  void rhs_or_ranges(const std::vector<Token>& toks, bool ranges) {
    // Optional leading set name: an odd token count means it is present.
    const std::size_t first = toks.size() % 2 == 1 ? 1 : 0;
    if (toks.size() - first < 2 || toks.size() - first > 4) {
      return malformed(toks, "'[<set>] <row> <value> [<row> <value>]'");
    }
    for (std::size_t t = first; t + 1 < toks.size(); t += 2) {
      auto r = find_row(toks[t]);
      auto v = number(toks[t + 1]);
      if (!r || !v) continue;
      Row& row = rows_[*r];
      if (ranges) {
        if (row.type == RowType::N) {
          warn(line_, toks[t].column, "range on objective row ignored");
        } else {
          row.range = *v;
        }
      } else {
        row.rhs = *v;
      }
    }
  }

  void bounds(const std::vector<Token>& toks) {
    if (toks.size() < 2 || toks.size() > 4) {
      return malformed(toks, "'<type> [<set>] <column> [<value>]'");
    }
    const std::string_view type = toks[0].text;
    const bool needs_value = type == "UP" || type == "LO" || type == "FX";
    const bool no_value = type == "FR" || type == "MI" || type == "PL";
    if (type == "BV" || type == "LI" || type == "UI" || type == "SC") {
      return error(line_, toks[0].column,
                   "bound type '" + std::string(type) + "' (integer/semicontinuous) is not supported");
    }
    if (!needs_value && !no_value) {
      return error(line_, toks[0].column, "unknown bound type '" + std::string(type) + "'");
    }
    std::optional<Token> col_tok;
    std::optional<Token> val_tok;
    if (needs_value) {
      if (toks.size() == 4) {
        col_tok = toks[2];
        val_tok = toks[3];
      } else if (toks.size() == 3) {
        col_tok = toks[1];
        val_tok = toks[2];
      } else {
        return malformed(toks, "'<type> [<set>] <column> <value>'");
      }
    } else {
      if (toks.size() == 4) {
        col_tok = toks[2];
      } else if (toks.size() == 3) {
        // Either "<set> <column>" or "<column> <ignored value>".
        col_tok = col_index_.count(std::string(toks[1].text)) ? toks[1] : toks[2];
      } else {
        col_tok = toks[1];
      }
    }
    auto k = find_col(*col_tok);
    if (!k) return;
    Bound& b = bounds_[*k];
    if (type == "FR") {
      b.lower = -kInf;
      b.upper = kInf;
      return;
    }
    if (type == "MI") {
      b.lower = -kInf;
      return;
    }
    if (type == "PL") {
      b.upper = kInf;
      return;
    }
    auto v = number(*val_tok);
    if (!v) return;
    if (type == "UP") {
      b.upper = *v;
      if (*v < 0.0 && b.lower == 0.0 && !lower_set_.count(*k)) {
        warn(line_, toks[0].column, "negative upper bound on '" + columns_[*k] +
                                        "' with default lower bound; lower bound set to -inf");
        b.lower = -kInf;
      }
    } else if (type == "LO") {
      b.lower = *v;
      lower_set_.insert(*k);
    } else {  // FX
      b.lower = *v;
      b.upper = *v;
      lower_set_.insert(*k);
    }
  }

  void quad_entry(const std::vector<Token>& toks, std::optional<int> row) {
    if (toks.size() != 3) return malformed(toks, "'<column> <column> <value>'");
    auto a = find_col(toks[0]);
    auto b = find_col(toks[1]);
    auto v = number(toks[2]);
    if (!a || !b || !v || !row) return;
    const auto key = std::minmax(*a, *b);
    auto& quad = rows_[*row].quad;
    auto [it, inserted] = quad.emplace(key, *v);
    if (!inserted && it->second != *v) {
      warn(line_, toks[2].column, "conflicting values for symmetric entry (" + columns_[*a] +
                                      ", " + columns_[*b] + "); last value kept");
      it->second = *v;
    }
  }

  // sign * (row activity) + offset
  Expr row_expr(const Row& row, double sign, double offset) {
    std::vector<Expr> terms;
    terms.reserve(row.linear.size() + row.quad.size() + 1);
    for (const auto& [k, a] : row.linear) {
      if (a != 0.0) terms.push_back(mul({Expr::constant(sign * a), var(k)}));
    }
    for (const auto& [key, q] : row.quad) {
      if (q == 0.0) continue;
      if (key.first == key.second) {
        terms.push_back(mul({Expr::constant(sign * 0.5 * q), power(var(key.first), 2)}));
      } else {
        terms.push_back(mul({Expr::constant(sign * q), var(key.first), var(key.second)}));
      }
    }
    terms.push_back(Expr::constant(offset));
    return add(std::move(terms));
  }

  const Expr& var(int k) { return vars_[static_cast<std::size_t>(k)]; }

  ParseResult build() {
    ParseResult out;
    Problem& p = out.problem;
    p.n_vars = static_cast<int>(columns_.size());
    p.var_names = columns_;
    for (int k = 0; k < p.n_vars; ++k) vars_.push_back(Expr::variable(k));

    if (objective_row_) {
      const Row& obj = rows_[*objective_row_];
      p.objective = row_expr(obj, 1.0, -obj.rhs);
    } else {
      warn(0, 0, "no objective row; minimizing the constant 0");
      p.objective = Expr::constant(0.0);
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const Row& row = rows_[r];
      if (row.type == RowType::N) continue;
      double lo = -kInf;
      double hi = kInf;
      switch (row.type) {
        case RowType::L:
          hi = row.rhs;
          if (row.range) lo = row.rhs - std::abs(*row.range);
          break;
        case RowType::G:
          lo = row.rhs;
          if (row.range) hi = row.rhs + std::abs(*row.range);
          break;
        case RowType::E:
          if (!row.range || *row.range == 0.0) {
            p.equalities.push_back(row_expr(row, 1.0, -row.rhs));
            p.eq_names.push_back(row.name);
            continue;
          }
          lo = *row.range > 0.0 ? row.rhs : row.rhs + *row.range;
          hi = *row.range > 0.0 ? row.rhs + *row.range : row.rhs;
          break;
        case RowType::N:
          break;
      }
      const bool both = std::isfinite(lo) && std::isfinite(hi);
      if (std::isfinite(lo)) {
        p.inequalities.push_back(row_expr(row, 1.0, -lo));
        p.ineq_names.push_back(both ? row.name + "_lo" : row.name);
      }
      if (std::isfinite(hi)) {
        p.inequalities.push_back(row_expr(row, -1.0, hi));
        p.ineq_names.push_back(both ? row.name + "_up" : row.name);
      }
    }
    std::vector<VariableBounds> vb(columns_.size());
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      auto it = bounds_.find(static_cast<int>(k));
      if (it != bounds_.end()) vb[k] = {it->second.lower, it->second.upper};
      else vb[k] = {0.0, kInf};
    }
    p.source_bounds = std::move(vb);
    out.warnings = std::move(warnings_);
    return out;
  }

  std::string_view text_;
  int line_ = 0;
  Section section_ = Section::None;
  std::string name_;
  std::vector<Row> rows_;
  std::unordered_map<std::string, int> row_index_;
  std::vector<std::string> columns_;
  std::unordered_map<std::string, int> col_index_;
  std::map<int, Bound> bounds_;
  std::set<int> lower_set_;
  std::optional<int> objective_row_;
  std::optional<int> qc_row_;
  std::vector<Expr> vars_;
  std::vector<ParseDiagnostic> errors_;
  std::vector<ParseDiagnostic> warnings_;
};

}  // namespace

ParseResult parse_mps(std::string_view text) { return MpsReader(text).run(); }

}  // namespace kktsynth
