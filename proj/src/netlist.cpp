#include "kktsynth/netlist.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "kktsynth/errors.hpp"

namespace kktsynth {

namespace {

// Coefficients below this are structural zeros (a 1e9 resistor ratio is not a circuit).
constexpr double kTiny = 1e-9;

void append_int(std::string& out, long v) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

}  // namespace

std::string format_value(double v) {
  if (v == 0.0) return "0";
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  std::string s(buf);
  auto epos = s.find('e');
  std::string mant = s.substr(0, epos);
  int exp = std::atoi(s.c_str() + epos + 1);
  if (exp >= -3 && exp <= 3) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
  }
  if (mant.find('.') != std::string::npos) {
    while (mant.back() == '0') mant.pop_back();
    if (mant.back() == '.') mant.pop_back();
  }
  return mant + "e" + std::to_string(exp);
}

// ---------------------------------------------------------------------------
// Netlist container

Netlist::Netlist() {
  labels_.push_back("0");
  ids_.emplace("0", 0);
}

int Netlist::node(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(labels_.back(), id);
  return id;
}

int Netlist::find_node(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  return it == ids_.end() ? -1 : it->second;
}

std::uint8_t Netlist::intern_prefix(std::string_view prefix) {
  for (std::size_t i = 0; i < prefixes_.size(); ++i)
    if (prefixes_[i] == prefix) return static_cast<std::uint8_t>(i);
  if (prefixes_.size() >= 255) throw Error("too many component name prefixes");
  prefixes_.emplace_back(prefix);
  return static_cast<std::uint8_t>(prefixes_.size() - 1);
}

std::string Netlist::name(const Component& c) const {
  std::string out = prefixes_[c.prefix];
  if (c.a >= 0) append_int(out, c.a);
  if (c.b >= 0) {
    out.push_back('_');
    append_int(out, c.b);
  }
  return out;
}

namespace {

Component make(Netlist& nl, ComponentKind k, std::string_view prefix, int a, int b) {
  Component c;
  c.kind = k;
  c.prefix = nl.intern_prefix(prefix);
  c.a = a;
  c.b = b;
  return c;
}

}  // namespace

void Netlist::add_resistor(std::string_view prefix, int a, int b, int np, int nn, double ohms) {
  Component c = make(*this, ComponentKind::Resistor, prefix, a, b);
  c.n1 = np;
  c.n2 = nn;
  c.value = ohms;
  components.push_back(c);
}

void Netlist::add_capacitor(std::string_view prefix, int a, int b, int np, int nn,
                            double farads) {
  Component c = make(*this, ComponentKind::Capacitor, prefix, a, b);
  c.n1 = np;
  c.n2 = nn;
  c.value = farads;
  components.push_back(c);
}

void Netlist::add_diode(std::string_view prefix, int a, int b, int anode, int cathode) {
  Component c = make(*this, ComponentKind::Diode, prefix, a, b);
  c.n1 = anode;
  c.n2 = cathode;
  components.push_back(c);
}

void Netlist::add_opamp(std::string_view prefix, int a, int b, int in_minus, int in_plus,
                        int out) {
  Component c = make(*this, ComponentKind::OpAmp, prefix, a, b);
  c.n1 = in_minus;
  c.n2 = in_plus;
  c.n3 = out;
  components.push_back(c);
}

void Netlist::add_behavioral(std::string_view prefix, int a, int b, int np, int nn,
                             std::string expr) {
  Component c = make(*this, ComponentKind::Behavioral, prefix, a, b);
  c.n1 = np;
  c.n2 = nn;
  c.n3 = static_cast<std::int32_t>(expressions.size());
  expressions.push_back(std::move(expr));
  components.push_back(c);
}

namespace {

void append_card(const Netlist& nl, const Component& c, std::string& out) {
  out += nl.name(c);
  auto node = [&](int id) {
    out.push_back(' ');
    out += nl.label(id);
  };
  switch (c.kind) {
    case ComponentKind::Resistor:
    case ComponentKind::Capacitor:
      node(c.n1);
      node(c.n2);
      out.push_back(' ');
      out += format_value(c.value);
      break;
    case ComponentKind::Diode:
      node(c.n1);
      node(c.n2);
      out += " DIDEAL";
      break;
    case ComponentKind::OpAmp:
      node(c.n1);
      node(c.n2);
      node(c.n3);
      out += " OPAMP";
      break;
    case ComponentKind::Behavioral:
      node(c.n1);
      node(c.n2);
      out += " V=";
      out += nl.expressions[c.n3];
      break;
  }
}

}  // namespace

std::string Netlist::card(const Component& c) const {
  std::string out;
  append_card(*this, c, out);
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

// Structure of one constraint row as the circuit sees it. `sign` is +1 for
// inequalities (stage input current g/R_o) and -1 for equalities (-h/R_o).
struct RowPlan {
  std::vector<std::pair<int, double>> linear;  // signed, merged, above kTiny
  double constant = 0.0;                       // signed, 0 when below kTiny
  std::optional<Expr> nonlinear;               // signed
  std::size_t jac_const = 0;
  std::size_t jac_var = 0;
  bool needs_inverter = false;  // some constant partial is positive
};

RowPlan plan_row(const Expr& row, const SparseGradient& sg, double sign) {
  RowPlan plan;
  AffineSplit s = split_affine(row);
  for (std::size_t t = 0; t < s.index.size(); ++t) {
    double c = sign * s.coef[t];
    if (std::abs(c) >= kTiny) plan.linear.emplace_back(s.index[t], c);
  }
  if (std::abs(s.constant) >= kTiny) plan.constant = sign * s.constant;
  if (!s.nonlinear.empty()) {
    Expr nl = add(std::move(s.nonlinear));
    if (sign < 0) nl = negate(nl);
    if (!nl.is_const()) {
      plan.nonlinear = nl;
    } else if (std::abs(nl.value()) >= kTiny) {
      plan.constant += nl.value();
    }
  }
  for (const Expr& e : sg.entry) {
    if (e.is_const()) {
      if (std::abs(e.value()) < kTiny) continue;
      ++plan.jac_const;
      if (e.value() > 0) plan.needs_inverter = true;
    } else {
      ++plan.jac_var;
    }
  }
  return plan;
}

std::string row_name(const std::vector<std::string>& names, int i, const char* stem) {
  if (i < static_cast<int>(names.size()) && !names[i].empty()) return names[i];
  return stem + std::to_string(i + 1);
}

std::string vref(int k) { return "v(v" + std::to_string(k + 1) + ")"; }

void check_degree(const Problem& p) {
  auto check = [](const Expr& e, const std::string& what) {
    auto d = degree(e);
    if (!d || *d > 2)
      throw DegreeError(what + " has degree " + (d ? std::to_string(*d) : "non-polynomial") +
                        "; only linear and quadratic constraints can be synthesized");
  };
  for (int i = 0; i < p.m(); ++i)
    check(p.inequalities[i], "inequality " + std::to_string(i + 1));
  for (int j = 0; j < p.p(); ++j) check(p.equalities[j], "equality " + std::to_string(j + 1));
}

}  // namespace

Netlist synthesize(const Problem& p, const GradientSet& gs, SolverMethod m,
                   const CircuitGains& gains, TranSpec tran) {
  gains.validate();
  check_degree(p);
  if (gs.grad_f.size() != static_cast<std::size_t>(p.n_vars) ||
      gs.grad_g.size() != p.inequalities.size() || gs.grad_h.size() != p.equalities.size())
    throw LengthMismatch("gradient set does not match the problem dimensions");

  const int n = p.n_vars, mm = p.m(), pp = p.p();
  const double r_o = gains.r_o, r_g = gains.r_gamma;

  Netlist nl;
  nl.title = "kktsynth " + std::string(to_string(m)) + " solver, N=" + std::to_string(n) +
             " M=" + std::to_string(mm) + " P=" + std::to_string(pp);
  nl.tran.stop = tran.stop > 0 ? tran.stop : 20.0 / gains.gamma();
  nl.tran.step = tran.step > 0 ? tran.step : nl.tran.stop / 1e4;

  std::vector<int> s_node(n), u_node(n), v_node(n);
  for (int k = 0; k < n; ++k) {
    const int K = k + 1;
    const std::string ks = std::to_string(K);
    s_node[k] = nl.node("s" + ks);
    u_node[k] = nl.node("u" + ks);
    int a = nl.node("a" + ks);
    v_node[k] = nl.node("v" + ks);
    nl.provenance.emplace_back("v" + ks, p.var_name(k));

    // Integrator: C_gamma holds V(s) - V(u) = x_k, u = -x_k.
    nl.add_opamp("XI", K, -1, s_node[k], 0, u_node[k]);
    nl.add_capacitor("CG", K, -1, s_node[k], u_node[k], gains.c_gamma);
    // Unity inverter restores v = x_k.
    nl.add_opamp("XV", K, -1, a, 0, v_node[k]);
    nl.add_resistor("RVA", K, -1, u_node[k], a, r_o);
    nl.add_resistor("RVB", K, -1, a, v_node[k], r_o);

    const Expr& df = gs.grad_f[k];
    if (!(df.is_const() && df.value() == 0.0)) {
      int fg = nl.node("fg" + ks);
      nl.add_behavioral("BF", K, -1, fg, 0, to_infix(negate(df), vref, PowerStyle::PowCall, "ln"));
      nl.add_resistor("RF", K, -1, fg, s_node[k], r_g);
    }
  }

  // References only for the signs some row constant needs.
  std::vector<RowPlan> plans;
  plans.reserve(static_cast<std::size_t>(mm + pp));
  bool need_vp = false, need_vn = false;
  for (int r = 0; r < mm + pp; ++r) {
    const bool ineq = r < mm;
    plans.push_back(plan_row(ineq ? p.inequalities[r] : p.equalities[r - mm],
                             ineq ? gs.grad_g[r] : gs.grad_h[r - mm], ineq ? 1.0 : -1.0));
    need_vp = need_vp || plans.back().constant > 0;
    need_vn = need_vn || plans.back().constant < 0;
  }
  int vp = 0, vn = 0;
  if (need_vp) {
    vp = nl.node("vref");
    nl.add_behavioral("BREFP", -1, -1, vp, 0, "1");
  }
  if (need_vn) {
    vn = nl.node("vrefn");
    nl.add_behavioral("BREFN", -1, -1, vn, 0, "-1");
  }

  for (int r = 0; r < mm + pp; ++r) {
    const bool ineq = r < mm;
    const int R = r + 1;
    const int idx = ineq ? r + 1 : r - mm + 1;  // i or j, 1-based
    const std::string rs = std::to_string(R), is = std::to_string(idx);
    const SparseGradient& sg = ineq ? gs.grad_g[r] : gs.grad_h[r - mm];
    RowPlan& plan = plans[static_cast<std::size_t>(r)];

    int c = nl.node("c" + rs);
    int out = nl.node((ineq ? "z" : "mu") + is);
    nl.add_opamp("XC", R, -1, c, 0, out);
    for (auto [k, coef] : plan.linear)
      nl.add_resistor("RL", R, k + 1, coef > 0 ? v_node[k] : u_node[k], c, r_o / std::abs(coef));
    if (plan.constant != 0.0)
      nl.add_resistor("RK", R, -1, plan.constant > 0 ? vp : vn, c, r_o / std::abs(plan.constant));
    if (plan.nonlinear) {
      int gq = nl.node("gq" + rs);
      nl.add_behavioral("BQ", R, -1, gq, 0,
                        to_infix(*plan.nonlinear, vref, PowerStyle::PowCall, "ln"));
      nl.add_resistor("RQ", R, -1, gq, c, r_o);
    }

    // Method stage feedback. Capacitors are oriented so V(n+) - V(n-) is the
    // dual integrator state (z_i or w_j).
    switch (m) {
      case SolverMethod::Penalty:
        nl.add_resistor("RP", R, -1, c, out, gains.r_rho);
        break;
      case SolverMethod::PrimalDual:
        if (ineq) nl.add_capacitor("CR", R, -1, c, out, gains.c_rho);
        else nl.add_capacitor("CR", R, -1, out, c, gains.c_rho);
        break;
      case SolverMethod::AugmentedLagrangian: {
        int q = nl.node("q" + rs);
        if (ineq) nl.add_capacitor("CR", R, -1, c, q, gains.c_rho);
        else nl.add_capacitor("CR", R, -1, q, c, gains.c_rho);
        nl.add_resistor("RP", R, -1, q, out, gains.r_rho);
        break;
      }
    }

    // Dual node: lam_i = min(0, -V(z_i)) through the diode clipper, mu_j directly.
    int dual = out;
    if (ineq) {
      int d = nl.node("d" + is);
      dual = nl.node("lam" + is);
      nl.add_opamp("XD", idx, -1, d, 0, dual);
      nl.add_resistor("RLI", idx, -1, out, d, gains.r_lim);
      nl.add_resistor("RLF", idx, -1, d, dual, gains.r_lim);
      nl.add_diode("D", idx, -1, dual, d);
      nl.provenance.emplace_back("lam" + is, "lambda(" + row_name(p.ineq_names, r, "g") + ")");
    } else {
      nl.provenance.emplace_back("mu" + is, "mu(" + row_name(p.eq_names, r - mm, "h") + ")");
    }
    int dual_neg = -1;
    if (plan.needs_inverter) {
      int b = nl.node("b" + rs);
      dual_neg = nl.node((ineq ? "lamn" : "mun") + is);
      nl.add_opamp("XN", R, -1, b, 0, dual_neg);
      nl.add_resistor("RNA", R, -1, dual, b, r_o);
      nl.add_resistor("RNB", R, -1, b, dual_neg, r_o);
    }

    // Jacobian injections: current -dual * dg/dx_k / R_gamma into s_k.
    const std::string dual_ref = "v(" + nl.label(dual) + ")";
    for (std::size_t t = 0; t < sg.nnz(); ++t) {
      const int k = sg.index[t];
      const Expr& e = sg.entry[t];
      if (e.is_const()) {
        double cv = e.value();
        if (std::abs(cv) < kTiny) continue;
        nl.add_resistor("RJ", R, k + 1, cv > 0 ? dual_neg : dual, s_node[k], r_g / std::abs(cv));
      } else {
        int gj = nl.node("gj" + rs + "_" + std::to_string(k + 1));
        nl.add_behavioral("BJ", R, k + 1, gj, 0,
                          "-" + dual_ref + "*(" +
                              to_infix(e, vref, PowerStyle::PowCall, "ln") + ")");
        nl.add_resistor("RJ", R, k + 1, gj, s_node[k], r_g);
      }
    }
  }

  std::vector<char> seen(nl.node_count(), 0);
  for (const Component& c : nl.components) {
    if (c.kind != ComponentKind::Capacitor) continue;
    for (int id : {c.n1, c.n2}) {
      if (id != 0 && !seen[id]) {
        seen[id] = 1;
        nl.ic_nodes.push_back(id);
      }
    }
  }
  nl.save_nodes = v_node;
  return nl;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

void emit_node_list(std::ostream& os, const Netlist& nl, const char* directive,
                    const std::vector<int>& ids, const char* suffix) {
  constexpr std::size_t kPerLine = 8;
  for (std::size_t i = 0; i < ids.size(); i += kPerLine) {
    os << directive;
    for (std::size_t t = i; t < std::min(ids.size(), i + kPerLine); ++t)
      os << " V(" << nl.label(ids[t]) << ")" << suffix;
    os << '\n';
  }
}

}  // namespace

void emit_spice(const Netlist& nl, std::ostream& os) {
  os << nl.title << '\n';
  for (const auto& [label, symbol] : nl.provenance) os << "* " << label << " = " << symbol << '\n';
  os << ".SUBCKT OPAMP inm inp out PARAMS: AOL=1e6\n"
        "E1 out 0 inp inm {AOL}\n"
        ".ENDS OPAMP\n"
        ".MODEL DIDEAL D(IS=1e-14 N=0.01)\n";
  std::string line;
  for (const Component& c : nl.components) {
    line.clear();
    append_card(nl, c, line);
    line.push_back('\n');
    os << line;
  }
  emit_node_list(os, nl, ".IC", nl.ic_nodes, "=0");
  os << ".TRAN " << format_value(nl.tran.step) << ' ' << format_value(nl.tran.stop) << '\n';
  emit_node_list(os, nl, ".SAVE", nl.save_nodes, "");
  os << ".END\n";
}

std::string emit_spice(const Netlist& nl) {
  std::ostringstream os;
  emit_spice(nl, os);
  return os.str();
}

// ---------------------------------------------------------------------------
// Census

ComponentCensus component_census(const Netlist& nl) {
  ComponentCensus c;
  std::vector<char> used(nl.node_count(), 0);
  auto mark = [&](int id) { used[id] = 1; };
  for (const Component& x : nl.components) {
    switch (x.kind) {
      case ComponentKind::Resistor: ++c.resistors; break;
      case ComponentKind::Capacitor: ++c.capacitors; break;
      case ComponentKind::Diode: ++c.diodes; break;
      case ComponentKind::OpAmp:
        ++c.op_amps;
        mark(x.n3);
        break;
      case ComponentKind::Behavioral: ++c.behavioral; break;
    }
    mark(x.n1);
    mark(x.n2);
  }
  for (std::size_t id = 1; id < used.size(); ++id) c.nodes += used[id];
  return c;
}

ComponentCensus expected_census(const Problem& p, const GradientSet& gs, SolverMethod m) {
  const std::size_t n = static_cast<std::size_t>(p.n_vars);
  const std::size_t mm = p.inequalities.size(), pp = p.equalities.size(), rows = mm + pp;

  std::size_t f_terms = 0;
  for (const Expr& e : gs.grad_f)
    if (!(e.is_const() && e.value() == 0.0)) ++f_terms;

  std::size_t lin = 0, konst = 0, quad = 0, jc = 0, jv = 0, inv = 0;
  bool pos = false, neg = false;
  for (std::size_t r = 0; r < rows; ++r) {
    const bool ineq = r < mm;
    RowPlan plan = plan_row(ineq ? p.inequalities[r] : p.equalities[r - mm],
                            ineq ? gs.grad_g[r] : gs.grad_h[r - mm], ineq ? 1.0 : -1.0);
    lin += plan.linear.size();
    konst += plan.constant != 0.0;
    pos = pos || plan.constant > 0;
    neg = neg || plan.constant < 0;
    quad += plan.nonlinear.has_value();
    jc += plan.jac_const;
    jv += plan.jac_var;
    inv += plan.needs_inverter;
  }

  const bool has_cap = m != SolverMethod::Penalty;
  const bool has_res = m != SolverMethod::PrimalDual;
  const std::size_t refs = std::size_t{pos} + std::size_t{neg};

  ComponentCensus c;
  c.op_amps = 2 * n + rows + mm + inv;
  c.resistors = 2 * n + f_terms + lin + konst + quad + (has_res ? rows : 0) + 2 * mm + 2 * inv +
                jc + jv;
  c.capacitors = n + (has_cap ? rows : 0);
  c.diodes = mm;
  c.behavioral = f_terms + refs + quad + jv;
  c.nodes = 4 * n + f_terms + refs + 2 * rows +
            (m == SolverMethod::AugmentedLagrangian ? rows : 0) + quad + 2 * mm + 2 * inv + jv;
  return c;
}

}  // namespace kktsynth
