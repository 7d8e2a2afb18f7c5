// Ideal-element reading of a synthesized netlist, used to check that the
// circuit realizes the compiled dynamics. Deliberately independent of the
// Expr machinery: behavioral sources are re-parsed from their emitted text.

#include <charconv>
#include <cmath>
#include <string>

#include "kktsynth/errors.hpp"
#include "kktsynth/netlist.hpp"

namespace kktsynth {

namespace {

// --- behavioral expression text -------------------------------------------

struct BNode {
  enum Op { Num, Node, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Sin, Cos } op;
  double value = 0.0;
  int node = -1;
  int lhs = -1, rhs = -1;
};

class BParser {
 public:
  BParser(std::string_view text, const Netlist& nl, std::vector<BNode>& pool)
      : s_(text), nl_(nl), pool_(pool) {}

  int parse() {
    int root = expression();
    skip();
    if (pos_ != s_.size()) fail("trailing text");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("behavioral expression '" + std::string(s_) + "': " + what + " at offset " +
                std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  int push(BNode n) {
    pool_.push_back(n);
    return static_cast<int>(pool_.size()) - 1;
  }
  int binary(BNode::Op op, int l, int r) { return push({op, 0.0, -1, l, r}); }

  int expression() {
    int l = term();
    for (;;) {
      if (accept('+')) l = binary(BNode::Add, l, term());
      else if (accept('-')) l = binary(BNode::Sub, l, term());
      else return l;
    }
  }
  int term() {
    int l = unary();
    for (;;) {
      if (accept('*')) l = binary(BNode::Mul, l, unary());
      else if (accept('/')) l = binary(BNode::Div, l, unary());
      else return l;
    }
  }
  int unary() {
    if (accept('-')) return push({BNode::Neg, 0.0, -1, unary(), -1});
    if (accept('+')) return unary();
    int base = primary();
    if (accept('^')) return binary(BNode::Pow, base, unary());
    return base;
  }
  int primary() {
    skip();
    if (accept('(')) {
      int e = expression();
      expect(')');
      return e;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      double v = 0;
      auto [end, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("bad number");
      pos_ = static_cast<std::size_t>(end - s_.data());
      return push({BNode::Num, v, -1, -1, -1});
    }
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::string word(s_.substr(start, pos_ - start));
    if (word.empty()) fail("unexpected character");
    expect('(');
    if (word == "v" || word == "V") {
      skip();
      std::size_t ls = pos_;
      while (pos_ < s_.size() && s_[pos_] != ')') ++pos_;
      std::string label(s_.substr(ls, pos_ - ls));
      expect(')');
      int id = nl_.find_node(label);
      if (id < 0) fail("unknown node '" + label + "'");
      return push({BNode::Node, 0.0, id, -1, -1});
    }
    int a = expression();
    if (word == "pow") {
      expect(',');
      int b = expression();
      expect(')');
      return binary(BNode::Pow, a, b);
    }
    expect(')');
    if (word == "exp") return push({BNode::Exp, 0.0, -1, a, -1});
    if (word == "ln" || word == "log") return push({BNode::Log, 0.0, -1, a, -1});
    if (word == "sin") return push({BNode::Sin, 0.0, -1, a, -1});
    if (word == "cos") return push({BNode::Cos, 0.0, -1, a, -1});
    fail("unknown function '" + word + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  const Netlist& nl_;
  std::vector<BNode>& pool_;
};

double beval(const std::vector<BNode>& pool, int i, const std::vector<double>& v) {
  const BNode& n = pool[i];
  switch (n.op) {
    case BNode::Num: return n.value;
    case BNode::Node: return v[n.node];
    case BNode::Neg: return -beval(pool, n.lhs, v);
    case BNode::Add: return beval(pool, n.lhs, v) + beval(pool, n.rhs, v);
    case BNode::Sub: return beval(pool, n.lhs, v) - beval(pool, n.rhs, v);
    case BNode::Mul: return beval(pool, n.lhs, v) * beval(pool, n.rhs, v);
    case BNode::Div: return beval(pool, n.lhs, v) / beval(pool, n.rhs, v);
    case BNode::Pow: return std::pow(beval(pool, n.lhs, v), beval(pool, n.rhs, v));
    case BNode::Exp: return std::exp(beval(pool, n.lhs, v));
    case BNode::Log: return std::log(beval(pool, n.lhs, v));
    case BNode::Sin: return std::sin(beval(pool, n.lhs, v));
    case BNode::Cos: return std::cos(beval(pool, n.lhs, v));
  }
  return 0.0;
}

void collect_nodes(const std::vector<BNode>& pool, int i, std::vector<int>& out) {
  const BNode& n = pool[i];
  if (n.op == BNode::Node) out.push_back(n.node);
  if (n.lhs >= 0) collect_nodes(pool, n.lhs, out);
  if (n.rhs >= 0) collect_nodes(pool, n.rhs, out);
}

}  // namespace

// --- reduction -------------------------------------------------------------

struct IdealCircuit::Impl {
  struct Input {
    int node;
    double conductance;
  };
  enum class Feedback { R, C, SeriesRC, RDiode };
  struct Stage {
    bool is_source = false;
    // behavioral source: V(out) = V(ref) + expr
    int root = -1;
    int ref = 0;
    // op-amp
    int out = -1;
    std::vector<Input> inputs;
    Feedback fb = Feedback::R;
    double r = 0.0;
    int cap = -1;         // state index
    double cap_dir = 1;   // +1 when current into in- charges the state positively
    double c = 0.0;
    int q = -1;           // internal node of series R-C
    bool anode_is_out = true;
  };

  std::size_t n_nodes = 0;
  std::vector<std::string> cap_names;
  std::vector<BNode> pool;
  std::vector<Stage> presets;  // capacitor-fed stages, output (or q) from the state
  std::vector<Stage> schedule;

  void evaluate(std::span<const double> state, std::vector<double>& v,
                std::vector<double>* deriv) const {
    v.assign(n_nodes, 0.0);
    if (deriv) deriv->assign(cap_names.size(), 0.0);
    for (const Stage& st : presets) {
      // state = V(n+) - V(n-) with in- at 0 V
      double drop = st.cap_dir * state[st.cap];
      if (st.fb == Feedback::C) v[st.out] = -drop;
      else v[st.q] = -drop;
    }
    for (const Stage& st : schedule) {
      if (st.is_source) {
        v[st.out] = v[st.ref] + beval(pool, st.root, v);
        continue;
      }
      double i_in = 0.0;  // current into the virtual-ground node
      for (const Input& in : st.inputs) i_in += v[in.node] * in.conductance;
      switch (st.fb) {
        case Feedback::R:
          v[st.out] = -i_in * st.r;
          break;
        case Feedback::C:
          if (deriv) (*deriv)[st.cap] = st.cap_dir * i_in / st.c;
          break;
        case Feedback::SeriesRC:
          v[st.out] = v[st.q] - i_in * st.r;
          if (deriv) (*deriv)[st.cap] = st.cap_dir * i_in / st.c;
          break;
        case Feedback::RDiode: {
          double off = -i_in * st.r;
          bool conducts = st.anode_is_out ? off > 0.0 : off < 0.0;
          v[st.out] = conducts ? 0.0 : off;
          break;
        }
      }
    }
  }
};

IdealCircuit::IdealCircuit(const Netlist& nl) : impl_(std::make_unique<Impl>()) {
  Impl& im = *impl_;
  im.n_nodes = nl.node_count();
  const auto& comps = nl.components;

  std::vector<std::vector<int>> touching(im.n_nodes);
  std::vector<int> cap_state(comps.size(), -1);
  std::vector<int> driver(im.n_nodes, -1);  // op-amp or source driving a node
  std::vector<char> virtual_ground(im.n_nodes, 0);
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Component& c = comps[i];
    if (c.kind == ComponentKind::Capacitor) {
      cap_state[i] = static_cast<int>(im.cap_names.size());
      im.cap_names.push_back(nl.name(c));
    }
    if (c.kind == ComponentKind::OpAmp) {
      if (c.n2 != 0) throw Error(nl.name(c) + ": non-inverting input must be grounded");
      virtual_ground[c.n1] = 1;
      driver[c.n3] = static_cast<int>(i);
      touching[c.n1].push_back(static_cast<int>(i));
    } else if (c.kind == ComponentKind::Behavioral) {
      driver[c.n1] = static_cast<int>(i);
    } else {
      touching[c.n1].push_back(static_cast<int>(i));
      touching[c.n2].push_back(static_cast<int>(i));
    }
  }
  auto other = [&](const Component& c, int node) { return c.n1 == node ? c.n2 : c.n1; };

  struct Pending {
    Impl::Stage stage;
    std::vector<int> deps;
  };
  std::vector<Pending> pending;

  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Component& c = comps[i];
    Pending p;
    if (c.kind == ComponentKind::Behavioral) {
      p.stage.is_source = true;
      p.stage.out = c.n1;
      p.stage.ref = c.n2;
      BParser parser(nl.expressions[c.n3], nl, im.pool);
      p.stage.root = parser.parse();
      collect_nodes(im.pool, p.stage.root, p.deps);
      p.deps.push_back(c.n2);
      pending.push_back(std::move(p));
      continue;
    }
    if (c.kind != ComponentKind::OpAmp) continue;

    const int in = c.n1, out = c.n3;
    Impl::Stage& st = p.stage;
    st.out = out;
    std::vector<int> direct;
    int series_cap = -1, series_res = -1;
    for (int e : touching[in]) {
      if (e == static_cast<int>(i)) continue;
      const Component& x = comps[e];
      int o = other(x, in);
      if (o == out) {
        direct.push_back(e);
        continue;
      }
      // Series feedback through an undriven internal node.
      if (o != 0 && driver[o] < 0 && !virtual_ground[o] && touching[o].size() == 2) {
        int e2 = touching[o][0] == e ? touching[o][1] : touching[o][0];
        if (other(comps[e2], o) == out) {
          st.q = o;
          (x.kind == ComponentKind::Capacitor ? series_cap : series_res) = e;
          (comps[e2].kind == ComponentKind::Capacitor ? series_cap : series_res) = e2;
          continue;
        }
      }
      if (x.kind != ComponentKind::Resistor)
        throw Error(nl.name(c) + ": input element " + nl.name(x) + " is not a resistor");
      st.inputs.push_back({o, 1.0 / x.value});
      p.deps.push_back(o);
    }

    const std::string who = nl.name(c);
    if (st.q >= 0) {
      if (!direct.empty() || series_cap < 0 || series_res < 0 || series_cap == series_res)
        throw Error(who + ": unsupported feedback network");
      const Component& cap = comps[series_cap];
      if (comps[series_res].n1 != st.q && comps[series_res].n2 != st.q)
        throw Error(who + ": unsupported feedback network");
      if ((cap.n1 == in || cap.n2 == in) == false)
        throw Error(who + ": series capacitor must touch the summing node");
      st.fb = Impl::Feedback::SeriesRC;
      st.cap = cap_state[series_cap];
      st.cap_dir = cap.n1 == in ? 1.0 : -1.0;
      st.c = cap.value;
      st.r = comps[series_res].value;
    } else if (direct.size() == 1 && comps[direct[0]].kind == ComponentKind::Resistor) {
      st.fb = Impl::Feedback::R;
      st.r = comps[direct[0]].value;
    } else if (direct.size() == 1 && comps[direct[0]].kind == ComponentKind::Capacitor) {
      const Component& cap = comps[direct[0]];
      st.fb = Impl::Feedback::C;
      st.cap = cap_state[direct[0]];
      st.cap_dir = cap.n1 == in ? 1.0 : -1.0;
      st.c = cap.value;
    } else if (direct.size() == 2) {
      const Component* r = nullptr;
      const Component* d = nullptr;
      for (int e : direct) {
        if (comps[e].kind == ComponentKind::Resistor) r = &comps[e];
        if (comps[e].kind == ComponentKind::Diode) d = &comps[e];
      }
      if (!r || !d) throw Error(who + ": unsupported feedback network");
      st.fb = Impl::Feedback::RDiode;
      st.r = r->value;
      st.anode_is_out = d->n1 == out;
    } else {
      throw Error(who + ": unsupported feedback network");
    }
    pending.push_back(std::move(p));
  }

  // Capacitor voltages fix some nodes directly from the state (integrator
  // outputs, the internal node of series R-C); everything else is ordered so
  // each node is computed before it is read.
  std::vector<char> known(im.n_nodes, 0);
  known[0] = 1;
  for (std::size_t id = 0; id < im.n_nodes; ++id)
    if (virtual_ground[id]) known[id] = 1;
  for (const Pending& p : pending) {
    if (p.stage.is_source) continue;
    if (p.stage.fb == Impl::Feedback::C) {
      im.presets.push_back(p.stage);
      known[p.stage.out] = 1;
    } else if (p.stage.fb == Impl::Feedback::SeriesRC) {
      im.presets.push_back(p.stage);
      known[p.stage.q] = 1;
    }
  }
  std::vector<char> done(pending.size(), 0);
  std::size_t remaining = pending.size();
  while (remaining > 0) {
    bool progress = false;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (done[k]) continue;
      const Pending& p = pending[k];
      bool ready = true;
      for (int d : p.deps) ready = ready && known[d];
      if (!ready) continue;
      im.schedule.push_back(p.stage);
      known[p.stage.out] = 1;
      done[k] = 1;
      --remaining;
      progress = true;
    }
    if (!progress) throw Error("netlist has an algebraic loop the ideal reduction cannot order");
  }
}

IdealCircuit::~IdealCircuit() = default;
IdealCircuit::IdealCircuit(IdealCircuit&&) noexcept = default;
IdealCircuit& IdealCircuit::operator=(IdealCircuit&&) noexcept = default;

std::size_t IdealCircuit::state_size() const { return impl_->cap_names.size(); }

std::vector<std::string> IdealCircuit::state_names() const { return impl_->cap_names; }

std::vector<double> IdealCircuit::derivative(std::span<const double> state) const {
  if (state.size() != state_size())
    throw LengthMismatch("state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_size()));
  std::vector<double> v, d;
  impl_->evaluate(state, v, &d);
  return d;
}

std::vector<double> IdealCircuit::node_voltages(std::span<const double> state) const {
  if (state.size() != state_size())
    throw LengthMismatch("state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(state_size()));
  std::vector<double> v;
  impl_->evaluate(state, v, nullptr);
  return v;
}

}  // namespace kktsynth
