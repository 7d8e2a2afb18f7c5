#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kktsynth/method.hpp"
#include "kktsynth/problem.hpp"

namespace kktsynth {

enum class ComponentKind : std::uint8_t { Resistor, Capacitor, Diode, OpAmp, Behavioral };

/**
 * One netlist element, kept small: synthesis of large sparse problems creates
 * tens of millions of these. The instance name is generated from an interned
 * prefix and up to two numeric fields ("RL3_17").
 *
 * Terminals: Resistor/Capacitor (n1 = n+, n2 = n-); Diode (n1 = anode,
 * n2 = cathode); OpAmp (n1 = in-, n2 = in+, n3 = out); Behavioral (n1 = n+,
 * n2 = n-, n3 = index into Netlist::expressions).
 */
struct Component {
  ComponentKind kind = ComponentKind::Resistor;
  std::uint8_t prefix = 0;
  std::int32_t a = -1;
  std::int32_t b = -1;
  std::int32_t n1 = 0, n2 = 0, n3 = 0;
  double value = 0.0;
};

struct TranSpec {
  double step = 0.0;
  double stop = 0.0;
};

class Netlist {
 public:
  std::string title;
  std::vector<Component> components;
  std::vector<std::string> expressions;  // behavioral source text, v(label) references
  TranSpec tran;
  std::vector<int> ic_nodes;    // capacitor terminals set to 0 V by .IC
  std::vector<int> save_nodes;  // .SAVE probes
  // node label -> optimization symbol, in creation order
  std::vector<std::pair<std::string, std::string>> provenance;

  Netlist();

  /// Node id for a label, creating it on first use. "0" is ground.
  int node(std::string_view label);
  /// Node id or -1.
  int find_node(std::string_view label) const;
  const std::string& label(int id) const { return labels_[id]; }
  std::size_t node_count() const { return labels_.size(); }  // including ground

  std::uint8_t intern_prefix(std::string_view prefix);
  const std::string& prefix(std::uint8_t id) const { return prefixes_[id]; }

  std::string name(const Component& c) const;

  void add_resistor(std::string_view prefix, int a, int b, int np, int nn, double ohms);
  void add_capacitor(std::string_view prefix, int a, int b, int np, int nn, double farads);
  void add_diode(std::string_view prefix, int a, int b, int anode, int cathode);
  void add_opamp(std::string_view prefix, int a, int b, int in_minus, int in_plus, int out);
  void add_behavioral(std::string_view prefix, int a, int b, int np, int nn, std::string expr);

  /// The SPICE card for one component, without a trailing newline.
  std::string card(const Component& c) const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> prefixes_;
};

/// Engineering-style value text: up to 12 significant digits, "1e4", "0.5", "1e-8".
std::string format_value(double v);

/// Builds the solver circuit for a normalized problem. The dynamics it realizes
/// under ideal op-amps equal those of `compile` with anti-windup off.
/// A non-positive tran.stop selects 20/gamma; a non-positive step selects stop/1e4.
/// Throws DegreeError, GainError.
Netlist synthesize(const Problem& p, const GradientSet& gs, SolverMethod m,
                   const CircuitGains& gains = {}, TranSpec tran = {});

void emit_spice(const Netlist& nl, std::ostream& os);
std::string emit_spice(const Netlist& nl);

struct ComponentCensus {
  std::size_t op_amps = 0;
  std::size_t resistors = 0;
  std::size_t capacitors = 0;
  std::size_t diodes = 0;
  std::size_t behavioral = 0;
  std::size_t nodes = 0;  // excluding ground

  std::size_t components() const {
    return op_amps + resistors + capacitors + diodes + behavioral;
  }
  bool operator==(const ComponentCensus&) const = default;
};

/// Counts by traversing the netlist.
ComponentCensus component_census(const Netlist& nl);

/// The same counts from the closed-form formula over the problem structure
/// (see docs/formats.md), without building a netlist.
ComponentCensus expected_census(const Problem& p, const GradientSet& gs, SolverMethod m);

/**
 * Reduces a synthesized netlist to its ideal-circuit ODE: op-amps are nullors
 * (in- held at in+ = 0 V), diodes are ideal switches, behavioral sources are
 * evaluated from their emitted text. The state is the capacitor voltages
 * V(n+) - V(n-) in insertion order.
 */
class IdealCircuit {
 public:
  explicit IdealCircuit(const Netlist& nl);
  ~IdealCircuit();
  IdealCircuit(IdealCircuit&&) noexcept;
  IdealCircuit& operator=(IdealCircuit&&) noexcept;

  std::size_t state_size() const;
  /// Capacitor names in state order.
  std::vector<std::string> state_names() const;

  std::vector<double> derivative(std::span<const double> state) const;
  /// All node voltages (indexed by node id) at a state.
  std::vector<double> node_voltages(std::span<const double> state) const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace kktsynth
