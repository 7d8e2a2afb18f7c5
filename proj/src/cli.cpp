#include "kktsynth/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "kktsynth/errors.hpp"
#include "kktsynth/frontends.hpp"
#include "kktsynth/method.hpp"
#include "kktsynth/netlist.hpp"
#include "kktsynth/simulator.hpp"
#include "kktsynth/verify.hpp"

namespace kktsynth {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct RunConfig {
  std::string input;
  std::string format;
  std::string method = "aug-lagrangian";
  CircuitGains gains;
  double t_stop = 0.0;  // 0: 20/gamma
  double rel_tol = kSolveRelTol;
  double settle_rel = 1e-4;
  std::string solution_path;
  std::string netlist_path;
  std::string waveform_path;
  std::string out_dir = ".";
  bool anti_windup = true;
  bool early_stop = true;
  bool oracle_check = true;
  bool strict = false;
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("input", cfg.input, "Problem file (.mps or .mod)")->required();
  cmd->add_option("--format", cfg.format, "Input format: mps | ampl");
  cmd->add_option("--method", cfg.method, "penalty | primal-dual | aug-lagrangian");
  cmd->add_option("--r-gamma", cfg.gains.r_gamma, "Integrator input resistor R_gamma (ohm)");
  cmd->add_option("--c-gamma", cfg.gains.c_gamma, "Integrator capacitor C_gamma (F)");
  cmd->add_option("--r-rho", cfg.gains.r_rho, "Method-stage resistor R_rho (ohm)");
  cmd->add_option("--c-rho", cfg.gains.c_rho, "Method-stage capacitor C_rho (F)");
  cmd->add_option("--r-o", cfg.gains.r_o, "Reference resistor R_o (ohm)");
  cmd->add_option("--r-lim", cfg.gains.r_lim, "Diode-stage resistor R_lim (ohm)");
  cmd->add_option("--t-stop", cfg.t_stop, "Transient stop time (s); default 20/gamma");
}

std::optional<SolverMethod> method_of(const RunConfig& cfg, std::ostream& err) {
  auto m = method_from_name(cfg.method);
  if (!m) err << "error: unknown method '" << cfg.method
              << "' (expected penalty, primal-dual or aug-lagrangian)\n";
  return m;
}

// file:line:col: severity: message, the form editors jump to.
std::string located(const std::string& file, const ParseDiagnostic& d) {
  std::string s = file + ":";
  if (d.line > 0) s += std::to_string(d.line) + ":" + std::to_string(d.column) + ":";
  s += d.severity == ParseDiagnostic::Severity::Error ? " error: " : " warning: ";
  return s + d.message;
}

// Parse, normalize, differentiate; diagnostics go to err.
struct Loaded {
  Problem problem;
  GradientSet gradients;
};

Loaded load(const RunConfig& cfg, std::ostream& err) {
  std::optional<SourceFormat> fmt;
  if (!cfg.format.empty()) {
    fmt = format_from_name(cfg.format);
    if (!fmt) throw Error("unknown format '" + cfg.format + "' (expected mps or ampl)");
  }
  ParseResult pr = parse_file(cfg.input, fmt);
  for (const ParseDiagnostic& d : pr.warnings) err << located(cfg.input, d) << "\n";
  Loaded l;
  l.problem = normalize(std::move(pr.problem));
  l.gradients = differentiate(l.problem);
  return l;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::ios_base::failure("write to '" + path + "' failed");
}

ojson gains_json(const CircuitGains& g) {
  return {{"r_gamma", g.r_gamma}, {"c_gamma", g.c_gamma}, {"r_rho", g.r_rho},
          {"c_rho", g.c_rho},     {"r_o", g.r_o},         {"r_lim", g.r_lim},
          {"gamma", g.gamma()},   {"kappa_p", g.kappa_p()}, {"kappa_i", g.kappa_i()}};
}

ojson kkt_json(const KktReport& k) {
  return {{"stationarity", k.stationarity}, {"primal_ineq", k.primal_ineq},
          {"primal_eq", k.primal_eq},       {"dual_feas", k.dual_feas},
          {"comp_slack", k.comp_slack},     {"tolerance", k.tolerance},
          {"pass", k.pass}};
}

void print_census(std::ostream& out, const ComponentCensus& c) {
  out << "op-amps:    " << c.op_amps << "\n"
      << "resistors:  " << c.resistors << "\n"
      << "capacitors: " << c.capacitors << "\n"
      << "diodes:     " << c.diodes << "\n"
      << "behavioral: " << c.behavioral << "\n"
      << "components: " << c.components() << "\n"
      << "nodes:      " << c.nodes << "\n";
}

// --- solve --------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto method = method_of(cfg, err);
  if (!method) return kExitUsage;
  Loaded l = load(cfg, err);
  const Problem& p = l.problem;

  DynamicalSystem ds = compile(p, l.gradients, *method, cfg.gains, cfg.anti_windup);
  if (!cfg.netlist_path.empty()) {
    Netlist nl = synthesize(p, l.gradients, *method, cfg.gains, {0.0, cfg.t_stop});
    std::ofstream f(cfg.netlist_path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot open '" + cfg.netlist_path + "' for writing");
    emit_spice(nl, f);
  }

  SimConfig sim = SimConfig::defaults_for(cfg.gains);
  if (cfg.t_stop > 0) sim.t_stop = cfg.t_stop;
  sim.rel_tol = cfg.rel_tol;
  sim.settle_rel = cfg.settle_rel;
  sim.early_stop = cfg.early_stop;

  const auto wall0 = std::chrono::steady_clock::now();
  Trajectory tr;
  try {
    tr = integrate(ds, initial_state(ds), sim);
  } catch (const Divergence& e) {
    err << "error: " << e.what() << "\n";
    return kExitNotSettled;
  } catch (const StepUnderflow& e) {
    err << "error: " << e.what() << "\n";
    return kExitNotSettled;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  SettleResult settle = settle_analysis(tr, ds, sim);

  std::span<const double> fin(settle.final_state);
  std::span<const double> v = fin.first(ds.n_primal());
  DualValues d = ds.duals(fin);
  KktReport kkt = kkt_residuals(p, l.gradients, v, d.lambda, d.mu);

  ojson j;
  ojson vars = ojson::object();
  for (int k = 0; k < p.n_vars; ++k) vars[p.var_name(k)] = v[k];
  j["variables"] = vars;
  j["duals"] = {{"lambda", d.lambda}, {"mu", d.mu}};
  j["objective"] = p.objective_value(v);
  j["settling_time_s"] = settle.settling_time;
  j["settled"] = settle.settled;
  j["kkt"] = kkt_json(kkt);
  j["method"] = std::string(to_string(*method));
  j["gains"] = gains_json(cfg.gains);
  j["simulation"] = {{"t_stop", sim.t_stop},
                     {"t_end", tr.times.back()},
                     {"accepted_steps", tr.accepted_steps},
                     {"rejected_steps", tr.rejected_steps},
                     {"stopped_early", tr.stopped_early},
                     {"wall_time_s", wall}};
  if (cfg.oracle_check) {
    try {
      OracleSolution o = oracle_solve(p);
      double dx = 0.0;
      for (int k = 0; k < p.n_vars; ++k) dx = std::max(dx, std::abs(v[k] - o.x_star[k]));
      j["oracle"] = {{"f_star", o.f_star},
                     {"x_star", o.x_star},
                     {"max_abs_dx", dx},
                     {"rel_error_pct", relative_error_pct(p.objective_value(v), o.f_star)}};
    } catch (const Error& e) {
      j["oracle"] = {{"unavailable", e.what()}};
    }
  }

  const std::string text = j.dump(2) + "\n";
  if (cfg.solution_path.empty()) out << text;
  else write_file(cfg.solution_path, text);

  if (!cfg.waveform_path.empty()) {
    std::ofstream f(cfg.waveform_path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot open '" + cfg.waveform_path + "' for writing");
    write_waveform_csv(f, tr, ds);
  }

  if (!settle.settled) {
    err << "error: the transient did not settle by t = " << format_number(tr.times.back())
        << " s; try a longer --t-stop\n";
    return kExitNotSettled;
  }
  if (!kkt.pass) {
    const bool lenient = *method == SolverMethod::Penalty && !cfg.strict;
    err << (lenient ? "warning: " : "error: ") << "KKT check failed (worst residual "
        << format_number(kkt.worst()) << " > " << format_number(kkt.tolerance) << ")";
    if (lenient) err << "; the penalty method leaves a steady-state error (use --strict to fail)";
    err << "\n";
    return lenient ? kExitOk : kExitKktFail;
  }
  return kExitOk;
}

// --- synth --------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto method = method_of(cfg, err);
  if (!method) return kExitUsage;
  Loaded l = load(cfg, err);
  Netlist nl = synthesize(l.problem, l.gradients, *method, cfg.gains, {0.0, cfg.t_stop});
  std::string path = cfg.netlist_path;
  if (path.empty()) path = fs::path(cfg.input).filename().replace_extension(".cir").string();
  {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot open '" + path + "' for writing");
    emit_spice(nl, f);
    if (!f) throw std::ios_base::failure("write to '" + path + "' failed");
  }
  out << "netlist:    " << path << "\n";
  print_census(out, component_census(nl));
  return kExitOk;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  SuiteSpec suite;
  if (cfg.input == "default") {
    suite = default_suite();
  } else {
    std::ifstream f(cfg.input, std::ios::binary);
    if (!f) {
      err << "error: cannot open suite file '" << cfg.input << "'\n";
      return kExitUsage;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    suite = parse_suite(ss.str());
  }
  if (cfg.t_stop > 0) suite.t_stop = cfg.t_stop;

  BenchResult res = bench(suite);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "bench.csv", std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot write bench.csv in '" + cfg.out_dir + "'");
    write_bench_csv(f, res.records);
  }
  const std::string summary = summary_json(res.summary);
  write_file((fs::path(cfg.out_dir) / "summary.json").string(), summary);
  out << summary;
  for (const BenchRecord& r : res.records)
    if (!r.error.empty()) err << "instance " << r.id << " (" << to_string(r.method) << "): " << r.error << "\n";
  return res.summary.gate_pass ? kExitOk : kExitBenchGate;
}

// --- check --------------------------------------------------------------------

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Loaded l = load(cfg, err);
  const Problem& p = l.problem;
  int max_deg = 0;
  for (const Expr& e : p.inequalities) max_deg = std::max(max_deg, degree(e).value_or(99));
  for (const Expr& e : p.equalities) max_deg = std::max(max_deg, degree(e).value_or(99));
  out << "variables:    " << p.n_vars << "\n"
      << "inequalities: " << p.m() << "\n"
      << "equalities:   " << p.p() << "\n"
      << "max degree:   " << max_deg << "\n";
  if (cfg.oracle_check) {
    try {
      OracleSolution o = oracle_solve(p);
      out << "oracle f*:    " << format_number(o.f_star) << "\n";
      for (int k = 0; k < p.n_vars; ++k)
        out << "  " << p.var_name(k) << " = " << format_number(o.x_star[k]) << "\n";
    } catch (const Error& e) {
      out << "oracle:       unavailable (" << e.what() << ")\n";
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthesize and simulate analog KKT solver circuits for QPs", "kktsynth"};
  app.require_subcommand(1);
  RunConfig cfg;

  CLI::App* solve = app.add_subcommand("solve", "Simulate the solver circuit and report the solution");
  add_common(solve, cfg);
  solve->add_option("--rel-tol", cfg.rel_tol, "Integrator relative tolerance");
  solve->add_option("--settle-rel", cfg.settle_rel, "Settling band relative to the final value");
  solve->add_option("--solution", cfg.solution_path, "Write the solution JSON here (default: stdout)");
  solve->add_option("--netlist", cfg.netlist_path, "Also write the SPICE netlist here");
  solve->add_option("--waveform", cfg.waveform_path, "Write the trajectory CSV here");
  solve->add_flag("--anti-windup,!--no-anti-windup", cfg.anti_windup, "Clamp dual integrators at 0 (default on)");
  solve->add_flag("--early-stop,!--no-early-stop", cfg.early_stop, "Stop once stationary (default on)");
  solve->add_flag("--oracle-check,!--no-oracle-check", cfg.oracle_check, "Compare with the exact oracle when small (default on)");
  solve->add_flag("--strict", cfg.strict, "Fail the penalty method on its KKT residual");

  CLI::App* synth = app.add_subcommand("synth", "Write the SPICE netlist and print its component census");
  add_common(synth, cfg);
  synth->add_option("-o,--netlist", cfg.netlist_path, "Output .cir path (default: <input>.cir)");

  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a benchmark suite ('default' for the built-in one)");
  bench_cmd->add_option("input", cfg.input, "Suite JSON file or 'default'")->required();
  bench_cmd->add_option("--out-dir", cfg.out_dir, "Directory for bench.csv and summary.json");
  bench_cmd->add_option("--t-stop", cfg.t_stop, "Initial transient stop time (s)");

  CLI::App* check = app.add_subcommand("check", "Parse and validate a problem, report its shape");
  check->add_option("input", cfg.input, "Problem file (.mps or .mod)")->required();
  check->add_option("--format", cfg.format, "Input format: mps | ampl");
  check->add_flag("--oracle-check,!--no-oracle-check", cfg.oracle_check, "Solve with the exact oracle when small (default on)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve) return cmd_solve(cfg, out, err);
    if (*synth) return cmd_synth(cfg, out, err);
    if (*bench_cmd) return cmd_bench(cfg, out, err);
    if (*check) return cmd_check(cfg, out, err);
  } catch (const ParseError& e) {
    for (const ParseDiagnostic& d : e.diagnostics()) err << located(cfg.input, d) << "\n";
    if (e.diagnostics().empty()) err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DegreeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDegree;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace kktsynth
