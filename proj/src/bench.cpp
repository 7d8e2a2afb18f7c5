#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "kktsynth/errors.hpp"
#include "kktsynth/verify.hpp"

namespace kktsynth {

using json = nlohmann::json;

double mean(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Quantiles quantiles(std::vector<double> xs) {
  Quantiles q;
  if (xs.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan, nan, nan, nan};
  }
  std::sort(xs.begin(), xs.end());
  // Linear interpolation between order statistics.
  auto at = [&](double f) {
    double pos = f * static_cast<double>(xs.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
  };
  q.q0 = xs.front();
  q.q10 = at(0.10);
  q.q25 = at(0.25);
  q.q50 = at(0.50);
  q.q75 = at(0.75);
  q.q90 = at(0.90);
  q.q100 = xs.back();
  return q;
}

unsigned bench_threads() {
  if (const char* env = std::getenv("KKTSYNTH_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// --- suites -----------------------------------------------------------------

namespace {

SolverMethod parse_method(const std::string& s) {
  auto m = method_from_name(s);
  if (!m) throw Error("suite: unknown method '" + s + "'");
  return *m;
}

}  // namespace

SuiteSpec parse_suite(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(std::string("suite: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("suite: top level must be an object");
  SuiteSpec s;
  try {
    if (j.contains("methods")) {
      s.methods.clear();
      for (const auto& m : j.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
      if (s.methods.empty()) throw Error("suite: 'methods' is empty");
    }
    if (j.contains("gains")) {
      const auto& g = j.at("gains");
      s.gains.r_gamma = g.value("r_gamma", s.gains.r_gamma);
      s.gains.c_gamma = g.value("c_gamma", s.gains.c_gamma);
      s.gains.r_rho = g.value("r_rho", s.gains.r_rho);
      s.gains.c_rho = g.value("c_rho", s.gains.c_rho);
      s.gains.r_o = g.value("r_o", s.gains.r_o);
      s.gains.r_lim = g.value("r_lim", s.gains.r_lim);
    }
    s.t_stop = j.value("t_stop", s.t_stop);
    s.rel_tol = j.value("rel_tol", s.rel_tol);
    s.horizon_extensions = j.value("horizon_extensions", s.horizon_extensions);
    s.gate_mean_rel_err_pct = j.value("gate_mean_rel_err_pct", s.gate_mean_rel_err_pct);
    if (!j.contains("instances") || !j.at("instances").is_array())
      throw Error("suite: missing 'instances' array");
    int index = 0;
    for (const auto& in : j.at("instances")) {
      BenchInstance b;
      ++index;
      b.id = in.value("id", "inst" + std::to_string(index));
      b.spec.seed = in.value("seed", static_cast<std::uint64_t>(index));
      b.spec.n = in.at("n").get<int>();
      b.spec.m_lin = in.value("m_lin", 0);
      b.spec.m_quad = in.value("m_quad", 0);
      b.spec.p_eq = in.value("p_eq", 0);
      auto d = density_from_name(in.value("density", std::string("dense")));
      if (!d) throw Error("suite: instance '" + b.id + "': density must be sparse or dense");
      b.spec.density = *d;
      if (b.spec.n < 1 || b.spec.m_lin < 0 || b.spec.m_quad < 0 || b.spec.p_eq < 0)
        throw Error("suite: instance '" + b.id + "': sizes must be non-negative and n >= 1");
      s.instances.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("suite: ") + e.what());
  }
  if (s.instances.empty()) throw Error("suite: no instances");
  s.gains.validate();
  return s;
}

SuiteSpec default_suite() {
  SuiteSpec s;
  std::mt19937_64 rng(20240607);
  std::uniform_int_distribution<int> n_dist(10, 100), lin_dist(2, 8), eq_dist(0, 4);
  for (int i = 0; i < 20; ++i) {
    BenchInstance b;
    b.id = "qp" + std::to_string(i + 1);
    b.spec.seed = 1000 + static_cast<std::uint64_t>(i);
    b.spec.n = n_dist(rng);
    b.spec.m_lin = lin_dist(rng);
    b.spec.p_eq = std::min(eq_dist(rng), 12 - b.spec.m_lin);
    b.spec.density = i % 2 ? Density::Sparse : Density::Dense;
    s.instances.push_back(b);
  }
  return s;
}

// --- running ----------------------------------------------------------------

namespace {

struct InstanceOutcome {
  std::vector<BenchRecord> records;
};

void run_method(const Problem& p, const GradientSet& gs, const SuiteSpec& suite,
                const std::optional<OracleSolution>& oracle, BenchRecord& rec) {
  const auto t0 = std::chrono::steady_clock::now();
  DynamicalSystem ds = compile(p, gs, rec.method, suite.gains);
  SimConfig cfg = SimConfig::defaults_for(suite.gains);
  if (suite.t_stop > 0) cfg.t_stop = suite.t_stop;
  cfg.rel_tol = suite.rel_tol;
  std::vector<double> s0 = initial_state(ds);
  SettleResult settle;
  for (int ext = 0;; ++ext) {
    Trajectory tr = integrate(ds, s0, cfg);
    settle = settle_analysis(tr, ds, cfg);
    if (settle.settled || ext >= suite.horizon_extensions) break;
    cfg.t_stop *= 2.0;
  }
  std::span<const double> fin(settle.final_state);
  std::span<const double> v = fin.first(ds.n_primal());
  DualValues d = ds.duals(fin);
  KktReport kkt = kkt_residuals(p, gs, v, d.lambda, d.mu);
  rec.settled = settle.settled;
  rec.settling_time_s = settle.settling_time;
  rec.kkt_pass = kkt.pass;
  rec.f_settled = p.objective_value(v);
  if (oracle) {
    rec.f_star = oracle->f_star;
    rec.rel_error_pct = relative_error_pct(rec.f_settled, rec.f_star);
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

InstanceOutcome run_instance(const BenchInstance& inst, const SuiteSpec& suite) {
  InstanceOutcome out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto blank = [&](SolverMethod m) {
    BenchRecord r;
    r.id = inst.id;
    r.n = inst.spec.n;
    r.m = inst.spec.m_lin + inst.spec.m_quad;
    r.p = inst.spec.p_eq;
    r.density = inst.spec.density;
    r.method = m;
    r.rel_error_pct = nan;
    r.f_settled = nan;
    r.f_star = nan;
    r.settling_time_s = nan;
    return r;
  };
  Problem p;
  GradientSet gs;
  std::optional<OracleSolution> oracle;
  std::string setup_error;
  try {
    p = normalize(generate_problem(inst.spec).problem);
    gs = differentiate(p);
    try {
      oracle = oracle_solve(p);
    } catch (const TooLarge&) {
      // certified by KKT residuals only
    }
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  for (SolverMethod m : suite.methods) {
    BenchRecord rec = blank(m);
    if (!setup_error.empty()) {
      rec.error = setup_error;
    } else {
      try {
        run_method(p, gs, suite, oracle, rec);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

BenchResult bench(const SuiteSpec& suite, unsigned threads) {
  if (suite.instances.empty()) throw Error("bench: empty suite");
  if (threads == 0) threads = bench_threads();
  threads = std::min<unsigned>(threads, static_cast<unsigned>(suite.instances.size()));

  std::vector<InstanceOutcome> outcomes(suite.instances.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < suite.instances.size(); i = next++)
      outcomes[i] = run_instance(suite.instances[i], suite);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BenchResult res;
  for (auto& o : outcomes)
    for (auto& r : o.records) res.records.push_back(std::move(r));
  res.summary = summarize(res.records, suite.gate_mean_rel_err_pct);
  return res;
}

namespace {

MethodSummary summarize_group(const std::vector<const BenchRecord*>& recs) {
  MethodSummary s;
  std::vector<double> times, errs;
  for (const BenchRecord* r : recs) {
    ++s.count;
    if (!r->error.empty()) continue;
    s.settled += r->settled;
    s.kkt_pass += r->kkt_pass;
    times.push_back(r->settling_time_s * 1e3);
    if (std::isfinite(r->rel_error_pct)) errs.push_back(r->rel_error_pct);
  }
  s.mean_time_ms = mean(times);
  s.median_time_ms = median(times);
  s.mean_rel_err_pct = mean(errs);
  s.median_rel_err_pct = median(errs);
  return s;
}

}  // namespace

BenchSummary summarize(const std::vector<BenchRecord>& records, double gate) {
  BenchSummary s;
  std::vector<const BenchRecord*> all;
  std::map<std::string, std::vector<const BenchRecord*>> by_method;
  std::vector<double> times, errs;
  for (const BenchRecord& r : records) {
    all.push_back(&r);
    by_method[std::string(to_string(r.method))].push_back(&r);
    if (!r.error.empty()) {
      ++s.failed;
      continue;
    }
    times.push_back(r.settling_time_s * 1e3);
    if (std::isfinite(r.rel_error_pct)) errs.push_back(r.rel_error_pct);
  }
  s.overall = summarize_group(all);
  for (const auto& [name, recs] : by_method) s.per_method[name] = summarize_group(recs);
  s.time_ms = quantiles(times);
  s.rel_err_pct = quantiles(errs);
  const bool accurate = errs.empty() || s.overall.mean_rel_err_pct <= gate;
  s.gate_pass = s.failed == 0 && s.overall.settled == records.size() && accurate;
  return s;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "id,n,m,p,density,method,settling_time_s,wall_time_s,rel_error_pct,kkt_pass,"
        "settled,f_settled,f_star,error\n";
  char buf[40];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const BenchRecord& r : records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    os << r.id << ',' << r.n << ',' << r.m << ',' << r.p << ',' << to_string(r.density) << ','
       << to_string(r.method) << ',' << num(r.settling_time_s) << ',' << num(r.wall_time_s)
       << ',' << num(r.rel_error_pct) << ',' << (r.kkt_pass ? "true" : "false") << ','
       << (r.settled ? "true" : "false") << ',' << num(r.f_settled) << ',' << num(r.f_star)
       << ",\"" << err << "\"\n";
  }
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json method_json(const MethodSummary& m) {
  return {{"count", m.count},
          {"settled", m.settled},
          {"kkt_pass", m.kkt_pass},
          {"mean_time_ms", number(m.mean_time_ms)},
          {"median_time_ms", number(m.median_time_ms)},
          {"mean_rel_err_pct", number(m.mean_rel_err_pct)},
          {"median_rel_err_pct", number(m.median_rel_err_pct)}};
}

json quantile_json(const Quantiles& q) {
  return {{"q0", number(q.q0)},   {"q10", number(q.q10)}, {"q25", number(q.q25)},
          {"q50", number(q.q50)}, {"q75", number(q.q75)}, {"q90", number(q.q90)},
          {"q100", number(q.q100)}};
}

}  // namespace

std::string summary_json(const BenchSummary& s) {
  json j;
  j["mean_time_ms"] = number(s.overall.mean_time_ms);
  j["median_time_ms"] = number(s.overall.median_time_ms);
  j["mean_rel_err_pct"] = number(s.overall.mean_rel_err_pct);
  j["median_rel_err_pct"] = number(s.overall.median_rel_err_pct);
  json per = json::object();
  for (const auto& [name, m] : s.per_method) per[name] = method_json(m);
  j["per_method"] = per;
  j["quantiles"] = {{"time_ms", quantile_json(s.time_ms)},
                    {"rel_err_pct", quantile_json(s.rel_err_pct)}};
  j["records"] = s.overall.count;
  j["settled"] = s.overall.settled;
  j["failed"] = s.failed;
  j["gate_pass"] = s.gate_pass;
  return j.dump(2) + "\n";
}

}  // namespace kktsynth
