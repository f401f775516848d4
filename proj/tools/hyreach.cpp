// SPDX-License-Identifier: Apache-2.0
// hyreach: bounded reachability and parameter synthesis for hybrid automata.
//
// Exit status: 0 delta-sat (or success), 1 unsat, 2 budget exceeded,
// 3 usage, parse or validation error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hyreach/benchmarks.hpp"
#include "hyreach/synthesis.hpp"
#include "hyreach/trajectory.hpp"

using namespace hyreach;
using json = nlohmann::json;

namespace {

enum Status { kSat = 0, kUnsat = 1, kBudget = 2, kUsage = 3 };

struct UsageError : Error {
  using Error::Error;
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int status_of(VerdictKind k) {
  switch (k) {
    case VerdictKind::DeltaSat: return kSat;
    case VerdictKind::Unsat: return kUnsat;
    case VerdictKind::BudgetExceeded: return kBudget;
  }
  return kUsage;
}

void add_query_options(CLI::App* c, QueryArgs& a) {
  c->add_option("model", a.model, "model file")->required();
  c->add_option("--goal", a.goal, "goal, e.g. \"mode=4\" or \"mode=7 && u>=1.18\"")->required();
  c->add_option("-k", a.k, "maximum number of jumps")->capture_default_str();
  c->add_option("--dwell", a.dwell, "dwell-time bound per mode (M)")->capture_default_str();
  c->add_option("--delta", a.delta, "precision; default from HYREACH_DELTA or 1e-4");
  c->add_option("--set", a.sets, "override: name=value or name=[lo,hi]; repeatable");
  c->add_option("--max-splits", a.max_splits, "branch budget")->capture_default_str();
  c->add_option("--workers", a.workers, "solver threads; 1 is deterministic")->capture_default_str();
}

std::string init_description(const QueryArgs& a) {
  std::string s;
  for (const auto& x : a.sets) s += (s.empty() ? "" : " ") + x;
  return s.empty() ? "model defaults" : s;
}

json run_record(const QueryArgs& a, const std::string& kind, const ReachResult& r) {
  return json{{"model", a.model},
              {"query", kind},
              {"goal", a.goal},
              {"init", init_description(a)},
              {"k", r.k},
              {"delta", a.delta},
              {"vars", r.var_count},
              {"verdict", to_string(r.kind)},
              {"seconds", std::stod(fmt6(r.seconds))},
              {"stats", r.stats.to_kv()}};
}

int cmd_check(const QueryArgs& a, bool as_json, const std::string& witness_out) {
  ReachQuery q = build_query(a);
  ReachResult r = check_reach(q);
  if (as_json) {
    json j = run_record(a, "reach", r);
    if (r.path) j["path"] = *r.path;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << to_string(r.kind) << "\n";
    std::cout << "vars " << r.var_count << " k " << r.k << " time " << fmt6(r.seconds) << "s\n";
    std::cout << "stats " << r.stats.to_kv() << "\n";
  }
  if (r.trace) {
    std::string text = r.trace->serialize();
    if (!witness_out.empty()) {
      std::ofstream out(witness_out);
      if (!out) throw UsageError("cannot write '" + witness_out + "'");
      out << text;
    } else if (!as_json) {
      std::cout << text;
    }
  }
  return status_of(r.kind);
}

Polarity parse_polarity(const std::string& s) {
  if (s == "above") return Polarity::ReachableAbove;
  if (s == "below") return Polarity::ReachableBelow;
  throw UsageError("polarity must be above or below");
}

std::pair<double, double> parse_range(const std::string& s) {
  auto c = s.find(':');
  if (c == std::string::npos) throw UsageError("range must be lo:hi");
  try {
    std::size_t n1 = 0, n2 = 0;
    double lo = std::stod(s.substr(0, c), &n1), hi = std::stod(s.substr(c + 1), &n2);
    if (n1 != c || n2 != s.size() - c - 1) throw UsageError("");
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("range must be lo:hi, got '" + s + "'");
  }
}

json probes_json(const std::vector<Probe>& h) {
  json a = json::array();
  for (const auto& p : h)
    a.push_back({{"value", std::stod(fmt6(p.value))}, {"verdict", to_string(p.verdict)}, {"seconds", std::stod(fmt6(p.seconds))}});
  return a;
}

void print_history(const std::vector<Probe>& h) {
  for (const auto& p : h)
    std::cout << "probe " << fmt6(p.value) << " " << to_string(p.verdict) << " " << fmt6(p.seconds) << "s\n";
}

struct SynthArgs {
  std::string param, range, polarity = "above";
  double width = 0.0;
  bool monotone = false;
};

int cmd_synth(const QueryArgs& a, const SynthArgs& s, bool as_json) {
  ThresholdQuery t;
  t.reach = build_query(a);
  t.param = s.param;
  std::tie(t.lo, t.hi) = parse_range(s.range);
  t.width = s.width;
  t.polarity = parse_polarity(s.polarity);
  t.check_monotone = s.monotone;
  try {
    ThresholdResult r = binary_search_threshold(t);
    if (as_json) {
      std::cout << json{{"param", s.param},
                        {"threshold", std::stod(fmt6(r.threshold))},
                        {"bracket", {std::stod(fmt6(r.lo)), std::stod(fmt6(r.hi))}},
                        {"history", probes_json(r.history)},
                        {"warnings", r.warnings}}
                       .dump()
                << "\n";
    } else {
      print_history(r.history);
      for (const auto& w : r.warnings) std::cout << "warning " << w << "\n";
      std::cout << "threshold " << s.param << " " << fmt6(r.threshold) << " bracket [" << fmt6(r.lo) << ", "
                << fmt6(r.hi) << "]\n";
    }
    return kSat;
  } catch (const SearchAbortedError& e) {
    print_history(e.history());
    std::cerr << "hyreach: " << e.what() << "\n";
    return kBudget;
  }
}

struct SweepArgs {
  std::string p1, p2, range, polarity = "above";
  std::vector<double> samples;
  double width = 0.0;
};

int cmd_sweep(const QueryArgs& a, const SweepArgs& s, bool as_json) {
  SweepQuery q;
  q.reach = build_query(a);
  q.p1 = s.p1;
  q.p2 = s.p2;
  q.samples = s.samples;
  std::tie(q.lo, q.hi) = parse_range(s.range);
  q.width = s.width;
  q.polarity = parse_polarity(s.polarity);
  BoundaryFit f = sweep_boundary(q);
  if (as_json) {
    json pts = json::array();
    for (auto [x, y] : f.samples) pts.push_back({std::stod(fmt6(x)), std::stod(fmt6(y))});
    std::cout << json{{"a", std::stod(fmt6(f.a))}, {"c", std::stod(fmt6(f.c))}, {"samples", pts},
                      {"residual_sum", std::stod(fmt6(f.residual_sum))}, {"warnings", f.warnings},
                      {"stats", f.stats.to_kv()}}
                     .dump()
              << "\n";
  } else {
    std::cout << f.report();
    std::cout << "boundary " << fmt6(f.a) << "*" << s.p1 << " + " << s.p2 << " = " << fmt6(f.c) << "\n";
  }
  return kSat;
}

struct TraceArgs {
  std::string model, witness, out;
  double duration = 1.0, step = 0.01;
  std::vector<std::string> resets, sets;
};

int cmd_trace(const TraceArgs& a) {
  if (!(a.step > 0)) throw UsageError("sample step must be positive");
  if (!(a.duration >= 0)) throw UsageError("duration must be non-negative");
  HybridAutomaton ha = load_model(a.model);
  for (const auto& s : a.sets) {
    Setting st = parse_setting(s);
    ha.set(st.name, st.lo, st.hi);
  }
  std::ifstream in(a.witness);
  if (!in) throw UsageError("cannot open witness file '" + a.witness + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  WitnessTrace w = WitnessTrace::parse(ss.str());
  TrajectoryOptions opt;
  opt.duration = a.duration;
  opt.step = a.step;
  for (const auto& r : a.resets) {
    auto eq = r.find('=');
    if (eq == std::string::npos) throw UsageError("--reset-every expects var=period");
    try {
      opt.periodic_zero.emplace_back(r.substr(0, eq), std::stod(r.substr(eq + 1)));
    } catch (const std::logic_error&) {
      throw UsageError("bad period in '" + r + "'");
    }
  }
  auto rows = simulate_witness(ha, w, opt);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw UsageError("cannot write '" + a.out + "'");
  }
  std::ostream& os = a.out.empty() ? std::cout : file;
  os << "t,mode";
  for (const auto& v : ha.vars) os << "," << v.name;
  os << "\n";
  for (const auto& r : rows) {
    os << fmt17(r.t) << "," << r.mode;
    for (double x : r.x) os << "," << fmt17(x);
    os << "\n";
  }
  return kSat;
}

int cmd_suite(const std::string& manifest, const std::string& tag, unsigned jobs, bool as_json) {
  auto cases = load_suite(manifest);
  auto entries = run_suite(cases, tag == "all" ? "" : tag, jobs, [&](const SuiteEntry& e) {
    if (!as_json) std::cout << format_entry(e) << std::endl;
  });
  bool ok = true;
  json arr = json::array();
  for (const auto& e : entries) {
    ok = ok && e.pass;
    arr.push_back({{"name", e.name}, {"expect", to_string(e.expect)}, {"verdict", to_string(e.got)},
                   {"vars", e.vars}, {"seconds", std::stod(fmt6(e.seconds))}, {"pass", e.pass}, {"note", e.note}});
  }
  if (as_json) std::cout << arr.dump() << "\n";
  else std::cout << (ok ? "suite passed" : "suite failed") << "\n";
  return ok ? kSat : kUnsat;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded reachability and parameter synthesis for hybrid automata"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output");

  QueryArgs qa;
  qa.delta = default_delta();
  std::string witness_out;
  auto* check = app.add_subcommand("check", "decide bounded reachability");
  add_query_options(check, qa);
  check->add_option("--witness-out", witness_out, "write the witness trace here");

  QueryArgs sa;
  sa.delta = default_delta();
  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "binary search for a parameter threshold");
  add_query_options(synth, sa);
  synth->add_option("--param", syn.param, "parameter to search")->required();
  synth->add_option("--range", syn.range, "search interval lo:hi")->required();
  synth->add_option("--polarity", syn.polarity, "side where the goal is reachable: above | below")
      ->capture_default_str();
  synth->add_option("--width", syn.width, "stop when the bracket is this narrow; default delta");
  synth->add_flag("--check-monotone", syn.monotone, "probe both ends and the middle first");

  QueryArgs wa;
  wa.delta = default_delta();
  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "threshold of p2 for several p1 values, then a line fit");
  add_query_options(sweep, wa);
  sweep->add_option("--p1", sw.p1, "sampled parameter")->required();
  sweep->add_option("--samples", sw.samples, "values of p1")->required()->delimiter(',');
  sweep->add_option("--p2", sw.p2, "searched parameter")->required();
  sweep->add_option("--range", sw.range, "search interval for p2, lo:hi")->required();
  sweep->add_option("--polarity", sw.polarity, "above | below")->capture_default_str();
  sweep->add_option("--width", sw.width, "bracket width; default delta");

  TraceArgs ta;
  auto* trace = app.add_subcommand("trace", "plain simulation of a witness as CSV (not an enclosure)");
  trace->add_option("model", ta.model, "model file")->required();
  trace->add_option("witness", ta.witness, "witness trace from check")->required();
  trace->add_option("--duration", ta.duration, "simulated time")->capture_default_str();
  trace->add_option("--step", ta.step, "sample step")->capture_default_str();
  trace->add_option("--reset-every", ta.resets, "var=period: zero var periodically; repeatable");
  trace->add_option("--set", ta.sets, "the overrides given to check; repeatable");
  trace->add_option("-o,--out", ta.out, "output file; default stdout");

  std::string manifest, tag = "fast";
  unsigned jobs = 1;
  auto* suite = app.add_subcommand("suite", "run a benchmark manifest");
  suite->add_option("manifest", manifest, "suite file")->required();
  suite->add_option("--tag", tag, "fast | long | all")->capture_default_str();
  suite->add_option("--jobs", jobs, "cases run at once")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*check) return cmd_check(qa, as_json, witness_out);
    if (*synth) return cmd_synth(sa, syn, as_json);
    if (*sweep) return cmd_sweep(wa, sw, as_json);
    if (*trace) return cmd_trace(ta);
    if (*suite) return cmd_suite(manifest, tag, jobs, as_json);
  } catch (const ParseError& e) {
    std::cerr << "hyreach: parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "hyreach: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "hyreach: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
