// SPDX-License-Identifier: Apache-2.0
// One line per acceptance criterion. Exit status is nonzero if any fails.
//
//   acceptance            default gate
//   HYREACH_LONG=1        also runs the BCF boundary sweep

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hyreach/benchmarks.hpp"
#include "hyreach/bmc.hpp"
#include "hyreach/synthesis.hpp"
#include "oracles.hpp"

using namespace hyreach;
using namespace hyreach::test_support;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string model(const char* name) { return std::string(HYREACH_MODELS_DIR) + "/" + name; }

ReachQuery query(const std::string& path, const std::string& goal, int k, double delta, double dwell) {
  ReachQuery q;
  q.automaton = load_model(path);
  q.goal = parse_goal(goal, q.automaton);
  q.k_max = k;
  q.dwell_bound = dwell;
  q.solver.delta = delta;
  return q;
}

void verdict_regression() {
  auto cases = load_suite(std::string(HYREACH_BENCH_DIR) + "/table1.suite");
  auto entries = run_suite(cases, "fast");
  std::ostringstream os;
  bool ok = true;
  for (const auto& e : entries) {
    bool match = e.got == e.expect;
    ok = ok && match;
    os << " " << e.name << "=" << to_string(e.got) << (match ? std::string() : "(expected " + std::string(to_string(e.expect)) + ")")
       << fmt("/%.3gs", e.seconds);
  }
  report(ok, "verdict regression, fast subset", std::to_string(entries.size()) + " runs:" + os.str());
}

void thresholds() {
  auto bcf = [](const char* param, double hi, double width) {
    ThresholdQuery t;
    t.reach = query(model("bcf.model"), "mode=4", 3, 1e-4, 10.0);
    t.reach.automaton.set("eps", Rational(1), Rational(1));
    t.param = param;
    t.lo = 0;
    t.hi = hi;
    t.width = width;
    t.polarity = Polarity::ReachableAbove;
    return binary_search_threshold(t);
  };
  ThresholdResult o1 = bcf("tau_o1", 0.01, 1e-4);
  ThresholdResult o2 = bcf("tau_o2", 1.0, 1e-3);
  bool ok1 = std::fabs(o1.threshold - 0.006) <= 0.001, ok2 = std::fabs(o2.threshold - 0.13) <= 0.01;

  SweepQuery s;
  s.reach = query(model("synthetic_boundary.model"), "x >= 0", 0, 1e-3, 1.0);
  s.p1 = "p1";
  s.p2 = "p2";
  s.samples = {0, 0.5, 1};
  s.lo = 0;
  s.hi = 4;
  s.polarity = Polarity::ReachableBelow;
  BoundaryFit f = sweep_boundary(s);
  bool ok3 = std::fabs(f.a - 2.0) <= 0.02 && std::fabs(f.c - 3.0) <= 0.03;

  std::string detail = fmt("tau_o1 %.5g (bracket %.5g..", o1.threshold, o1.lo) + fmt("%.5g)", o1.hi) +
                       fmt(", tau_o2 %.4g (bracket %.4g..", o2.threshold, o2.lo) + fmt("%.4g)", o2.hi) +
                       fmt(", synthetic a=%.4g c=%.4g", f.a, f.c);
  bool ok = ok1 && ok2 && ok3;
  const char* lng = std::getenv("HYREACH_LONG");
  if (lng && std::string(lng) == "1") {
    SweepQuery b;
    b.reach = query(model("bcf.model"), "mode=4", 3, 1e-4, 10.0);
    b.reach.automaton.set("eps", Rational(1), Rational(1));
    b.p1 = "tau_so1";
    b.p2 = "tau_so2";
    b.samples = {0.6, 0.9, 1.2};
    b.lo = 0.01;
    b.hi = 10;
    b.width = 1e-2;
    b.polarity = Polarity::ReachableAbove;
    BoundaryFit bf = sweep_boundary(b);
    bool ok4 = std::fabs(bf.a - 6.2) <= 0.62;
    ok = ok && ok4;
    detail += fmt(", bcf slope %.4g intercept %.4g", bf.a, bf.c);
  } else {
    detail += ", bcf slope sweep not run";
  }
  report(ok, "threshold reproduction", detail);
}

void bouncing_ball() {
  const std::string path = model("bouncing_ball.model");
  ReachResult fall = check_reach(query(path, "x <= 0.1", 0, 1e-4, 3.0));
  bool ok1 = fall.kind == VerdictKind::DeltaSat && fall.trace;
  double dwell = ok1 ? fall.trace->steps[0].dwell.mid() : NAN;
  ok1 = ok1 && std::fabs(dwell - 1.4286) <= 0.01;

  bool ok2 = true;
  std::string kinds;
  for (int k = 0; k <= 4; ++k) {
    VerdictKind v = check_reach(query(path, "x >= 10.5", k, 1e-4, 3.0)).kind;
    ok2 = ok2 && v == VerdictKind::Unsat;
    kinds += std::string(k ? "," : "") + to_string(v);
  }
  // Simulation oracle: a full descent and rebound never climbs above the start.
  auto ha = load_model(path);
  double top = -INFINITY;
  std::vector<Sample> s;
  simulate(*mode_field(ha, 1, 3.0), {10.0, 0.0, 0.0}, 1.4, 1e-10, 0.01, &s);
  for (const auto& p : s) top = std::max(top, p.x[0]);
  double v_land = s.empty() ? 0.0 : s.back().x[1];
  s.clear();
  simulate(*mode_field(ha, 2, 3.0), {0.0, -0.9 * v_land, 0.0}, 1.4, 1e-10, 0.01, &s);
  for (const auto& p : s) top = std::max(top, p.x[0]);
  bool ok3 = top <= 10.0 + 1e-9;
  report(ok1 && ok2 && ok3, "bouncing ball",
         fmt("fall dwell %.5g, ", dwell) + "x>=10.5 k=0..4 " + kinds + fmt(", simulated max height %.6g", top));
}

void enclosure_soundness() {
  std::uint64_t seed = 101;
  int total = 0;
  std::string first, names;
  for (const auto& fam : soundness_families()) {
    total += enclosure_violations(fam, 100, seed++, &first);
    names += (names.empty() ? "" : ", ") + std::string(fam.name);
  }
  report(total == 0, "enclosure soundness",
         "100 draws x 21 times for " + names + "; violations " + std::to_string(total) + (first.empty() ? "" : " (" + first + ")"));
}

void one_sided_error() {
  SolverConfig cfg;
  cfg.max_splits = 200000;
  int wrong_planted = 0, wrong_infeasible = 0, slow = 0, sat = 0, unsat = 0;
  double worst = 0;
  TermGen gp(system_vars(), 2024);
  for (int i = 0; i < 200; ++i) {
    Generated s = planted_system(gp);
    auto t0 = std::chrono::steady_clock::now();
    Verdict v = decide(ConstraintSystem(s.dom, s.phi, cfg.delta), cfg);
    double t = since(t0);
    worst = std::max(worst, t);
    slow += t >= 5.0;
    wrong_planted += v.kind == VerdictKind::Unsat;
    sat += v.kind == VerdictKind::DeltaSat;
  }
  TermGen gi(system_vars(), 4048);
  for (int i = 0; i < 200; ++i) {
    Generated s = infeasible_system(gi);
    auto t0 = std::chrono::steady_clock::now();
    Verdict v = decide(ConstraintSystem(s.dom, s.phi, cfg.delta), cfg);
    double t = since(t0);
    worst = std::max(worst, t);
    slow += t >= 5.0;
    wrong_infeasible += v.kind == VerdictKind::DeltaSat;
    unsat += v.kind == VerdictKind::Unsat;
  }
  std::ostringstream os;
  os << "planted: " << sat << "/200 delta-sat, " << wrong_planted << " unsat; infeasible: " << unsat << "/200 unsat, "
     << wrong_infeasible << " delta-sat; slowest " << fmt("%.3gs", worst);
  report(wrong_planted == 0 && wrong_infeasible == 0 && slow == 0, "solver one-sided error", os.str());
}

void encoder_equivalence() {
  std::mt19937_64 rng(31337);
  int automata = 0, queries = 0, path_mismatch = 0, verdict_mismatch = 0, budget = 0;
  for (; automata < 60; ++automata) {
    GenAutomaton g = generate_automaton(rng);
    HybridAutomaton ha = parse_model(g.text());
    for (int k = 0; k <= 3; ++k) {
      ReachQuery q;
      q.automaton = ha;
      q.goal = parse_goal(g.goal_text(), ha);
      q.k_max = k;
      q.dwell_bound = g.dwell;
      q.solver.delta = 1e-3;
      auto enumerated = enumerate_paths(ha, q.goal.mode, k);
      std::set<std::vector<int>> paths(enumerated.begin(), enumerated.end());
      auto boolean = boolean_sequences(g, k);
      path_mismatch += paths != boolean;
      bool upto = false;
      for (int kk = 0; kk <= k; ++kk)
        for (const auto& seq : boolean_sequences(g, kk)) upto = upto || g.path_reachable(seq);
      ReachResult r = check_reach(q);
      budget += r.kind == VerdictKind::BudgetExceeded;
      verdict_mismatch += (r.kind == VerdictKind::DeltaSat) != upto;
      ++queries;
    }
  }
  std::ostringstream os;
  os << automata << " automata (<= 3 modes), " << queries << " queries k=0..3; path-set mismatches " << path_mismatch
     << ", verdict mismatches " << verdict_mismatch << ", budget " << budget;
  report(path_mismatch == 0 && verdict_mismatch == 0 && budget == 0, "encoder equivalence", os.str());
}

void delta_weakening() {
  TermGen g({"x", "y"}, 777);
  int triples = 0, sat = 0, broken = 0, not_identity = 0;
  while (triples < 1000) {
    Formula phi = g.formula(3);
    if (delta_weaken(phi, Rational(0)).to_string() != phi.to_string()) ++not_identity;
    Box pt{{"x", Interval(g.uniform(-3, 3))}, {"y", Interval(g.uniform(-3, 3))}};
    std::int64_t scale = 1;
    for (std::size_t e = 1 + g.pick(9); e > 0; --e) scale *= 10;
    Rational d(static_cast<std::int64_t>(1 + g.pick(999)), scale);
    bool before, after;
    try {
      before = eval_point(phi, pt);
      after = eval_point(delta_weaken(phi, d), pt);
    } catch (const DomainError&) {
      continue;
    }
    ++triples;
    sat += before;
    broken += before && !after;
  }
  std::ostringstream os;
  os << triples << " triples (" << sat << " with phi true); phi true but phi^delta false " << broken
     << "; delta=0 not identity " << not_identity;
  report(broken == 0 && not_identity == 0 && sat > 100, "delta-weakening", os.str());
}

} // namespace

int main() {
  struct Step {
    const char* name;
    void (*fn)();
  };
  const Step steps[] = {{"verdict regression", verdict_regression},
                        {"threshold reproduction", thresholds},
                        {"bouncing ball", bouncing_ball},
                        {"enclosure soundness", enclosure_soundness},
                        {"solver one-sided error", one_sided_error},
                        {"encoder equivalence", encoder_equivalence},
                        {"delta-weakening", delta_weakening}};
  for (const auto& s : steps) {
    try {
      s.fn();
    } catch (const std::exception& e) {
      report(false, s.name, std::string("exception: ") + e.what());
    }
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
