// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyreach/icp.hpp"
#include "hyreach/model.hpp"
#include "hyreach/ode.hpp"

namespace hyreach {

using ModePath = std::vector<int>;

struct ReachQuery {
  HybridAutomaton automaton;
  Goal goal;
  int k_max = 3;
  double dwell_bound = 10.0;  // M
  SolverConfig solver;
};

/// Variable names used by the unrolling.
namespace enc {
inline std::string pre(const std::string& v, int i) { return v + "_" + std::to_string(i); }
inline std::string post(const std::string& v, int i) { return v + "_" + std::to_string(i) + "^t"; }
inline std::string dwell(int i) { return "t_" + std::to_string(i); }
} // namespace enc

/// Paths of exactly k jumps from an init mode to a goal mode (any mode if
/// the goal has none), in lexicographic order of mode ids.
inline std::vector<ModePath> enumerate_paths(const HybridAutomaton& ha, const std::optional<int>& goal_mode, int k) {
  std::vector<ModePath> out;
  if (k < 0) return out;
  std::set<int> starts;
  for (const auto& in : ha.inits) starts.insert(in.mode);
  std::map<int, std::set<int>> succ;
  for (const auto& j : ha.jumps) succ[j.from].insert(j.to);
  ModePath cur;
  std::function<void(int)> walk = [&](int q) {
    cur.push_back(q);
    if (static_cast<int>(cur.size()) == k + 1) {
      if (!goal_mode || *goal_mode == q) out.push_back(cur);
    } else if (auto it = succ.find(q); it != succ.end()) {
      for (int r : it->second) walk(r);
    }
    cur.pop_back();
  };
  for (int q : starts) walk(q);
  return out;
}

/// The flow of `mode` as a vector field over the variables plus the mode
/// clock, with fixed parameters substituted.
inline std::shared_ptr<const VectorField> mode_field(const HybridAutomaton& ha, int mode, double dwell_bound) {
  const Mode& m = ha.mode(mode);
  auto fixed = ha.fixed_param_values();
  std::vector<std::string> state = ha.var_names();
  std::vector<Term> rhs;
  std::vector<Interval> bounds;
  for (const auto& v : ha.vars) {
    auto it = m.flow.find(v.name);
    if (it == m.flow.end()) throw ShapeError("mode " + std::to_string(mode) + " has no flow for " + v.name);
    rhs.push_back(it->second.substitute(fixed));
    bounds.push_back(hull(v.lo.enclosure(), v.hi.enclosure()));
  }
  state.emplace_back(kTimeVar);
  rhs.push_back(Term(1));
  bounds.push_back(Interval(0.0, dwell_bound));
  return std::make_shared<VectorField>(state, ha.free_params(), rhs, bounds);
}

namespace detail {

inline std::function<std::string(const std::string&)> renamer(const HybridAutomaton& ha,
                                                             std::function<std::string(const std::string&)> f) {
  return [&ha, f](const std::string& n) { return (ha.find_var(n) || n == kTimeVar) ? f(n) : n; };
}

} // namespace detail

/// Number of variables of the unrolled system for k jumps.
inline std::size_t encoding_var_count(const HybridAutomaton& ha, int k) {
  std::size_t dims = ha.vars.size() + 1;
  return dims * 2 * static_cast<std::size_t>(k + 1) + static_cast<std::size_t>(k + 1) + ha.free_params().size();
}

namespace detail {

/// Pushes the initial set of a mode path through every flow, guard and reset
/// as a short union of boxes. Removes dwell times and post-states that no
/// trajectory of the path can realise.
class PathReach final : public BoxContractor {
public:
  struct Option {
    FormulaContractor guard;
    Tape reset;  // one root per state variable (time reset to 0)
  };
  struct Stage {
    std::shared_ptr<const VectorField> field;
    std::shared_ptr<FlowDomain> domain;
    std::vector<int> pre, post, params;
    int dwell = -1;
    std::vector<Option> next;  // jumps to the following stage
  };
  struct Plan {
    std::vector<Stage> stages;
    FormulaContractor goal;
    StepControl ctl;
    std::size_t max_boxes = 6;
  };

  explicit PathReach(std::shared_ptr<const Plan> plan) : plan_(std::move(plan)) {}

  bool contract(std::span<Interval> b) override {
    const auto& st = plan_->stages;
    std::vector<std::vector<Interval>> cur(1);
    {
      const Stage& s0 = st[0];
      for (int i : s0.pre) cur[0].push_back(b[i]);
      for (int i : s0.params) cur[0].push_back(b[i]);
    }
    std::vector<Interval> scratch;
    memo_.resize(st.size());
    for (std::size_t k = 0; k < st.size(); ++k) {
      const Stage& s = st[k];
      const VectorField& f = *s.field;
      const std::size_t n = f.dim();
      Interval T = b[s.dwell];
      std::vector<Interval> key{T};
      for (const auto& z : cur) key.insert(key.end(), z.begin(), z.end());
      for (int i : s.pre) key.push_back(b[i]);
      for (int i : s.post) key.push_back(b[i]);
      if (k + 1 < st.size())
        for (int i : st[k + 1].pre) key.push_back(b[i]);
      Memo& memo = memo_[k];
      if (memo.valid && memo.key == key) {
        if (!memo.feasible) return false;
        apply(k, memo, b);
        cur = memo.next;
        continue;
      }
      memo.valid = false;
      std::vector<Interval> post_hull(n, Interval::empty());
      Interval t_hull = Interval::empty();
      std::vector<std::vector<Interval>> next;
      for (auto& z : cur) {
        for (std::size_t i = 0; i < n; ++i) z[i] = intersect(z[i], b[s.pre[i]]);
        for (std::size_t j = 0; j < s.params.size(); ++j) z[n + j] = intersect(z[n + j], b[s.params[j]]);
        if (!s.domain->contract(z)) continue;
        Enclosure e;
        try {
          e = integrate(f, z, T.hi(), plan_->ctl, s.domain.get());
        } catch (const Error&) {
          return true;
        }
        if (!e.covers(T)) return true;
        for (const auto& step : e.steps()) {
          double a = std::max(T.lo(), step.t0), c = std::min(T.hi(), step.t0 + step.h);
          if (a > c) continue;
          auto zt = e.eval_step(step, a - step.t0, c - step.t0);
          zt.resize(f.size());
          for (std::size_t j = n; j < f.size(); ++j) zt[j] = z[j];
          bool ok = true;
          for (std::size_t i = 0; i < n && ok; ++i) {
            zt[i] = intersect(zt[i], b[s.post[i]]);
            ok = !zt[i].is_empty();
          }
          if (!ok || !s.domain->contract(zt)) continue;
          std::vector<Interval> hit(n, Interval::empty());
          bool any = false;
          if (k + 1 == st.size()) {
            if (plan_->goal.contract(zt)) {
              any = true;
              for (std::size_t i = 0; i < n; ++i) hit[i] = zt[i];
            }
          } else {
            const Stage& nx = st[k + 1];
            for (const auto& opt : s.next) {
              auto g = zt;
              if (!opt.guard.contract(g)) continue;
              std::vector<Interval> y(f.size());
              try {
                opt.reset.forward(g, scratch);
              } catch (const DomainError&) {
                continue;
              }
              bool live = true;
              for (std::size_t i = 0; i < n; ++i) {
                y[i] = intersect(scratch[opt.reset.root(i)], b[nx.pre[i]]);
                if (y[i].is_empty()) live = false;
              }
              if (!live) continue;
              for (std::size_t j = n; j < f.size(); ++j) y[j] = g[j];
              next.push_back(std::move(y));
              any = true;
              for (std::size_t i = 0; i < n; ++i) hit[i] = hull(hit[i], g[i]);
            }
          }
          if (!any) continue;
          for (std::size_t i = 0; i < n; ++i) post_hull[i] = hull(post_hull[i], hit[i]);
          t_hull = hull(t_hull, Interval(a, c));
        }
      }
      memo.key = std::move(key);
      memo.valid = true;
      memo.feasible = !t_hull.is_empty();
      if (!memo.feasible) return false;
      memo.post = std::move(post_hull);
      memo.dwell = t_hull;
      memo.next = k + 1 < st.size() ? merge(std::move(next)) : std::vector<std::vector<Interval>>{};
      apply(k, memo, b);
      cur = memo.next;
    }
    for (const auto& v : b)
      if (v.is_empty()) return false;
    return true;
  }

private:
  struct Memo {
    bool valid = false, feasible = true;
    std::vector<Interval> key, post;
    Interval dwell;
    std::vector<std::vector<Interval>> next;
  };

  void apply(std::size_t k, const Memo& m, std::span<Interval> b) const {
    const Stage& s = plan_->stages[k];
    const std::size_t n = s.pre.size();
    for (std::size_t i = 0; i < n; ++i) b[s.post[i]] = intersect(b[s.post[i]], m.post[i]);
    b[s.dwell] = intersect(b[s.dwell], m.dwell);
    if (k + 1 == plan_->stages.size()) return;
    const Stage& nx = plan_->stages[k + 1];
    std::vector<Interval> h(n, Interval::empty());
    for (const auto& y : m.next)
      for (std::size_t i = 0; i < n; ++i) h[i] = hull(h[i], y[i]);
    for (std::size_t i = 0; i < n; ++i) b[nx.pre[i]] = intersect(b[nx.pre[i]], h[i]);
  }

  std::vector<std::vector<Interval>> merge(std::vector<std::vector<Interval>> v) const {
    const std::size_t cap = plan_->max_boxes;
    if (v.size() <= cap) return v;
    std::vector<std::vector<Interval>> out;
    for (std::size_t g = 0; g < cap; ++g) {
      std::size_t lo = g * v.size() / cap, hi = (g + 1) * v.size() / cap;
      std::vector<Interval> h = v[lo];
      for (std::size_t j = lo + 1; j < hi; ++j)
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = hull(h[i], v[j][i]);
      out.push_back(std::move(h));
    }
    return out;
  }

  std::shared_ptr<const Plan> plan_;
  std::vector<Memo> memo_;
};

} // namespace detail

/// The reachability constraint system of one mode path.
inline ConstraintSystem encode_step_system(const ReachQuery& q, const ModePath& path) {
  const HybridAutomaton& ha = q.automaton;
  if (path.empty()) throw ArgumentError("empty mode path");
  const int k = static_cast<int>(path.size()) - 1;
  auto fixed = ha.fixed_param_values();
  std::vector<std::string> names;
  std::vector<Interval> values;
  std::vector<std::string> state = ha.var_names();
  state.emplace_back(kTimeVar);
  auto bound = [&](const std::string& v) {
    if (v == kTimeVar) return Interval(0.0, q.dwell_bound);
    const VarDecl* d = ha.find_var(v);
    return hull(d->lo.enclosure(), d->hi.enclosure());
  };
  for (int i = 0; i <= k; ++i) {
    for (const auto& v : state) {
      names.push_back(enc::pre(v, i));
      values.push_back(bound(v));
    }
    for (const auto& v : state) {
      names.push_back(enc::post(v, i));
      values.push_back(bound(v));
    }
    names.push_back(enc::dwell(i));
    values.push_back(Interval(0.0, q.dwell_bound));
  }
  for (const auto& p : ha.free_params()) {
    const ParamDecl* d = ha.find_param(p);
    names.push_back(p);
    values.push_back(hull(d->lo.enclosure(), d->hi.enclosure()));
  }
  Box domain(std::make_shared<VarSet>(names), values);

  auto plan = std::make_shared<detail::PathReach::Plan>();
  plan->ctl.target = std::max(q.solver.ode_target > 0 ? q.solver.ode_target : q.solver.delta / 10.0, 1e-3);
  plan->ctl.max_steps = std::min<std::size_t>(q.solver.ode_max_steps, 5000);
  auto slot = [&](const std::string& n) { return static_cast<int>(domain.vars()->index(n)); };

  auto at_pre = [&](int i) { return detail::renamer(ha, [i](const std::string& n) { return enc::pre(n, i); }); };
  auto at_post = [&](int i) { return detail::renamer(ha, [i](const std::string& n) { return enc::post(n, i); }); };

  std::vector<Formula> parts;
  // init
  std::vector<Formula> inits;
  for (const auto& in : ha.inits)
    if (in.mode == path[0]) inits.push_back(in.condition.substitute(fixed).rename(at_pre(0)));
  parts.push_back(Formula::disj(inits));
  for (int i = 0; i <= k; ++i) {
    const Mode& m = ha.mode(path[i]);
    Formula inv = m.invariant.substitute(fixed);
    parts.push_back(Formula::eq(Term::var(enc::pre(std::string(kTimeVar), i)), Term(0)));
    if (!inv.is_true()) {
      parts.push_back(inv.rename(at_pre(i)));
      parts.push_back(inv.rename(at_post(i)));
    }
    FlowConstraint fc;
    fc.field = mode_field(ha, path[i], q.dwell_bound);
    fc.mode = path[i];
    for (const auto& v : state) {
      fc.pre.push_back(enc::pre(v, i));
      fc.post.push_back(enc::post(v, i));
    }
    fc.time = enc::dwell(i);
    fc.dwell_bound = q.dwell_bound;
    if (!inv.is_true()) fc.invariant = std::make_shared<Formula>(inv);
    detail::PathReach::Stage stage;
    stage.field = fc.field;
    stage.domain = std::make_shared<FlowDomain>(*fc.field, fc.invariant.get());
    stage.pre = [&] { std::vector<int> r; for (const auto& v : fc.pre) r.push_back(slot(v)); return r; }();
    stage.post = [&] { std::vector<int> r; for (const auto& v : fc.post) r.push_back(slot(v)); return r; }();
    for (const auto& p : fc.field->param_names()) stage.params.push_back(slot(p));
    stage.dwell = slot(fc.time);
    auto field_slot = [field = fc.field](const std::string& n) {
      auto s = field->slot(n);
      if (!s) throw ArgumentError("unknown name " + n);
      return static_cast<int>(*s);
    };
    if (i < k) {
      for (const auto& j : ha.jumps) {
        if (j.from != path[i] || j.to != path[i + 1]) continue;
        std::map<std::string, Term> reset;
        for (const auto& [v, t] : j.reset) reset[v] = t.substitute(fixed);
        std::vector<Term> maps;
        for (const auto& v : ha.vars) maps.push_back(reset.count(v.name) ? reset.at(v.name) : Term::var(v.name));
        maps.push_back(Term(0));
        stage.next.push_back({FormulaContractor(j.guard.substitute(fixed), field_slot), Tape(maps, field_slot)});
      }
    } else {
      plan->goal = FormulaContractor(q.goal.condition.substitute(fixed), field_slot);
    }
    plan->stages.push_back(std::move(stage));
    parts.push_back(Formula::flow(std::move(fc)));
    if (i < k) {
      std::vector<Formula> options;
      for (const auto& j : ha.jumps) {
        if (j.from != path[i] || j.to != path[i + 1]) continue;
        std::vector<Formula> c{j.guard.substitute(fixed).rename(at_post(i))};
        std::map<std::string, Term> reset;
        for (const auto& [v, t] : j.reset) reset[v] = t;
        for (const auto& v : ha.vars) {
          Term rhs = reset.count(v.name) ? reset.at(v.name).substitute(fixed).rename(at_post(i))
                                         : Term::var(enc::post(v.name, i));
          c.push_back(Formula::eq(Term::var(enc::pre(v.name, i + 1)), rhs));
        }
        options.push_back(Formula::conj(c));
      }
      parts.push_back(Formula::disj(options));
    }
  }
  if (!q.goal.condition.is_true()) parts.push_back(q.goal.condition.substitute(fixed).rename(at_post(k)));
  ConstraintSystem sys(domain, Formula::conj(parts), q.solver.delta);
  sys.add_contractor([plan = std::shared_ptr<const detail::PathReach::Plan>(plan)] {
    return std::make_unique<detail::PathReach>(plan);
  });
  return sys;
}

struct TraceStep {
  int mode = 0;
  Interval dwell;
  Box pre, post;
};

/// Per-step modes, dwell times and state boxes of a delta-sat witness.
struct WitnessTrace {
  ModePath path;
  std::vector<TraceStep> steps;
  Box params;

  static WitnessTrace from_witness(const ReachQuery& q, const ModePath& path, const Box& w) {
    WitnessTrace tr;
    tr.path = path;
    std::vector<std::string> state = q.automaton.var_names();
    state.emplace_back(kTimeVar);
    auto vars = std::make_shared<VarSet>(state);
    for (int i = 0; i < static_cast<int>(path.size()); ++i) {
      TraceStep s;
      s.mode = path[i];
      s.dwell = w.at(enc::dwell(i));
      std::vector<Interval> a, b;
      for (const auto& v : state) {
        a.push_back(w.at(enc::pre(v, i)));
        b.push_back(w.at(enc::post(v, i)));
      }
      s.pre = Box(vars, a);
      s.post = Box(vars, b);
      tr.steps.push_back(std::move(s));
    }
    std::vector<std::string> pn = q.automaton.free_params();
    std::vector<Interval> pv;
    for (const auto& p : pn) pv.push_back(w.at(p));
    tr.params = Box(std::make_shared<VarSet>(pn), pv);
    return tr;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "trace v1\n";
    os << "path";
    for (int m : path) os << ' ' << m;
    os << "\nparams" << boxes(params) << "\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& s = steps[i];
      os << "step " << i << " mode " << s.mode << "\n";
      os << "  dwell " << num(s.dwell) << "\n";
      os << "  pre" << boxes(s.pre) << "\n";
      os << "  post" << boxes(s.post) << "\n";
    }
    return os.str();
  }

  static WitnessTrace parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    WitnessTrace tr;
    auto fail = [](const std::string& why) { throw ParseError("malformed trace: " + why, 0, 0); };
    if (!std::getline(in, line) || line != "trace v1") fail("missing header");
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "path") {
        int m;
        while (ls >> m) tr.path.push_back(m);
      } else if (key == "params") {
        tr.params = read_box(ls);
      } else if (key == "step") {
        TraceStep s;
        std::string word;
        int idx;
        ls >> idx >> word >> s.mode;
        if (word != "mode") fail("expected mode");
        tr.steps.push_back(s);
      } else if (key == "dwell" || key == "pre" || key == "post") {
        if (tr.steps.empty()) fail(key + " before step");
        auto& s = tr.steps.back();
        if (key == "dwell") {
          std::string tok;
          ls >> tok;
          s.dwell = read_interval(tok);
        } else if (key == "pre") {
          s.pre = read_box(ls);
        } else {
          s.post = read_box(ls);
        }
      } else if (!key.empty()) {
        fail("unknown key " + key);
      }
    }
    return tr;
  }

private:
  static std::string num(const Interval& v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "[%.17g,%.17g]", v.lo(), v.hi());
    return buf;
  }
  static std::string boxes(const Box& b) {
    std::string s;
    for (std::size_t i = 0; i < b.size(); ++i) s += " " + b.name(i) + "=" + num(b[i]);
    return s;
  }
  static Interval read_interval(const std::string& tok) {
    double lo, hi;
    if (std::sscanf(tok.c_str(), "[%lf,%lf]", &lo, &hi) != 2) throw ParseError("malformed interval " + tok, 0, 0);
    return Interval(lo, hi);
  }
  static Box read_box(std::istream& ls) {
    std::vector<std::string> names;
    std::vector<Interval> vals;
    std::string tok;
    while (ls >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw ParseError("malformed box entry " + tok, 0, 0);
      names.push_back(tok.substr(0, eq));
      vals.push_back(read_interval(tok.substr(eq + 1)));
    }
    return Box(std::make_shared<VarSet>(names), vals);
  }
};

struct ReachResult {
  VerdictKind kind = VerdictKind::Unsat;
  std::optional<WitnessTrace> trace;
  std::optional<ModePath> path;
  int k = -1;                    // k of the witness, or the last k examined
  std::size_t var_count = 0;     // variables of the deciding / largest system
  std::size_t systems = 0;
  SolverStats stats;
  double seconds = 0.0;
};

/// Tries k = 0..k_max and every path; first delta-sat wins.
inline ReachResult check_reach(const ReachQuery& q) {
  auto start = std::chrono::steady_clock::now();
  ReachResult r;
  bool budget = false;
  for (int k = 0; k <= q.k_max; ++k) {
    r.k = k;
    for (const auto& path : enumerate_paths(q.automaton, q.goal.mode, k)) {
      ConstraintSystem sys = encode_step_system(q, path);
      r.var_count = std::max(r.var_count, sys.domain().size());
      ++r.systems;
      Verdict v = decide(sys, q.solver);
      r.stats.merge(v.stats);
      if (v.kind == VerdictKind::DeltaSat) {
        r.kind = VerdictKind::DeltaSat;
        r.path = path;
        r.var_count = sys.domain().size();
        r.trace = WitnessTrace::from_witness(q, path, *v.witness);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
      }
      if (v.kind == VerdictKind::BudgetExceeded) budget = true;
    }
  }
  if (r.var_count == 0) r.var_count = encoding_var_count(q.automaton, q.k_max);
  r.kind = budget ? VerdictKind::BudgetExceeded : VerdictKind::Unsat;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

} // namespace hyreach
