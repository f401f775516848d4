// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hyreach/box.hpp"
#include "hyreach/contractor.hpp"
#include "hyreach/formula.hpp"
#include "hyreach/ode.hpp"
#include "hyreach/tape.hpp"

namespace hyreach {

struct SolverConfig {
  double delta = 1e-4;
  /// 0 = delta / 10
  double witness_width = 0.0;
  /// Maximum number of box splits before giving up.
  std::uint64_t max_splits = 2'000'000;
  unsigned workers = 1;
  int max_passes = 50;
  double min_progress = 0.01;
  /// 0 = delta / 10
  double ode_target = 0.0;
  std::size_t ode_max_steps = 100000;
};

struct SolverStats {
  std::uint64_t branches = 0;
  std::uint64_t prunes = 0;
  std::uint64_t refuted = 0;
  std::uint64_t splits = 0;
  std::uint64_t flow_prunes = 0;
  std::uint64_t certify_calls = 0;
  std::uint64_t undecided = 0;
  std::uint64_t max_depth = 0;

  void merge(const SolverStats& o) {
    branches += o.branches;
    prunes += o.prunes;
    refuted += o.refuted;
    splits += o.splits;
    flow_prunes += o.flow_prunes;
    certify_calls += o.certify_calls;
    undecided += o.undecided;
    max_depth = std::max(max_depth, o.max_depth);
  }

  std::string to_kv() const {
    std::ostringstream os;
    os << "branches=" << branches << " prunes=" << prunes << " refuted=" << refuted << " splits=" << splits
       << " flow_prunes=" << flow_prunes << " certify_calls=" << certify_calls << " undecided=" << undecided
       << " max_depth=" << max_depth;
    return os.str();
  }
};

enum class VerdictKind { Unsat, DeltaSat, BudgetExceeded };

inline const char* to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Unsat: return "unsat";
    case VerdictKind::DeltaSat: return "delta-sat";
    case VerdictKind::BudgetExceeded: return "budget-exceeded";
  }
  return "?";
}

struct Verdict {
  VerdictKind kind = VerdictKind::BudgetExceeded;
  std::optional<Box> witness;
  SolverStats stats;
};

/// An additional contractor over a whole search box. Implementations may
/// only remove points that are not solutions.
struct BoxContractor {
  virtual ~BoxContractor() = default;
  virtual bool contract(std::span<Interval> b) = 0;
};
using BoxContractorFactory = std::function<std::unique_ptr<BoxContractor>()>;

/// A bounded search box together with a formula over its variables.
/// Flow constraints name their pre/post/time variables in the box.
class ConstraintSystem {
public:
  ConstraintSystem(Box domain, Formula phi, double delta = 1e-4)
      : domain_(std::move(domain)), phi_(std::move(phi)), delta_(delta) {
    if (!(delta_ >= 0.0)) throw ArgumentError("delta must be non-negative");
    for (const auto& v : phi_.free_vars())
      if (!domain_.has(v)) throw ShapeError("formula variable " + v + " is not in the search box");
    std::vector<Term> terms;
    root_ = compile(phi_, terms);
    tape_ = Tape(terms, [this](const std::string& n) { return static_cast<int>(domain_.vars()->index(n)); });
  }

  const Box& domain() const noexcept { return domain_; }
  const Formula& formula() const noexcept { return phi_; }

  /// Each pruner gets its own instance, run after the formula fixpoint.
  void add_contractor(BoxContractorFactory make) { extra_.push_back(std::move(make)); }
  double delta() const noexcept { return delta_; }
  std::size_t num_flows() const noexcept { return flows_.size(); }

private:
  friend class Pruner;

  enum class Kind { Atom, And, Or, Flow };
  struct Node {
    Kind kind = Kind::And;
    int root = -1;
    Interval offset;
    bool strict = false;
    int flow = -1;
    std::vector<int> kids;
  };
  struct FlowSlots {
    std::shared_ptr<const FlowConstraint> fc;
    std::vector<int> pre, post, params;
    int time = -1;
    std::shared_ptr<const Formula> weakened_domain;  // invariant and bounds, delta-weakened
  };

  int compile(const Formula& f, std::vector<Term>& terms) {
    Node n;
    switch (f.kind()) {
      case Formula::Kind::Atom:
        n.kind = Kind::Atom;
        n.root = static_cast<int>(terms.size());
        terms.push_back(f.atom().lhs);
        n.offset = f.atom().offset.enclosure();
        n.strict = f.atom().strict;
        break;
      case Formula::Kind::And:
      case Formula::Kind::Or:
        n.kind = f.kind() == Formula::Kind::And ? Kind::And : Kind::Or;
        for (const auto& k : f.children()) n.kids.push_back(compile(k, terms));
        // Atoms before flows so the cheap contractors run first.
        std::stable_partition(n.kids.begin(), n.kids.end(), [&](int k) { return nodes_[k].kind != Kind::Flow; });
        break;
      case Formula::Kind::Flow: {
        n.kind = Kind::Flow;
        n.flow = static_cast<int>(flows_.size());
        flows_.push_back(slots_for(f.flow_ptr()));
        break;
      }
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  FlowSlots slots_for(std::shared_ptr<const FlowConstraint> fc) {
    const VectorField& f = *fc->field;
    FlowSlots s;
    auto idx = [&](const std::string& name) {
      auto i = domain_.vars()->find(name);
      if (!i) throw ShapeError("flow constraint variable " + name + " is not in the search box");
      return static_cast<int>(*i);
    };
    if (fc->pre.size() != f.dim() || fc->post.size() != f.dim()) throw ShapeError("flow constraint arity mismatch");
    for (std::size_t i = 0; i < f.dim(); ++i) {
      s.pre.push_back(idx(fc->pre[i]));
      s.post.push_back(idx(fc->post[i]));
    }
    for (const auto& p : f.param_names()) s.params.push_back(idx(p));
    s.time = idx(fc->time);
    std::vector<Formula> parts;
    if (fc->invariant) parts.push_back(*fc->invariant);
    for (std::size_t i = 0; i < f.dim(); ++i) {
      const Interval& b = f.bounds()[i];
      Term x = Term::var(f.state_names()[i]);
      if (std::isfinite(b.lo())) parts.push_back(Formula::atom(x, false, -Rational::from_double(b.lo())));
      if (std::isfinite(b.hi())) parts.push_back(Formula::atom(-x, false, Rational::from_double(b.hi())));
    }
    Formula dom = Formula::conj(parts);
    auto d = Rational::from_decimal(delta_);
    s.weakened_domain = std::make_shared<Formula>(delta_weaken(dom, d));
    s.fc = std::move(fc);
    return s;
  }

  Box domain_;
  Formula phi_;
  double delta_;
  Tape tape_;
  std::vector<Node> nodes_;
  std::vector<FlowSlots> flows_;
  std::vector<BoxContractorFactory> extra_;
  int root_ = 0;
};

/// Per-worker pruning and certification state for a ConstraintSystem.
class Pruner {
public:
  Pruner(const ConstraintSystem& sys, const SolverConfig& cfg) : sys_(&sys), cfg_(cfg) {
    StepControl ctl;
    ctl.target = cfg.ode_target > 0 ? cfg.ode_target : std::max(sys.delta(), 1e-8) / 10.0;
    ctl.max_steps = cfg.ode_max_steps;
    ctl_ = ctl;
    for (const auto& fs : sys.flows_) {
      pruners_.push_back(std::make_unique<FlowPruner>(fs.fc->field, fs.fc->invariant.get(), ctl));
      domains_.emplace_back(*fs.weakened_domain, [&](const std::string& n) {
        auto s = fs.fc->field->slot(n);
        if (!s) throw ArgumentError("invariant refers to unknown name " + n);
        return *s;
      });
    }
    memo_.resize(sys.flows_.size());
    for (const auto& make : sys.extra_) extra_.push_back(make());
  }

  SolverStats& stats() noexcept { return stats_; }

  /// Contracts `b` to a box containing every solution inside it; false when
  /// no solution exists.
  bool prune(std::span<Interval> b) {
    ++stats_.prunes;
    for (const auto& v : b)
      if (v.is_empty()) return false;
    std::vector<double> before(b.size());
    auto progress = [&] {
      double p = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        double w0 = before[i], w1 = b[i].width();
        if (w0 > 0 && std::isfinite(w0)) p = std::max(p, (w0 - w1) / w0);
        else if (!std::isfinite(w0) && std::isfinite(w1)) p = 1.0;
      }
      return p;
    };
    for (int round = 0; round < 4; ++round) {
      for (int pass = 0; pass < cfg_.max_passes; ++pass) {
        for (std::size_t i = 0; i < b.size(); ++i) before[i] = b[i].width();
        if (!contract(sys_->root_, b)) return false;
        if (progress() < cfg_.min_progress) break;
      }
      if (extra_.empty()) break;
      for (std::size_t i = 0; i < b.size(); ++i) before[i] = b[i].width();
      for (auto& c : extra_)
        if (!c->contract(b)) return false;
      for (const auto& v : b)
        if (v.is_empty()) return false;
      if (progress() < cfg_.min_progress) break;
    }
    return true;
  }

  bool prune(Box& b) { return prune(b.values()); }

  /// True iff the delta-weakened formula interval-holds on `b` and every
  /// flow's residual is at most delta.
  bool certify(std::span<const Interval> b) {
    ++stats_.certify_calls;
    std::vector<Interval> scratch;
    try {
      sys_->tape_.forward(b, scratch);
    } catch (const DomainError&) {
      return false;
    }
    return certify_node(sys_->root_, b, scratch);
  }

private:
  bool contract(int i, std::span<Interval> b) {
    const auto& n = sys_->nodes_[i];
    switch (n.kind) {
      case ConstraintSystem::Kind::Atom: {
        Interval target = Interval::unchecked(-n.offset.hi(), rounding::kInf);
        return sys_->tape_.revise(b, target, scratch_, static_cast<std::size_t>(n.root));
      }
      case ConstraintSystem::Kind::And: {
        bool atoms_only = true;
        for (int k : n.kids)
          if (sys_->nodes_[k].kind == ConstraintSystem::Kind::Flow) atoms_only = false;
        for (int k : n.kids) {
          if (!contract(k, b)) return false;
        }
        (void)atoms_only;
        return true;
      }
      case ConstraintSystem::Kind::Or: {
        if (n.kids.empty()) return false;
        std::vector<Interval> acc(b.size(), Interval::empty()), copy;
        bool any = false;
        for (int k : n.kids) {
          copy.assign(b.begin(), b.end());
          if (!contract(k, copy)) continue;
          any = true;
          for (std::size_t d = 0; d < b.size(); ++d) acc[d] = hull(acc[d], copy[d]);
        }
        if (!any) return false;
        for (std::size_t d = 0; d < b.size(); ++d) b[d] = acc[d];
        return true;
      }
      case ConstraintSystem::Kind::Flow: return contract_flow(n.flow, b);
    }
    return true;
  }

  struct Memo {
    std::vector<Interval> in, out;
    bool feasible = true;
  };

  bool contract_flow(int fi, std::span<Interval> b) {
    const auto& fs = sys_->flows_[fi];
    const VectorField& f = *fs.fc->field;
    const std::size_t n = f.dim();
    std::vector<Interval> key;
    key.reserve(2 * n + fs.params.size() + 1);
    for (int s : fs.pre) key.push_back(b[s]);
    for (int s : fs.params) key.push_back(b[s]);
    for (int s : fs.post) key.push_back(b[s]);
    key.push_back(b[fs.time]);
    Memo& memo = memo_[fi];
    if (memo.in == key) {
      if (!memo.feasible) return false;
      apply_flow(fs, memo.out, b);
      return true;
    }
    ++stats_.flow_prunes;
    std::vector<Interval> z0(f.size()), zt(n);
    for (std::size_t i = 0; i < n; ++i) {
      z0[i] = b[fs.pre[i]];
      zt[i] = b[fs.post[i]];
    }
    for (std::size_t j = 0; j < fs.params.size(); ++j) z0[n + j] = b[fs.params[j]];
    Interval t = intersect(b[fs.time], Interval(0.0, fs.fc->dwell_bound));
    bool ok = !t.is_empty() && pruners_[fi]->prune(z0, zt, t);
    memo.in = key;
    memo.feasible = ok;
    if (!ok) return false;
    memo.out.clear();
    for (std::size_t i = 0; i < n; ++i) memo.out.push_back(z0[i]);
    for (std::size_t j = 0; j < fs.params.size(); ++j) memo.out.push_back(z0[n + j]);
    for (std::size_t i = 0; i < n; ++i) memo.out.push_back(zt[i]);
    memo.out.push_back(t);
    apply_flow(fs, memo.out, b);
    for (const auto& v : b)
      if (v.is_empty()) return false;
    return true;
  }

  static void apply_flow(const ConstraintSystem::FlowSlots& fs, const std::vector<Interval>& out, std::span<Interval> b) {
    std::size_t k = 0;
    for (int s : fs.pre) b[s] = intersect(b[s], out[k++]);
    for (int s : fs.params) b[s] = intersect(b[s], out[k++]);
    for (int s : fs.post) b[s] = intersect(b[s], out[k++]);
    b[fs.time] = intersect(b[fs.time], out[k]);
  }

  bool certify_node(int i, std::span<const Interval> b, const std::vector<Interval>& scratch) {
    const auto& n = sys_->nodes_[i];
    switch (n.kind) {
      case ConstraintSystem::Kind::Atom: {
        Interval v = scratch[sys_->tape_.root(n.root)] + n.offset + Interval(sys_->delta_);
        return detail::atom_truth(v, n.strict) == Truth::True;
      }
      case ConstraintSystem::Kind::And:
        for (int k : n.kids)
          if (!certify_node(k, b, scratch)) return false;
        return true;
      case ConstraintSystem::Kind::Or:
        for (int k : n.kids)
          if (certify_node(k, b, scratch)) return true;
        return false;
      case ConstraintSystem::Kind::Flow: return certify_flow(n.flow, b);
    }
    return false;
  }

  bool certify_flow(int fi, std::span<const Interval> b) {
    const auto& fs = sys_->flows_[fi];
    const VectorField& f = *fs.fc->field;
    const std::size_t n = f.dim();
    std::vector<Interval> z0(f.size());
    for (std::size_t i = 0; i < n; ++i) z0[i] = b[fs.pre[i]];
    for (std::size_t j = 0; j < fs.params.size(); ++j) z0[n + j] = b[fs.params[j]];
    Interval t = b[fs.time];
    if (t.lo() < 0.0 || t.hi() > fs.fc->dwell_bound) return false;
    Enclosure e;
    try {
      e = integrate(f, z0, t.hi(), ctl_, nullptr);
    } catch (const Error&) {
      return false;
    }
    if (e.status() != Enclosure::Status::Complete) return false;
    auto end = e.at(t);
    for (std::size_t i = 0; i < n; ++i) {
      if (end[i].is_empty()) return false;
      if (hull(end[i], b[fs.post[i]]).width() > sys_->delta_) return false;
    }
    const FormulaContractor& dom = domains_[fi];
    if (dom.eval(z0) == Truth::False || dom.eval(end) == Truth::False) return false;
    for (const auto& s : e.steps()) {
      if (s.t0 > t.hi()) break;
      auto box = e.eval_step(s, 0.0, std::min(s.h, t.hi() - s.t0));
      if (dom.eval(box) == Truth::False) return false;
    }
    return true;
  }

  const ConstraintSystem* sys_;
  SolverConfig cfg_;
  StepControl ctl_;
  std::vector<std::unique_ptr<FlowPruner>> pruners_;
  std::vector<FormulaContractor> domains_;
  std::vector<Memo> memo_;
  std::vector<std::unique_ptr<BoxContractor>> extra_;
  std::vector<Interval> scratch_;
  SolverStats stats_;
};

/// Box-level contractor for a formula over the box's variables.
inline std::optional<Box> prune(const Box& box, const Formula& phi, const SolverConfig& cfg = {}) {
  ConstraintSystem sys(box, phi, cfg.delta);
  Pruner p(sys, cfg);
  Box b = box;
  if (!p.prune(b)) return std::nullopt;
  return b;
}

/// True iff the delta-weakening of `phi` interval-holds on `box`, with every
/// flow residual at most delta.
inline bool certify_witness(const Box& box, const Formula& phi, double delta) {
  ConstraintSystem sys(box, phi, delta);
  SolverConfig cfg;
  cfg.delta = delta;
  Pruner p(sys, cfg);
  return p.certify(box.values());
}

namespace detail {

struct Pending {
  std::vector<Interval> box;
  std::uint64_t depth = 0;
};

/// Index of the widest dimension, ties to the smaller name.
inline std::optional<std::size_t> widest(const VarSet& vars, std::span<const Interval> b) {
  std::optional<std::size_t> best;
  double bw = -1.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    double w = b[i].width();
    if (w > bw || (w == bw && best && vars.name(i) < vars.name(*best))) {
      bw = w;
      best = i;
    }
  }
  return best;
}

enum class Outcome { Refuted, Witness, Split, Undecided };

inline Outcome process(Pruner& p, const ConstraintSystem& sys, double witness_width, Pending& item,
                       std::vector<Interval>& lo, std::vector<Interval>& hi) {
  auto& b = item.box;
  auto& st = p.stats();
  ++st.branches;
  st.max_depth = std::max(st.max_depth, item.depth);
  if (!p.prune(b)) {
    ++st.refuted;
    return Outcome::Refuted;
  }
  auto i = widest(*sys.domain().vars(), b);
  double w = i ? b[*i].width() : 0.0;
  if (w <= witness_width) {
    if (p.certify(b)) return Outcome::Witness;
  }
  if (!i || !std::isfinite(w) || w <= witness_width * 1e-3) {
    ++st.undecided;
    return Outcome::Undecided;
  }
  double m = midpoint(b[*i]);
  if (!(m > b[*i].lo() && m < b[*i].hi())) {
    ++st.undecided;
    return Outcome::Undecided;
  }
  lo = b;
  hi = b;
  lo[*i] = Interval(b[*i].lo(), m);
  hi[*i] = Interval(m, b[*i].hi());
  return Outcome::Split;
}

} // namespace detail

/// Branch-and-prune: unsat only if every box is refuted; delta-sat with a
/// certified witness; budget-exceeded otherwise.
inline Verdict decide(const ConstraintSystem& sys, const SolverConfig& cfg = {}) {
  const double ww = cfg.witness_width > 0 ? cfg.witness_width : sys.delta() / 10.0;
  Verdict out;
  auto vars = sys.domain().vars();
  if (cfg.workers <= 1) {
    Pruner p(sys, cfg);
    std::vector<detail::Pending> stack;
    stack.push_back({std::vector<Interval>(sys.domain().values().begin(), sys.domain().values().end()), 0});
    std::vector<Interval> lo, hi;
    bool undecided = false;
    while (!stack.empty()) {
      detail::Pending item = std::move(stack.back());
      stack.pop_back();
      switch (detail::process(p, sys, ww, item, lo, hi)) {
        case detail::Outcome::Refuted: break;
        case detail::Outcome::Undecided: undecided = true; break;
        case detail::Outcome::Witness:
          out.kind = VerdictKind::DeltaSat;
          out.witness = Box(vars, item.box);
          out.stats = p.stats();
          return out;
        case detail::Outcome::Split:
          if (++p.stats().splits > cfg.max_splits) {
            out.kind = VerdictKind::BudgetExceeded;
            out.stats = p.stats();
            return out;
          }
          stack.push_back({std::move(hi), item.depth + 1});
          stack.push_back({std::move(lo), item.depth + 1});
          break;
      }
    }
    out.kind = undecided ? VerdictKind::BudgetExceeded : VerdictKind::Unsat;
    out.stats = p.stats();
    return out;
  }

  // Shared frontier, one Pruner per worker.
  std::mutex mu;
  std::condition_variable cv;
  std::vector<detail::Pending> stack;
  stack.push_back({std::vector<Interval>(sys.domain().values().begin(), sys.domain().values().end()), 0});
  unsigned active = 0;
  bool done = false, undecided = false, over_budget = false;
  std::uint64_t splits = 0;
  std::optional<Box> witness;
  SolverStats total;
  auto worker = [&]() {
    Pruner p(sys, cfg);
    std::vector<Interval> lo, hi;
    for (;;) {
      detail::Pending item;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return done || !stack.empty() || active == 0; });
        if (done || stack.empty()) break;
        item = std::move(stack.back());
        stack.pop_back();
        ++active;
      }
      auto r = detail::process(p, sys, ww, item, lo, hi);
      std::unique_lock lk(mu);
      --active;
      switch (r) {
        case detail::Outcome::Refuted: break;
        case detail::Outcome::Undecided: undecided = true; break;
        case detail::Outcome::Witness:
          if (!witness) witness = Box(vars, item.box);
          done = true;
          break;
        case detail::Outcome::Split:
          if (++splits > cfg.max_splits) {
            over_budget = true;
            done = true;
            break;
          }
          stack.push_back({std::move(hi), item.depth + 1});
          stack.push_back({std::move(lo), item.depth + 1});
          break;
      }
      if (stack.empty() && active == 0) done = true;
      cv.notify_all();
    }
    std::lock_guard lk(mu);
    total.merge(p.stats());
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  total.splits = splits;
  out.stats = total;
  if (witness) {
    out.kind = VerdictKind::DeltaSat;
    out.witness = std::move(witness);
  } else if (over_budget || undecided) {
    out.kind = VerdictKind::BudgetExceeded;
  } else {
    out.kind = VerdictKind::Unsat;
  }
  return out;
}

} // namespace hyreach
