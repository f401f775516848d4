// SPDX-License-Identifier: Apache-2.0
// Generators and independent oracles shared by the unit tests and the
// acceptance binary.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hyreach/icp.hpp"
#include "hyreach/ode.hpp"
#include "hyreach/simulate.hpp"
#include "support.hpp"

namespace hyreach::test_support {

// --- enclosure soundness ---------------------------------------------------

struct Family {
  const char* name;
  std::shared_ptr<VectorField> field;
  std::function<std::vector<double>(std::mt19937_64&)> draw;  // states then parameters
  double horizon;
};

inline std::vector<Family> soundness_families() {
  Term x = Term::var("x"), v = Term::var("v"), a = Term::var("a"), b = Term::var("b");
  Term g = Term::var("g"), beta = Term::var("beta");
  using S = std::vector<std::string>;
  using T = std::vector<Term>;
  return {
      {"linear", std::make_shared<VectorField>(S{"x"}, S{"a", "b"}, T{a * x + b}),
       [](std::mt19937_64& r) {
         std::uniform_real_distribution<double> u(-2, 2), ua(-1.5, 1.0);
         return std::vector<double>{u(r), ua(r), u(r)};
       },
       2.0},
      {"logistic", std::make_shared<VectorField>(S{"x"}, S{"a"}, T{a * x * (Term(1) - x)}),
       [](std::mt19937_64& r) {
         std::uniform_real_distribution<double> ux(0.01, 1.5), ua(0.1, 3.0);
         return std::vector<double>{ux(r), ua(r)};
       },
       3.0},
      {"falling ball", std::make_shared<VectorField>(S{"x", "v"}, S{"g", "beta"}, T{v, Term(-1) * g + beta * g * v * v}),
       [](std::mt19937_64& r) {
         std::uniform_real_distribution<double> ux(0, 15), uv(-5, 0), ug(9, 10.5), ub(0, 0.01);
         return std::vector<double>{ux(r), uv(r), ug(r), ub(r)};
       },
       1.5},
  };
}

/// Number of (draw, time, component) triples where the reference trajectory
/// leaves the enclosure; `first` receives a description of the first one.
inline int enclosure_violations(const Family& fam, int draws, std::uint64_t seed, std::string* first = nullptr) {
  std::mt19937_64 rng(seed);
  int bad = 0;
  const VectorField& f = *fam.field;
  auto note = [&](const std::string& s) {
    if (first && first->empty()) *first = s;
  };
  for (int d = 0; d < draws; ++d) {
    std::vector<double> p = fam.draw(rng);
    std::vector<Interval> z;
    for (double c : p) z.emplace_back(c);
    Enclosure e = integrate(f, z, fam.horizon);
    if (e.status() != Enclosure::Status::Complete) {
      ++bad;
      note(std::string(fam.name) + " draw " + std::to_string(d) + ": incomplete enclosure");
      continue;
    }
    std::uniform_real_distribution<double> ut(0.0, fam.horizon);
    for (int k = 0; k <= 20; ++k) {
      double t = k == 20 ? fam.horizon : ut(rng);
      auto ref = simulate(f, p, t, 1e-12);
      auto box = e.at(Interval(t));
      for (std::size_t i = 0; i < f.dim(); ++i) {
        double slack = 1e-9 * std::max(1.0, std::fabs(ref[i]));
        if (!(box[i].lo() - slack <= ref[i] && ref[i] <= box[i].hi() + slack)) {
          ++bad;
          std::ostringstream os;
          os << fam.name << " draw " << d << " t=" << t << " ref=" << ref[i] << " box=[" << box[i].lo() << ","
             << box[i].hi() << "]";
          note(os.str());
        }
      }
    }
  }
  return bad;
}

// --- solver one-sided error ------------------------------------------------

struct Generated {
  Box dom;
  Formula phi;
};

inline const std::vector<std::string>& system_vars() {
  static const std::vector<std::string> v{"x", "y", "z"};
  return v;
}

inline Formula eq0(const Term& t) { return Formula::conj({Formula::ge0(t), Formula::ge0(-t)}); }

inline Box random_domain(TermGen& g, const std::vector<double>& p) {
  std::vector<Interval> vals;
  for (std::size_t i = 0; i < system_vars().size(); ++i)
    vals.emplace_back(p[i] - g.uniform(0.1, 2.0), p[i] + g.uniform(0.1, 2.0));
  return Box(std::make_shared<VarSet>(system_vars()), vals);
}

/// A random system that holds at a random dyadic point of its box.
inline Generated planted_system(TermGen& g) {
  const auto& vars = system_vars();
  Term x = Term::var("x");
  std::vector<double> p;
  std::vector<Interval> pt;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    // Dyadic planted coordinates are exact in both rationals and doubles.
    p.push_back(std::ldexp(static_cast<double>(static_cast<int>(g.pick(129)) - 64), -5));
    pt.emplace_back(p.back());
  }
  Box at(std::make_shared<VarSet>(vars), pt);
  std::vector<Formula> parts;
  // Exact equalities through the planted point.
  int n_eq = static_cast<int>(g.pick(3));
  for (int i = 0; i < n_eq; ++i) {
    std::size_t a = g.pick(vars.size()), b = g.pick(vars.size());
    Term lhs = Term::var(vars[a]) * Term::var(vars[b]);
    parts.push_back(eq0(lhs - Term(Rational::from_double(p[a] * p[b]))));
  }
  // Nonlinear inequalities that hold at the point with a margin.
  int n_ineq = 1 + static_cast<int>(g.pick(3));
  for (int i = 0; i < n_ineq; ++i) {
    Term t = g.term(3);
    Interval v;
    try {
      v = eval_interval(t, at);
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(v.lo()) || !std::isfinite(v.hi())) continue;
    Formula ge = Formula::ge0(t - Term(Rational::from_double(std::floor((v.lo() - 0.01) * 1024) / 1024)));
    if (g.pick(2)) parts.push_back(ge);
    else parts.push_back(Formula::disj({Formula::ge0(Term(-1) - x * x), ge}));  // first disjunct false
  }
  if (parts.empty()) parts.push_back(eq0(x - Term(Rational::from_double(p[0]))));
  return {random_domain(g, p), Formula::conj(parts)};
}

/// A random system with no solution anywhere.
inline Generated infeasible_system(TermGen& g) {
  Term x = Term::var("x"), y = Term::var("y"), z = Term::var("z");
  std::vector<double> c{g.uniform(-2, 2), g.uniform(-2, 2), g.uniform(-2, 2)};
  Box dom = random_domain(g, c);
  Term s1 = g.term(2), s2 = g.term(2);
  Rational k(1 + static_cast<int>(g.pick(4)), 1 + static_cast<int>(g.pick(3)));
  switch (g.pick(4)) {
    case 0:  // s1^2 + s2^2 + k <= 0
      return {dom, Formula::ge0(Term(-1) * (s1 * s1 + s2 * s2 + Term(k)))};
    case 1:  // s1 >= k and s1 <= k - 1/2
      return {dom, Formula::conj({Formula::ge0(s1 - Term(k)), Formula::ge0(Term(k) - Term(Rational(1, 2)) - s1)})};
    case 2:  // s2 >= 0 and -exp(s1/4) >= s2^2
      return {dom, Formula::conj({Formula::ge0(s2), Formula::ge0(Term(-1) * exp(Term(Rational(1, 4)) * s1) - s2 * s2)})};
    default:  // x >= y >= z >= x + k
      return {dom, Formula::conj({Formula::ge0(x - y), Formula::ge0(y - z), Formula::ge0(z - x - Term(k))})};
  }
}

// --- encoder equivalence ---------------------------------------------------

/// One-variable automata with constant-rate flows, interval invariants,
/// threshold guards and shift resets. The reachable set of a fixed mode
/// sequence is an interval, computed exactly on a grid of quarters.
struct GenAutomaton {
  struct Mode {
    double rate, inv_lo, inv_hi;
  };
  struct Jump {
    int from, to;
    bool ge;  // guard x >= g, else x <= g
    double g, shift;
  };
  std::vector<Mode> modes;  // ids 1..n
  std::vector<Jump> jumps;
  std::map<int, std::pair<double, double>> init;
  std::optional<int> goal_mode;
  double goal = 0;  // x >= goal
  double dwell = 2.0;
  static constexpr double lo = -10, hi = 10;

  std::string text() const {
    std::ostringstream os;
    os << "var x in [" << lo << ", " << hi << "];\n";
    for (std::size_t i = 0; i < modes.size(); ++i)
      os << "mode " << i + 1 << " { inv: x >= " << modes[i].inv_lo << " and x <= " << modes[i].inv_hi
         << "; d/dt[x] = " << modes[i].rate << "; }\n";
    for (const auto& j : jumps) {
      os << "jump " << j.from << " -> " << j.to << " when x " << (j.ge ? ">=" : "<=") << " " << j.g << " reset {";
      if (j.shift != 0) os << " x' = x + " << j.shift << ";";
      os << " };\n";
    }
    for (const auto& [m, r] : init) os << "init mode " << m << " with x >= " << r.first << " and x <= " << r.second << ";\n";
    return os.str();
  }

  std::string goal_text() const {
    std::ostringstream os;
    if (goal_mode) os << "mode=" << *goal_mode << " && ";
    os << "x >= " << goal;
    return os.str();
  }

  bool path_reachable(const std::vector<int>& seq) const {
    auto it = init.find(seq[0]);
    if (it == init.end()) return false;
    double a = it->second.first, b = it->second.second;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const Mode& m = modes[static_cast<std::size_t>(seq[i] - 1)];
      double ilo = std::max(lo, m.inv_lo), ihi = std::min(hi, m.inv_hi);
      a = std::max(a, ilo);
      b = std::min(b, ihi);
      if (a > b) return false;
      double d = m.rate * dwell;
      a = std::max(a + std::min(0.0, d), ilo);
      b = std::min(b + std::max(0.0, d), ihi);
      if (a > b) return false;
      if (i + 1 == seq.size()) break;
      double na = INFINITY, nb = -INFINITY;
      for (const auto& j : jumps) {
        if (j.from != seq[i] || j.to != seq[i + 1]) continue;
        double ga = j.ge ? std::max(a, j.g) : a, gb = j.ge ? b : std::min(b, j.g);
        if (ga > gb) continue;
        na = std::min(na, ga + j.shift);
        nb = std::max(nb, gb + j.shift);
      }
      a = na;
      b = nb;
      if (a > b) return false;
    }
    return b >= goal;
  }

  /// Two jumps between the same pair of modes could make the image a
  /// non-interval; such automata are not generated.
  bool parallel_jumps() const {
    std::set<std::pair<int, int>> seen;
    for (const auto& j : jumps)
      if (!seen.insert({j.from, j.to}).second) return true;
    return false;
  }
};

inline GenAutomaton generate_automaton(std::mt19937_64& rng) {
  for (;;) {
    auto grid = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng) / 4.0; };
    auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
    GenAutomaton a;
    int n = 1 + pick(3);
    for (int i = 0; i < n; ++i) {
      double l = grid(-40, 8), h = grid(-8, 40);
      if (l > h) std::swap(l, h);
      a.modes.push_back({grid(-8, 8), l, h});
    }
    for (int f = 1; f <= n; ++f)
      for (int t = 1; t <= n; ++t)
        if (pick(3) == 0 || (t == f + 1 && pick(2) == 0))
          a.jumps.push_back({f, t, pick(2) == 0, grid(-24, 24), pick(2) ? 0.0 : grid(-8, 8)});
    int ninit = 1 + pick(n);
    for (int i = 0; i < ninit; ++i) {
      double l = grid(-16, 16), w = grid(0, 8);
      a.init[1 + pick(n)] = {l, l + w};
    }
    if (pick(4) != 0) a.goal_mode = 1 + pick(n);
    a.goal = grid(-16, 40);
    if (!a.parallel_jumps()) return a;
  }
}

/// Mode sequences satisfying the Boolean skeleton: b_q^i selects mode q at
/// step i; enforce(q, i) holds when b_q^i is set and every other b_{q'}^i is
/// clear; a jump q -> q' at step i requires enforce(q, i) and
/// enforce(q', i + 1). Exhaustive over all 2^(n (k + 1)) assignments.
inline std::set<std::vector<int>> boolean_sequences(const GenAutomaton& a, int k) {
  const int n = static_cast<int>(a.modes.size());
  const int bits = n * (k + 1);
  std::set<std::vector<int>> out;
  for (std::uint32_t b = 0; b < (1u << bits); ++b) {
    auto var = [&](int q, int i) { return (b >> (i * n + (q - 1))) & 1u; };
    auto enforce = [&](int q, int i) {
      if (!var(q, i)) return false;
      for (int r = 1; r <= n; ++r)
        if (r != q && var(r, i)) return false;
      return true;
    };
    bool init = false;
    for (const auto& [q, r] : a.init) init = init || enforce(q, 0);
    if (!init) continue;
    bool jumps = true;
    for (int i = 0; i < k && jumps; ++i) {
      bool any = false;
      for (const auto& j : a.jumps) any = any || (enforce(j.from, i) && enforce(j.to, i + 1));
      jumps = any;
    }
    if (!jumps) continue;
    bool goal = false;
    for (int q = 1; q <= n; ++q) goal = goal || ((!a.goal_mode || *a.goal_mode == q) && enforce(q, k));
    if (!goal) continue;
    std::vector<int> seq;
    for (int i = 0; i <= k; ++i)
      for (int q = 1; q <= n; ++q)
        if (var(q, i)) seq.push_back(q);
    out.insert(seq);
  }
  return out;
}

} // namespace hyreach::test_support
