// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hyreach/bmc.hpp"
#include "hyreach/contractor.hpp"
#include "hyreach/simulate.hpp"

namespace hyreach {

/// One sampled point of a simulated hybrid trajectory (variables only).
struct TrajectoryRow {
  double t = 0.0;
  int mode = 0;
  std::vector<double> x;
};

struct TrajectoryOptions {
  double duration = 1.0;
  double step = 0.01;
  /// Variables set to 0 every `period` time units.
  std::vector<std::pair<std::string, double>> periodic_zero;
  /// Guard slack at located events.
  double tol = 1e-6;
  double rtol = 1e-10;
};

/// Plain floating-point simulation of `ha` from a point. Jumps are urgent:
/// a jump is taken as soon as its guard holds; when the invariant breaks the
/// crossing is located by bisection and a guard is checked with slack `tol`.
/// Not an enclosure.
inline std::vector<TrajectoryRow> simulate_automaton(const HybridAutomaton& ha, int mode, std::vector<double> x0,
                                                     const std::map<std::string, double>& params,
                                                     const TrajectoryOptions& opt) {
  if (!(opt.step > 0)) throw ArgumentError("sample step must be positive");
  if (!(opt.duration >= 0)) throw ArgumentError("duration must be non-negative");
  const std::size_t nv = ha.vars.size();
  if (x0.size() != nv) throw ShapeError("initial point does not match the variables");
  auto fixed = ha.fixed_param_values();
  const std::vector<std::string> free = ha.free_params();
  std::vector<double> pvals;
  for (const auto& p : free) {
    auto it = params.find(p);
    if (it == params.end()) throw ArgumentError("no value for parameter '" + p + "'");
    pvals.push_back(it->second);
  }

  struct ModeData {
    std::shared_ptr<const VectorField> field;
    FormulaContractor inv;
    std::vector<std::pair<int, const Jump*>> jumps;
    std::vector<FormulaContractor> guard, weak;
    std::vector<Tape> reset;
  };
  std::map<int, ModeData> modes;
  auto data = [&](int q) -> ModeData& {
    auto it = modes.find(q);
    if (it != modes.end()) return it->second;
    ModeData d;
    d.field = mode_field(ha, q, std::max(opt.duration, 1.0));
    auto slot = [f = d.field](const std::string& n) {
      auto s = f->slot(n);
      if (!s) throw ArgumentError("unknown name " + n);
      return static_cast<int>(*s);
    };
    d.inv = FormulaContractor(ha.mode(q).invariant.substitute(fixed), slot);
    for (const auto& j : ha.jumps) {
      if (j.from != q) continue;
      Formula g = j.guard.substitute(fixed);
      d.guard.emplace_back(g, slot);
      d.weak.emplace_back(delta_weaken(g, Rational::from_decimal(opt.tol)), slot);
      std::map<std::string, Term> r;
      for (const auto& [v, t] : j.reset) r[v] = t.substitute(fixed);
      std::vector<Term> maps;
      for (const auto& v : ha.vars) maps.push_back(r.count(v.name) ? r.at(v.name) : Term::var(v.name));
      d.reset.emplace_back(maps, slot);
      d.jumps.emplace_back(j.to, &j);
    }
    return modes.emplace(q, std::move(d)).first->second;
  };

  // z = variables, mode clock, free parameters
  std::vector<double> z = x0;
  z.push_back(0.0);
  z.insert(z.end(), pvals.begin(), pvals.end());
  auto as_box = [](const std::vector<double>& p) {
    std::vector<Interval> b;
    for (double v : p) b.emplace_back(v);
    return b;
  };
  auto holds = [&](const FormulaContractor& c, const std::vector<double>& p) { return c.eval(as_box(p)) == Truth::True; };
  auto fails = [&](const FormulaContractor& c, const std::vector<double>& p) { return c.eval(as_box(p)) == Truth::False; };
  auto jump = [&](ModeData& d, std::size_t i) {
    std::vector<Interval> scratch;
    d.reset[i].forward(as_box(z), scratch);
    for (std::size_t k = 0; k < nv; ++k) z[k] = midpoint(scratch[d.reset[i].root(k)]);
    z[nv] = 0.0;
    mode = d.jumps[i].first;
  };
  std::map<std::string, std::size_t> var_index;
  for (std::size_t i = 0; i < nv; ++i) var_index[ha.vars[i].name] = i;
  std::vector<std::pair<std::size_t, double>> resets;
  for (const auto& [name, period] : opt.periodic_zero) {
    if (!var_index.count(name)) throw ArgumentError("unknown variable '" + name + "'");
    if (!(period > 0)) throw ArgumentError("reset period must be positive");
    resets.emplace_back(var_index.at(name), period);
  }

  std::vector<TrajectoryRow> rows;
  auto record = [&](double t) { rows.push_back({t, mode, std::vector<double>(z.begin(), z.begin() + static_cast<long>(nv))}); };
  const auto samples = static_cast<std::size_t>(std::floor(opt.duration / opt.step + 1e-9));
  record(0.0);
  double t = 0.0;
  const double sub = opt.step / 8.0;
  bool ignore_inv = false;
  int jumps_here = 0;
  for (std::size_t k = 1; k <= samples; ++k) {
    const double ts = static_cast<double>(k) * opt.step;
    while (t < ts) {
      ModeData& d = data(mode);
      double target = std::min(ts, t + sub);
      for (auto [i, period] : resets) {
        double next = (std::floor(t / period + 1e-12) + 1.0) * period;
        if (next < target) target = next;
      }
      std::vector<double> z1 = simulate(*d.field, z, target - t, opt.rtol);
      if (!ignore_inv && fails(d.inv, z1)) {
        double lo = t, hi = target;
        std::vector<double> zlo = z;
        for (int it = 0; it < 60 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
          double mid = 0.5 * (lo + hi);
          auto zm = simulate(*d.field, z, mid - t, opt.rtol);
          if (fails(d.inv, zm)) hi = mid;
          else {
            lo = mid;
            zlo = std::move(zm);
          }
        }
        z = simulate(*d.field, z, hi - t, opt.rtol);
        t = hi;
        std::size_t taken = d.jumps.size();
        for (std::size_t i = 0; i < d.jumps.size() && taken == d.jumps.size(); ++i)
          if (!fails(d.weak[i], z) || !fails(d.weak[i], zlo)) taken = i;
        if (taken < d.jumps.size() && ++jumps_here < 1000) {
          jump(d, taken);
          ignore_inv = false;
        } else {
          ignore_inv = true;
        }
        continue;
      }
      z = std::move(z1);
      t = target;
      jumps_here = 0;
      for (auto [i, period] : resets) {
        double r = std::remainder(t, period);
        if (std::fabs(r) <= 1e-9 * period) z[i] = 0.0;
      }
      for (std::size_t i = 0; i < d.jumps.size(); ++i) {
        if (holds(d.guard[i], z)) {
          jump(d, i);
          ignore_inv = false;
          break;
        }
      }
    }
    record(ts);
  }
  return rows;
}

/// Simulation from the midpoint of a witness trace's initial box.
inline std::vector<TrajectoryRow> simulate_witness(const HybridAutomaton& ha, const WitnessTrace& w,
                                                   const TrajectoryOptions& opt) {
  if (w.steps.empty() || w.path.empty()) throw ShapeError("witness has no steps");
  if (!ha.find_mode(w.path.front())) throw ShapeError("witness starts in a mode the model does not have");
  std::vector<double> x0;
  for (const auto& v : ha.vars) {
    if (!w.steps.front().pre.has(v.name)) throw ShapeError("witness has no value for variable '" + v.name + "'");
    x0.push_back(midpoint(w.steps.front().pre.at(v.name)));
  }
  std::map<std::string, double> params;
  for (const auto& p : ha.free_params()) {
    if (!w.params.has(p)) throw ShapeError("witness has no value for parameter '" + p + "'");
    params[p] = midpoint(w.params.at(p));
  }
  return simulate_automaton(ha, w.path.front(), x0, params, opt);
}

} // namespace hyreach
