// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hyreach/bmc.hpp"

namespace hyreach {

/// Which side of the threshold the goal is reachable on.
enum class Polarity { ReachableAbove, ReachableBelow };

struct ThresholdQuery {
  ReachQuery reach;  // automaton, goal, k_max, M, solver settings
  std::string param;
  double lo = 0.0, hi = 1.0;
  /// Search stops once the bracket is at most this wide; 0 = solver delta.
  double width = 0.0;
  Polarity polarity = Polarity::ReachableAbove;
  /// Probe lo, mid and hi first and warn on a non-monotone pattern.
  bool check_monotone = false;
};

struct Probe {
  double value = 0.0;
  VerdictKind verdict = VerdictKind::BudgetExceeded;
  double seconds = 0.0;
  SolverStats stats;
};

struct ThresholdResult {
  double threshold = 0.0;
  double lo = 0.0, hi = 0.0;  // final bracket
  std::vector<Probe> history;
  std::vector<std::string> warnings;
};

/// The solver ran out of budget during a search. Carries the bracket so far.
class SearchAbortedError : public Error {
public:
  SearchAbortedError(double lo, double hi, std::vector<Probe> history)
      : Error("budget exceeded while bracketing [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"),
        lo_(lo),
        hi_(hi),
        history_(std::move(history)) {}
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const std::vector<Probe>& history() const noexcept { return history_; }

private:
  double lo_, hi_;
  std::vector<Probe> history_;
};

/// check_reach with `param` pinned to `value`.
inline Probe probe(const ReachQuery& base, const std::string& param, double value) {
  ReachQuery q = base;
  auto r = Rational::from_double(value);
  q.automaton.set_param(param, r, r);
  ReachResult res = check_reach(q);
  return {value, res.kind, res.seconds, res.stats};
}

/// Bisection for the reachability threshold of one parameter. Delta-sat
/// counts as reachable, so the threshold carries a delta-sized halo.
inline ThresholdResult binary_search_threshold(const ThresholdQuery& q) {
  const ParamDecl* d = q.reach.automaton.find_param(q.param);
  if (!d) throw ArgumentError("unknown parameter '" + q.param + "'");
  if (!(q.lo < q.hi)) throw ArgumentError("search interval must satisfy lo < hi");
  const double width = q.width > 0 ? q.width : q.reach.solver.delta;
  ThresholdResult out;
  double lo = q.lo, hi = q.hi;
  const bool above = q.polarity == Polarity::ReachableAbove;
  auto reachable = [](const Probe& p) { return p.verdict == VerdictKind::DeltaSat; };
  auto run = [&](double v) {
    Probe p = probe(q.reach, q.param, v);
    out.history.push_back(p);
    if (p.verdict == VerdictKind::BudgetExceeded) throw SearchAbortedError(lo, hi, out.history);
    return p;
  };
  if (q.check_monotone && hi - lo > width) {
    bool a = reachable(run(lo)), m = reachable(run(0.5 * (lo + hi))), b = reachable(run(hi));
    // Reachability must switch at most once, in the polarity's direction.
    bool ok = above ? (!a || m) && (!m || b) : (a || !m) && (m || !b);
    if (!ok) out.warnings.push_back("reachability is not monotone in " + q.param + " over the search interval");
  }
  while (hi - lo > width) {
    double mid = 0.5 * (lo + hi);
    bool r = reachable(run(mid));
    if (r == above) hi = mid;
    else lo = mid;
  }
  out.lo = lo;
  out.hi = hi;
  out.threshold = 0.5 * (lo + hi);
  return out;
}

struct LineFit {
  double slope = 0.0, intercept = 0.0;
  double residual_sum = 0.0;  // sum of squared residuals
};

/// Ordinary least squares y = slope * x + intercept.
inline LineFit least_squares_line(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) throw DegenerateError("least squares needs two points with distinct x");
  double sx = 0, sy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double n = static_cast<double>(pts.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw DegenerateError("least squares needs two points with distinct x");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (auto [x, y] : pts) {
    double e = y - (f.slope * x + f.intercept);
    f.residual_sum += e * e;
  }
  return f;
}

struct SweepQuery {
  ReachQuery reach;
  std::string p1, p2;
  std::vector<double> samples;  // values of p1
  double lo = 0.0, hi = 1.0;    // search interval for p2
  double width = 0.0;
  /// Side of the p2 threshold on which the goal is reachable.
  Polarity polarity = Polarity::ReachableBelow;
};

/// Unreachable region a * p1 + p2 >= c (or <= c for reachable-above).
struct BoundaryFit {
  double a = 0.0, c = 0.0;
  std::vector<std::pair<double, double>> samples;  // (p1, p2 threshold)
  double residual_sum = 0.0, max_residual = 0.0;
  std::vector<std::string> warnings;
  SolverStats stats;

  std::string report() const {
    std::ostringstream os;
    char buf[160];
    for (auto [x, y] : samples) {
      std::snprintf(buf, sizeof buf, "sample %.6g threshold %.6g\n", x, y);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "fit a=%.6g c=%.6g residual_sum=%.6g max_residual=%.6g\n", a, c, residual_sum,
                  max_residual);
    os << buf;
    for (const auto& w : warnings) os << "warning " << w << "\n";
    os << "stats " << stats.to_kv() << "\n";
    return os.str();
  }
};

/// One threshold search for p2 per p1 sample, then a least-squares line.
inline BoundaryFit sweep_boundary(const SweepQuery& q) {
  BoundaryFit fit;
  for (double s : q.samples) {
    ThresholdQuery t;
    t.reach = q.reach;
    auto r = Rational::from_double(s);
    t.reach.automaton.set_param(q.p1, r, r);
    t.param = q.p2;
    t.lo = q.lo;
    t.hi = q.hi;
    t.width = q.width;
    t.polarity = q.polarity;
    try {
      auto res = binary_search_threshold(t);
      for (const auto& p : res.history) fit.stats.merge(p.stats);
      fit.samples.emplace_back(s, res.threshold);
    } catch (const SearchAbortedError& e) {
      for (const auto& p : e.history()) fit.stats.merge(p.stats);
      fit.warnings.push_back("sample " + std::to_string(s) + ": " + e.what());
    }
  }
  std::vector<double> xs;
  for (auto [x, y] : fit.samples)
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
  if (xs.size() < 2) throw InsufficientDataError("boundary fit needs at least two distinct samples");
  LineFit l = least_squares_line(fit.samples);
  fit.a = -l.slope;
  fit.c = l.intercept;
  fit.residual_sum = l.residual_sum;
  for (auto [x, y] : fit.samples) fit.max_residual = std::max(fit.max_residual, std::fabs(y - (l.slope * x + l.intercept)));
  return fit;
}

} // namespace hyreach
