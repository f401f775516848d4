// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyreach/box.hpp"
#include "hyreach/contractor.hpp"
#include "hyreach/formula.hpp"
#include "hyreach/tape.hpp"

namespace hyreach {

/// dx/dt = f(x, p) over named state variables and parameters.
///
/// Internally states and parameters share one slot vector: states first,
/// parameters after them. Parameters have zero derivative.
class VectorField {
public:
  VectorField(std::vector<std::string> state, std::vector<std::string> params, std::vector<Term> rhs,
              std::vector<Interval> bounds = {})
      : state_(std::move(state)), params_(std::move(params)), rhs_(std::move(rhs)), bounds_(std::move(bounds)) {
    if (rhs_.size() != state_.size()) throw ArgumentError("vector field needs one right-hand side per state variable");
    if (bounds_.empty()) bounds_.assign(state_.size(), Interval::entire());
    if (bounds_.size() != state_.size()) throw ArgumentError("vector field bounds do not match the state");
    names_ = state_;
    names_.insert(names_.end(), params_.begin(), params_.end());
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (!index_.emplace(names_[i], static_cast<int>(i)).second)
        throw ArgumentError("duplicate name in vector field: " + names_[i]);
    auto slot = [this](const std::string& n) {
      auto it = index_.find(n);
      if (it == index_.end()) throw ArgumentError("vector field refers to unknown name " + n);
      return it->second;
    };
    f_tape_ = Tape(rhs_, slot);
    std::vector<Term> jac;
    for (const auto& r : rhs_)
      for (const auto& v : names_) jac.push_back(r.derivative(v));
    jac_tape_ = Tape(jac, slot);
    for (const auto& r : rhs_) {
      bool clock = true;
      for (const auto& v : r.free_vars())
        if (index_.at(v) < static_cast<int>(state_.size())) clock = false;
      clock_.push_back(clock);
    }
  }

  std::size_t dim() const noexcept { return state_.size(); }
  std::size_t nparams() const noexcept { return params_.size(); }
  /// dim() + nparams()
  std::size_t size() const noexcept { return names_.size(); }

  const std::vector<std::string>& state_names() const noexcept { return state_; }
  const std::vector<std::string>& param_names() const noexcept { return params_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Term>& rhs() const noexcept { return rhs_; }
  const std::vector<Interval>& bounds() const noexcept { return bounds_; }

  std::optional<int> slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// True when f_i does not depend on any state variable.
  bool clock_like(std::size_t i) const { return clock_[i]; }

  /// The field with time reversed.
  VectorField reversed() const {
    std::vector<Term> neg;
    for (const auto& r : rhs_) neg.push_back(-r);
    return VectorField(state_, params_, neg, bounds_);
  }

  /// f over `z` (size()); writes dim() values. Throws DomainError.
  void eval(std::span<const Interval> z, std::span<Interval> out) const {
    thread_local std::vector<Interval> scratch;
    f_tape_.forward(z, scratch);
    for (std::size_t i = 0; i < dim(); ++i) out[i] = scratch[f_tape_.root(i)];
  }

  Interval eval(std::span<const Interval> z, std::size_t i) const {
    thread_local std::vector<Interval> scratch;
    f_tape_.forward(z, scratch);
    return scratch[f_tape_.root(i)];
  }

  void eval_point(std::span<const double> z, std::span<double> out) const {
    thread_local std::vector<double> scratch;
    f_tape_.forward_point(z, scratch);
    for (std::size_t i = 0; i < dim(); ++i) out[i] = scratch[f_tape_.root(i)];
  }

  /// Row-major dim() x size() Jacobian enclosure (Clarke at kinks).
  void jacobian(std::span<const Interval> z, std::span<Interval> out) const {
    thread_local std::vector<Interval> scratch;
    jac_tape_.forward(z, scratch);
    for (std::size_t k = 0; k < jac_tape_.num_roots(); ++k) out[k] = scratch[jac_tape_.root(k)];
  }

private:
  std::vector<std::string> state_, params_, names_;
  std::vector<Term> rhs_;
  std::vector<Interval> bounds_;
  std::map<std::string, int> index_;
  Tape f_tape_, jac_tape_;
  std::vector<bool> clock_;
};

/// Constraint every feasible trajectory satisfies at every instant: the
/// field's bounds plus an optional invariant, over the field's slots.
class FlowDomain {
public:
  FlowDomain() = default;

  explicit FlowDomain(const VectorField& f, const Formula* invariant = nullptr) : bounds_(f.bounds()) {
    if (invariant && !invariant->is_true()) {
      inv_ = FormulaContractor(*invariant, [&](const std::string& n) {
        auto s = f.slot(n);
        if (!s) throw ArgumentError("invariant refers to unknown name " + n);
        return *s;
      });
      has_inv_ = true;
    }
  }

  bool bounded() const noexcept { return !bounds_.empty(); }

  /// Narrows `z` to the domain; false if no point remains.
  bool contract(std::span<Interval> z) const {
    for (std::size_t i = 0; i < bounds_.size(); ++i) {
      z[i] = intersect(z[i], bounds_[i]);
      if (z[i].is_empty()) return false;
    }
    return !has_inv_ || inv_.contract(z);
  }

  const std::vector<Interval>& bounds() const noexcept { return bounds_; }
  const FormulaContractor& invariant() const noexcept { return inv_; }
  bool has_invariant() const noexcept { return has_inv_; }

private:
  std::vector<Interval> bounds_;
  FormulaContractor inv_;
  bool has_inv_ = false;
};

struct StepControl {
  /// Bound on the width of the Taylor remainder per unit of time.
  double target = 1e-4;
  /// Extra remainder allowed per unit of time, relative to the width of the
  /// current enclosure.
  double relative = 0.1;
  std::size_t max_steps = 100000;
  /// Smallest step before falling back to an invariant box; 0 = horizon / max_steps.
  double h_min = 0.0;
  double h_max = 0.0;
  bool invariant_box = true;
  /// At h_min a step is kept when its remainder meets the target relaxed
  /// by this factor.
  double floor_slack = 100.0;
};

/// One step of an enclosure: the state at `t0`, the tube over
/// [t0, t0 + h], and the data of the mean-value form for sub-step queries.
struct EnclosureStep {
  double t0 = 0, h = 0;
  std::vector<Interval> x0;
  std::vector<Interval> tube;
  std::vector<double> mid;
  std::vector<Interval> fm, fb, jx, acc;
  bool invariant_box = false;  // tube only, no sub-step data
};

/// Time-indexed box enclosure of every trajectory from an initial box.
class Enclosure {
public:
  enum class Status {
    Complete,    // covers [0, horizon]
    Infeasible,  // no trajectory stays in the domain beyond reached()
    Incomplete,  // integration stopped at reached(); later times unknown
  };

  Enclosure() = default;
  Enclosure(std::vector<std::string> names, std::size_t dim, double horizon)
      : names_(std::move(names)), dim_(dim), horizon_(horizon) {}

  Status status() const noexcept { return status_; }
  double horizon() const noexcept { return horizon_; }
  double reached() const noexcept { return steps_.empty() ? 0.0 : steps_.back().t0 + steps_.back().h; }
  const std::vector<EnclosureStep>& steps() const noexcept { return steps_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Interval>& initial() const noexcept { return initial_; }

  /// Marks every time after reached() as unknown.
  void mark_incomplete() noexcept { status_ = Status::Incomplete; }

  /// True if every time of `tau` is either enclosed or known infeasible.
  bool covers(const Interval& tau) const {
    return status_ != Status::Incomplete || tau.hi() <= reached();
  }

  /// Hull of the states at times `tau`; empty entries if no enclosed time
  /// of `tau` admits a trajectory.
  std::vector<Interval> at(const Interval& tau) const {
    std::vector<Interval> r(names_.size(), Interval::empty());
    if (tau.is_empty()) return r;
    if (steps_.empty()) {
      if (tau.lo() <= 0.0 && !initial_.empty()) return initial_;
      return r;
    }
    auto it = std::upper_bound(steps_.begin(), steps_.end(), tau.lo(),
                               [](double v, const EnclosureStep& s) { return v < s.t0 + s.h; });
    if (it != steps_.begin() && tau.lo() <= std::prev(it)->t0 + std::prev(it)->h) --it;
    for (; it != steps_.end() && it->t0 <= tau.hi(); ++it) {
      double a = std::max(tau.lo(), it->t0), b = std::min(tau.hi(), it->t0 + it->h);
      if (a > b) continue;
      auto v = eval_step(*it, a - it->t0, b - it->t0);
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = hull(r[i], v[i]);
    }
    return r;
  }

  /// Enclosure at the horizon actually reached.
  std::vector<Interval> final_state() const { return at(Interval(reached())); }

  /// (time subinterval, box) pairs in time order.
  std::vector<std::pair<Interval, Box>> segments() const {
    auto vars = std::make_shared<VarSet>(names_);
    std::vector<std::pair<Interval, Box>> out;
    for (const auto& s : steps_) out.emplace_back(Interval(s.t0, s.t0 + s.h), Box(vars, s.tube));
    return out;
  }

  /// State enclosure at relative times [a, b] inside step `s`.
  std::vector<Interval> eval_step(const EnclosureStep& s, double a, double b) const {
    if (s.invariant_box) return s.tube;
    a = std::max(0.0, a);
    b = std::min(s.h, b);
    if (a <= 0.0 && b >= s.h) return s.tube;
    Interval tau(a, std::max(a, b));
    std::size_t n = dim_, m = names_.size();
    std::vector<Interval> r(m);
    Interval half_tau2 = sqr(tau) * Interval(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      // (I + tau J) (x0 - mid), grouped per entry
      Interval sum(0.0);
      for (std::size_t j = 0; j < m; ++j) {
        Interval coef = s.jx[i * m + j].is_empty() ? Interval(0.0) : tau * s.jx[i * m + j];
        if (j == i) coef = coef + Interval(1.0);
        sum = sum + coef * (s.x0[j] - Interval(s.mid[j]));
      }
      Interval mv = Interval(s.mid[i]) + tau * s.fm[i] + sum + half_tau2 * s.acc[i];
      Interval nat = s.x0[i] + tau * s.fb[i];
      r[i] = intersect(intersect(mv, nat), s.tube[i]);
    }
    for (std::size_t j = n; j < m; ++j) r[j] = s.x0[j];
    return r;
  }

private:
  friend Enclosure integrate(const VectorField&, std::span<const Interval>, double, const StepControl&,
                             const FlowDomain*);

  std::vector<std::string> names_;
  std::size_t dim_ = 0;
  double horizon_ = 0;
  std::vector<Interval> initial_;
  std::vector<EnclosureStep> steps_;
  Status status_ = Status::Complete;
};

namespace detail {

inline bool finite(std::span<const Interval> z) {
  for (const auto& v : z)
    if (v.is_empty() || !std::isfinite(v.lo()) || !std::isfinite(v.hi())) return false;
  return true;
}

inline Interval inflate(const Interval& v, double rel, double abs) {
  double w = v.width();
  double e = rel * w + abs * (1.0 + std::max(std::fabs(v.lo()), std::fabs(v.hi())));
  return Interval::unchecked(rounding::add_down(v.lo(), -e), rounding::add_up(v.hi(), e));
}

/// Rough enclosure of every trajectory from `x` over [0, h]. With a domain,
/// only trajectories that stay in it are enclosed.
inline std::optional<std::vector<Interval>> apriori(const VectorField& f, std::span<const Interval> x, double h,
                                                     const FlowDomain* dom) {
  std::size_t n = f.dim(), m = f.size();
  Interval H(0.0, h);
  std::vector<Interval> fz(n), b(x.begin(), x.end()), next(m);
  auto clip = [&](std::vector<Interval>& z) {
    if (!dom) return true;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = intersect(z[i], dom->bounds()[i]);
      if (z[i].is_empty()) return false;
    }
    return true;
  };
  try {
    f.eval(x, fz);
    for (std::size_t i = 0; i < n; ++i) b[i] = inflate(x[i] + H * fz[i], 0.1, 1e-12);
    if (clip(b)) {
      for (int iter = 0; iter < 6; ++iter) {
        f.eval(b, fz);
        bool inside = true;
        for (std::size_t i = 0; i < n; ++i) {
          next[i] = x[i] + H * fz[i];
          if (!b[i].contains(next[i])) inside = false;
        }
        if (inside) {
          for (std::size_t i = 0; i < n; ++i) b[i] = next[i];
          return b;
        }
        for (std::size_t i = 0; i < n; ++i) b[i] = inflate(hull(b[i], next[i]), 0.2 * (iter + 1), 1e-12);
        if (!clip(b)) break;
      }
    }
  } catch (const DomainError&) {
  }
  if (!dom) return std::nullopt;
  // Trajectories that remain in the domain: iterate from the domain box.
  b.assign(x.begin(), x.end());
  for (std::size_t i = 0; i < n; ++i) b[i] = dom->bounds()[i];
  if (!dom->contract(b)) return std::nullopt;
  for (int iter = 0; iter < 12; ++iter) {
    try {
      f.eval(b, fz);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    double before = 0, after = 0;
    for (std::size_t i = 0; i < n; ++i) {
      before += b[i].width();
      b[i] = intersect(b[i], x[i] + H * fz[i]);
      if (b[i].is_empty()) return std::nullopt;
      after += b[i].width();
    }
    if (!dom->contract(b)) return std::nullopt;
    if (!(after < 0.9 * before)) break;
  }
  if (!finite(b)) return std::nullopt;
  return b;
}

/// Box K containing every trajectory from `x` that stays in the domain for
/// times in [0, span]: clock-like components move linearly, every other
/// face of K has the field pointing inward or lies on the domain boundary.
inline std::optional<std::vector<Interval>> invariant_box(const VectorField& f, std::span<const Interval> x,
                                                          double span, const FlowDomain* dom) {
  std::size_t n = f.dim(), m = f.size();
  std::vector<Interval> lim(x.begin(), x.end());
  for (std::size_t i = 0; i < n; ++i) lim[i] = dom ? dom->bounds()[i] : Interval::entire();
  if (dom && !dom->contract(lim)) return std::nullopt;
  std::vector<Interval> k(x.begin(), x.end());
  for (std::size_t i = 0; i < n; ++i) {
    k[i] = intersect(k[i], lim[i]);
    if (k[i].is_empty()) return std::nullopt;
  }
  auto place_clocks = [&]() -> bool {
    for (std::size_t i = 0; i < n; ++i) {
      if (!f.clock_like(i)) continue;
      Interval r = f.eval(k, i);
      k[i] = intersect(x[i] + Interval(0.0, span) * r, lim[i]);
      if (k[i].is_empty()) return false;
    }
    return true;
  };
  auto face = [&](std::size_t i, bool upper, double at) -> bool {
    std::vector<Interval> z = k;
    z[i] = Interval(at);
    try {
      Interval r = f.eval(z, i);
      return upper ? r.hi() <= 0.0 : r.lo() >= 0.0;
    } catch (const DomainError&) {
      return true;  // no trajectory passes through this face
    }
  };
  std::vector<double> grow_hi(n), grow_lo(n);
  for (std::size_t i = 0; i < n; ++i) {
    double scale = std::isfinite(lim[i].width()) ? lim[i].width() : 1.0 + std::fabs(x[i].hi());
    grow_hi[i] = grow_lo[i] = std::max(1e-9, 1e-6 * scale);
  }
  try {
    if (!place_clocks()) return std::nullopt;
    bool ok = false;
    for (int iter = 0; iter < 200 && !ok; ++iter) {
      ok = true;
      for (std::size_t i = 0; i < n; ++i) {
        if (f.clock_like(i)) continue;
        if (k[i].hi() < lim[i].hi() && !face(i, true, k[i].hi())) {
          ok = false;
          k[i] = Interval::unchecked(k[i].lo(), std::min(lim[i].hi(), rounding::add_up(k[i].hi(), grow_hi[i])));
          grow_hi[i] *= 2;
        }
        if (k[i].lo() > lim[i].lo() && !face(i, false, k[i].lo())) {
          ok = false;
          k[i] = Interval::unchecked(std::max(lim[i].lo(), rounding::add_down(k[i].lo(), -grow_lo[i])), k[i].hi());
          grow_lo[i] *= 2;
        }
      }
      if (!ok && !place_clocks()) return std::nullopt;
    }
    if (!ok) return std::nullopt;
    // Shrink each face back towards x while the inward test still passes.
    for (int round = 0; round < 2; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        if (f.clock_like(i)) continue;
        double lo = x[i].hi(), hi = k[i].hi();
        for (int b = 0; b < 40 && hi > lo; ++b) {
          double c = lo + 0.5 * (hi - lo);
          if (c <= lo || c >= hi) break;
          Interval keep = k[i];
          k[i] = Interval::unchecked(keep.lo(), c);
          bool pass = face(i, true, c);
          k[i] = keep;
          if (pass) {
            hi = c;
            k[i] = Interval::unchecked(keep.lo(), c);
          } else {
            lo = c;
          }
        }
        if (face(i, true, x[i].hi())) k[i] = Interval::unchecked(k[i].lo(), std::max(k[i].lo(), x[i].hi()));
        lo = k[i].lo();
        hi = x[i].lo();
        for (int b = 0; b < 40 && hi > lo; ++b) {
          double c = lo + 0.5 * (hi - lo);
          if (c <= lo || c >= hi) break;
          Interval keep = k[i];
          k[i] = Interval::unchecked(c, keep.hi());
          bool pass = face(i, false, c);
          k[i] = keep;
          if (pass) {
            lo = c;
            k[i] = Interval::unchecked(c, keep.hi());
          } else {
            hi = c;
          }
        }
        if (face(i, false, x[i].lo())) k[i] = Interval::unchecked(std::min(k[i].hi(), x[i].lo()), k[i].hi());
      }
      if (!place_clocks()) return std::nullopt;
    }
  } catch (const DomainError&) {
    return std::nullopt;
  }
  for (std::size_t i = n; i < m; ++i) k[i] = x[i];
  if (dom && !dom->contract(k)) return std::nullopt;
  if (!finite(k)) return std::nullopt;
  return k;
}

} // namespace detail

/// Validated integration of `f` from the initial states/parameters `z0`
/// (size() entries) over [0, horizon].
///
/// Without a domain the enclosure holds for every trajectory and failures
/// throw EnclosureEscapeError / StepUnderflowError. With a domain it holds
/// for every trajectory up to the first instant it leaves the domain, and
/// failures end the enclosure early with status Incomplete.
inline Enclosure integrate(const VectorField& f, std::span<const Interval> z0, double horizon,
                           const StepControl& ctl = {}, const FlowDomain* dom = nullptr) {
  if (z0.size() != f.size()) throw ShapeError("initial box does not match the vector field");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ArgumentError("horizon must be finite and non-negative");
  const std::size_t n = f.dim(), m = f.size();
  Enclosure enc(f.names(), n, horizon);
  std::vector<Interval> x(z0.begin(), z0.end());
  if (dom && !dom->contract(x)) {
    enc.status_ = Enclosure::Status::Infeasible;
    return enc;
  }
  enc.initial_ = x;
  if (horizon == 0.0) {
    EnclosureStep s;
    s.x0 = s.tube = x;
    s.invariant_box = true;
    enc.steps_.push_back(std::move(s));
    return enc;
  }
  const double h_min = ctl.h_min > 0 ? ctl.h_min : horizon / static_cast<double>(std::max<std::size_t>(ctl.max_steps, 1));
  const double h_max = ctl.h_max > 0 ? std::min(ctl.h_max, horizon) : horizon;
  double t = 0.0;
  double h = std::min(h_max, horizon / 16.0);

  auto fallback = [&](const char* why) {
    if (ctl.invariant_box) {
      if (auto k = detail::invariant_box(f, x, horizon - t, dom)) {
        EnclosureStep s;
        s.t0 = t;
        s.h = horizon - t;
        s.x0 = x;
        s.tube = std::move(*k);
        s.invariant_box = true;
        enc.steps_.push_back(std::move(s));
        return;
      }
    }
    if (!dom) {
      if (std::string(why) == "escape") throw EnclosureEscapeError("enclosure cannot be certified at t = " + std::to_string(t));
      throw StepUnderflowError("step size underflow at t = " + std::to_string(t));
    }
    enc.status_ = Enclosure::Status::Incomplete;
  };

  std::vector<Interval> fb(n), jb(n * m), acc(n), fm(n), jx(n * m);
  std::vector<Interval> midbox(m);
  std::vector<double> mid(m);
  while (t < horizon) {
    if (enc.steps_.size() >= ctl.max_steps) {
      fallback("steps");
      return enc;
    }
    double remaining = horizon - t;
    h = std::min(h, remaining);
    if (remaining - h < 1e-3 * h) h = remaining;
    std::optional<std::vector<Interval>> b;
    const char* failure = nullptr;
    for (;;) {
      b = detail::apriori(f, x, h, dom);
      if (b) {
        try {
          f.eval(*b, fb);
          f.jacobian(*b, jb);
        } catch (const DomainError&) {
          b.reset();
        }
      }
      if (!b) {
        failure = "escape";
      } else {
        double ratio = rounding::kInf, floor_ratio = rounding::kInf;
        Interval c = sqr(Interval(h)) * Interval(0.5);
        for (std::size_t i = 0; i < n; ++i) {
          Interval a(0.0);
          for (std::size_t j = 0; j < n; ++j) a = a + jb[i * m + j] * fb[j];
          acc[i] = a;
          double w = (c * a).width();
          double rel = ctl.relative * x[i].width();
          if (!std::isfinite(w)) ratio = floor_ratio = 0.0;
          else if (w > 0) {
            ratio = std::min(ratio, h * (ctl.target + rel) / w);
            floor_ratio = std::min(floor_ratio, h * (ctl.target * ctl.floor_slack + rel) / w);
          }
        }
        if (ratio >= 1.0 || (h <= h_min && floor_ratio >= 1.0)) break;
        failure = "underflow";
        if (h <= h_min) {
          h = 0.0;
          break;
        }
        ratio = ratio > 0 ? std::sqrt(ratio) : 0.1;
        // The last try is at h_min itself, with a looser precision demand.
        h = std::max(h * std::clamp(0.9 * ratio, 0.05, 0.5), h_min);
        continue;
      }
      h *= 0.5;
      if (h < h_min) break;
    }
    if (h < h_min || !b) {
      fallback(failure ? failure : "underflow");
      return enc;
    }
    for (std::size_t j = 0; j < m; ++j) {
      mid[j] = midpoint(x[j]);
      midbox[j] = Interval(mid[j]);
    }
    try {
      f.eval(midbox, fm);
      f.jacobian(x, jx);
    } catch (const DomainError&) {
      fallback("escape");
      return enc;
    }
    EnclosureStep s;
    s.t0 = t;
    s.h = h;
    s.x0 = x;
    s.tube = *b;
    if (dom && !dom->contract(s.tube)) {
      enc.status_ = Enclosure::Status::Infeasible;
      return enc;
    }
    s.mid = mid;
    s.fm = fm;
    s.fb = fb;
    s.jx = jx;
    s.acc = acc;
    s.invariant_box = false;
    // The tube computation above replaced the full-step evaluation, so
    // compute the endpoint with the mean-value form.
    std::vector<Interval> next = enc.eval_step(s, h, h);
    bool feasible = true;
    for (std::size_t i = 0; i < n; ++i)
      if (next[i].is_empty()) feasible = false;
    if (feasible && dom) feasible = dom->contract(next);
    enc.steps_.push_back(std::move(s));
    t = (remaining == h) ? horizon : t + h;
    if (!feasible) {
      enc.status_ = t >= horizon ? Enclosure::Status::Complete : Enclosure::Status::Infeasible;
      if (t < horizon) return enc;
      break;
    }
    if (!detail::finite(next)) {
      fallback("escape");
      return enc;
    }
    x = std::move(next);
    h = std::min(h * 2.0, h_max);
  }
  return enc;
}

/// Box-level entry point: `x0` over the field's state names, `params` over
/// its parameter names.
inline Enclosure integrate(const VectorField& f, const Box& x0, const Box& params, double horizon,
                           const StepControl& ctl = {}) {
  std::vector<Interval> z(f.size());
  for (std::size_t i = 0; i < f.dim(); ++i) z[i] = x0.at(f.state_names()[i]);
  for (std::size_t j = 0; j < f.nparams(); ++j) z[f.dim() + j] = params.at(f.param_names()[j]);
  return integrate(f, z, horizon, ctl);
}

enum class InvariantCheck { CertainlyHolds, CertainlyViolated, Unknown };

/// Interval evaluation of `inv` on every step box of `enc`.
inline InvariantCheck check_invariant_along(const Formula& inv, const Enclosure& enc) {
  auto vars = std::make_shared<VarSet>(enc.names());
  bool all = true;
  for (const auto& s : enc.steps()) {
    Truth r = eval_interval(inv, Box(vars, s.tube));
    if (r == Truth::False) return InvariantCheck::CertainlyViolated;
    if (r != Truth::True) all = false;
  }
  return all ? InvariantCheck::CertainlyHolds : InvariantCheck::Unknown;
}

inline InvariantCheck check_invariant_along(const FlowConstraint& fc, const Enclosure& enc) {
  if (!fc.invariant) return InvariantCheck::CertainlyHolds;
  return check_invariant_along(*fc.invariant, enc);
}

/// Reusable per-flow state for prune_flow: compiled domains and the last
/// forward enclosure.
class FlowPruner {
public:
  FlowPruner(std::shared_ptr<const VectorField> field, const Formula* invariant, StepControl ctl = {})
      : field_(std::move(field)), reversed_(std::make_shared<VectorField>(field_->reversed())),
        dom_(*field_, invariant), rdom_(*reversed_, invariant), ctl_(ctl), bctl_(ctl) {
    bctl_.max_steps = std::min<std::size_t>(ctl.max_steps, 2000);
  }

  const VectorField& field() const noexcept { return *field_; }
  const StepControl& control() const noexcept { return ctl_; }
  const FlowDomain& domain() const noexcept { return dom_; }

  /// Contracts (z0, zt, t): z0 holds states then parameters (size()),
  /// zt holds states (dim()). Returns false when no trajectory from z0
  /// reaches zt at a time in t while staying in the domain.
  bool prune(std::span<Interval> z0, std::span<Interval> zt, Interval& t, bool backward = true) const {
    const std::size_t n = field_->dim(), m = field_->size();
    t = intersect(t, Interval(0.0, rounding::kInf));
    if (t.is_empty()) return false;
    const Enclosure& fwd = forward(z0, t.hi());
    if (fwd.steps().empty() && fwd.status() == Enclosure::Status::Infeasible) return false;
    if (!narrow(fwd, zt, t, n)) return false;
    if (fwd.initial().size() == m)
      for (std::size_t i = 0; i < m; ++i) {
        z0[i] = intersect(z0[i], fwd.initial()[i]);
        if (z0[i].is_empty()) return false;
      }
    if (!backward) return true;
    // Backward: from the arrival box along the reversed field.
    std::vector<Interval> zb(m);
    for (std::size_t i = 0; i < n; ++i) zb[i] = zt[i];
    for (std::size_t j = n; j < m; ++j) zb[j] = z0[j];
    Enclosure bwd;
    try {
      bwd = integrate(*reversed_, zb, t.hi(), bctl_, &rdom_);
    } catch (const Error&) {
      return true;
    }
    if (bwd.steps().empty() && bwd.status() == Enclosure::Status::Infeasible) return false;
    std::vector<Interval> start(z0.begin(), z0.begin() + static_cast<std::ptrdiff_t>(n));
    Interval tb = t;
    if (!narrow(bwd, start, tb, n)) return false;
    for (std::size_t i = 0; i < n; ++i) z0[i] = start[i];
    t = tb;
    return true;
  }

  /// Forward enclosure from z0 up to `horizon`, reusing the last one when
  /// the inputs match.
  const Enclosure& forward(std::span<const Interval> z0, double horizon) const {
    if (cache_valid_ && horizon <= cache_horizon_ && std::equal(z0.begin(), z0.end(), cache_z0_.begin(), cache_z0_.end()))
      return cache_;
    cache_z0_.assign(z0.begin(), z0.end());
    cache_horizon_ = horizon;
    try {
      cache_ = integrate(*field_, z0, horizon, ctl_, &dom_);
    } catch (const Error&) {
      cache_ = Enclosure(field_->names(), field_->dim(), horizon);
      cache_.mark_incomplete();
    }
    cache_valid_ = true;
    return cache_;
  }

  void clear_cache() const { cache_valid_ = false; }

private:
  /// Narrows the arrival box `zt` (first n entries) and the time window
  /// `t` using `enc`. Times not covered by an incomplete enclosure are kept.
  static bool narrow(const Enclosure& enc, std::span<Interval> zt, Interval& t, std::size_t n) {
    const auto& steps = enc.steps();
    auto meets = [&](const std::vector<Interval>& v) {
      for (std::size_t i = 0; i < n; ++i)
        if (intersect(v[i], zt[i]).is_empty()) return false;
      return true;
    };
    double covered = enc.reached();
    bool unknown_tail = enc.status() == Enclosure::Status::Incomplete && t.hi() > covered;
    double tlo = rounding::kInf, thi = -rounding::kInf;
    std::vector<Interval> hull_state(n, Interval::empty());
    auto absorb = [&](const std::vector<Interval>& v, double a, double b) {
      tlo = std::min(tlo, a);
      thi = std::max(thi, b);
      for (std::size_t i = 0; i < n; ++i) hull_state[i] = hull(hull_state[i], intersect(v[i], zt[i]));
    };
    // Refine the time range inside one step by bisection on sub-intervals.
    auto refine = [&](const EnclosureStep& s, double a, double b) {
      if (s.invariant_box) {
        absorb(s.tube, a, b);
        return;
      }
      constexpr int kPieces = 16;
      double w = (b - a) / kPieces;
      for (int p = 0; p < kPieces; ++p) {
        double pa = a + p * w, pb = p + 1 == kPieces ? b : a + (p + 1) * w;
        auto v = enc.eval_step(s, pa - s.t0, pb - s.t0);
        if (meets(v)) absorb(v, pa, pb);
      }
    };
    if (steps.empty()) {
      if (enc.status() != Enclosure::Status::Incomplete) {
        if (enc.initial().empty() || t.lo() > 0.0) return false;
        if (!meets(enc.initial())) return false;
        absorb(enc.initial(), 0.0, 0.0);
      }
    }
    for (const auto& s : steps) {
      double a = std::max(t.lo(), s.t0), b = std::min(t.hi(), s.t0 + s.h);
      if (a > b) continue;
      if (!meets(s.tube)) continue;
      if (s.invariant_box || (a == s.t0 && b == s.t0 + s.h && w_small(s, zt, n))) {
        absorb(s.tube, a, b);
      } else {
        refine(s, a, b);
      }
    }
    if (unknown_tail) {
      tlo = std::min(tlo, std::max(covered, t.lo()));
      thi = t.hi();
      for (std::size_t i = 0; i < n; ++i) hull_state[i] = zt[i];
    }
    if (tlo > thi) return false;
    t = intersect(t, Interval(tlo, thi));
    if (t.is_empty()) return false;
    for (std::size_t i = 0; i < n; ++i) {
      zt[i] = intersect(zt[i], hull_state[i]);
      if (zt[i].is_empty()) return false;
    }
    return true;
  }

  /// Whole-step tube already inside the target box: no need to refine.
  static bool w_small(const EnclosureStep& s, std::span<const Interval> zt, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!zt[i].contains(s.tube[i])) return false;
    return true;
  }

  std::shared_ptr<const VectorField> field_;
  std::shared_ptr<const VectorField> reversed_;
  FlowDomain dom_, rdom_;
  StepControl ctl_, bctl_;
  mutable Enclosure cache_;
  mutable std::vector<Interval> cache_z0_;
  mutable double cache_horizon_ = 0;
  mutable bool cache_valid_ = false;
};

struct FlowPruning {
  Box x0, xt;
  Interval t;
};

/// Box-level flow contractor: `x0` and `xt` over `fc.pre` / `fc.post`,
/// `params` over the field's parameter names.
inline std::optional<FlowPruning> prune_flow(const FlowConstraint& fc, const Box& x0, const Box& xt, Interval t,
                                             const Box& params, const StepControl& ctl = {}) {
  const VectorField& f = *fc.field;
  FlowPruner pruner(fc.field, fc.invariant.get(), ctl);
  std::vector<Interval> z0(f.size()), zt(f.dim());
  auto pre_name = [&](std::size_t i) { return fc.pre.empty() ? f.state_names()[i] : fc.pre[i]; };
  auto post_name = [&](std::size_t i) { return fc.post.empty() ? f.state_names()[i] : fc.post[i]; };
  for (std::size_t i = 0; i < f.dim(); ++i) {
    z0[i] = x0.at(pre_name(i));
    zt[i] = xt.at(post_name(i));
  }
  for (std::size_t j = 0; j < f.nparams(); ++j) z0[f.dim() + j] = params.at(f.param_names()[j]);
  t = intersect(t, Interval(0.0, fc.dwell_bound));
  if (t.is_empty() || !pruner.prune(z0, zt, t)) return std::nullopt;
  FlowPruning out{x0, xt, t};
  for (std::size_t i = 0; i < f.dim(); ++i) {
    out.x0.at(pre_name(i)) = z0[i];
    out.xt.at(post_name(i)) = zt[i];
  }
  return out;
}

} // namespace hyreach
