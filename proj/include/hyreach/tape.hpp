// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hyreach/box.hpp"
#include "hyreach/interval.hpp"
#include "hyreach/term.hpp"

namespace hyreach {

/// A set of terms flattened into one instruction list over numbered variable
/// slots. Shared sub-terms (same node) are evaluated once.
///
/// Interval evaluation is the natural interval extension of every
/// constructor; `revise` is the HC4 forward-backward contractor.
class Tape {
public:
  using SlotResolver = std::function<int(const std::string&)>;

  Tape() = default;

  /// Compiles `terms`; `slot_of` maps each free variable to a slot index.
  Tape(std::span<const Term> terms, const SlotResolver& slot_of) {
    std::unordered_map<const void*, int> memo;
    for (const auto& t : terms) roots_.push_back(emit(t, slot_of, memo));
  }

  Tape(const Term& term, const SlotResolver& slot_of) : Tape(std::span<const Term>(&term, 1), slot_of) {}

  std::size_t num_roots() const noexcept { return roots_.size(); }
  std::size_t size() const noexcept { return code_.size(); }
  int max_slot() const noexcept { return max_slot_; }

  /// Evaluates every instruction; root i's value is `scratch[root(i)]`.
  void forward(std::span<const Interval> slots, std::vector<Interval>& scratch) const {
    scratch.resize(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) scratch[i] = exec(code_[i], slots, scratch);
  }

  int root(std::size_t i) const { return roots_[i]; }

  Interval eval(std::span<const Interval> slots, std::size_t root_index = 0) const {
    std::vector<Interval> scratch;
    forward(slots, scratch);
    return scratch[roots_.at(root_index)];
  }

  double eval_point(std::span<const double> slots, std::size_t root_index = 0) const {
    std::vector<double> scratch(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) scratch[i] = exec_point(code_[i], slots, scratch);
    return scratch[roots_.at(root_index)];
  }

  void forward_point(std::span<const double> slots, std::vector<double>& scratch) const {
    scratch.resize(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) scratch[i] = exec_point(code_[i], slots, scratch);
  }

  /// HC4-revise of `root(root_index) in target`: narrows `slots` to a box that
  /// still contains every point of the original box satisfying the
  /// constraint. Returns false if the constraint is infeasible on the box.
  bool revise(std::span<Interval> slots, const Interval& target, std::vector<Interval>& scratch,
              std::size_t root_index = 0) const {
    try {
      forward(slots, scratch);
    } catch (const DomainError&) {
      return false;
    }
    int r = roots_.at(root_index);
    scratch[r] = intersect(scratch[r], target);
    if (scratch[r].is_empty()) return false;
    // Single-root tapes are backward-propagated in reverse emission order,
    // which visits every parent before its children.
    for (int i = r; i >= 0; --i) {
      const Instr& in = code_[i];
      if (!backward(in, slots, scratch, scratch[i])) return false;
    }
    return true;
  }

private:
  struct Instr {
    Op op;
    int a = -1;
    int b = -1;
    int slot = -1;
    Interval c;
    long ipow = 0;  // exponent when Pow has an exact integer exponent
    bool is_ipow = false;
  };

  int emit(const Term& t, const SlotResolver& slot_of, std::unordered_map<const void*, int>& memo) {
    if (auto it = memo.find(t.identity()); it != memo.end()) return it->second;
    Instr in{};
    in.op = t.op();
    switch (t.op()) {
      case Op::Var:
        in.slot = slot_of(t.name());
        max_slot_ = std::max(max_slot_, in.slot);
        break;
      case Op::Const: in.c = t.const_value(); break;
      default:
        in.a = emit(t.arg(0), slot_of, memo);
        if (arity(t.op()) == 2) in.b = emit(t.arg(1), slot_of, memo);
        if (t.op() == Op::Pow && t.arg(1).is_const() && t.arg(1).exact() && t.arg(1).exact()->is_integer()) {
          in.is_ipow = true;
          in.ipow = static_cast<long>(t.arg(1).exact()->num());
        }
    }
    code_.push_back(in);
    int idx = static_cast<int>(code_.size()) - 1;
    memo.emplace(t.identity(), idx);
    return idx;
  }

  static Interval exec(const Instr& in, std::span<const Interval> slots, const std::vector<Interval>& v) {
    switch (in.op) {
      case Op::Var: return slots[in.slot];
      case Op::Const: return in.c;
      case Op::Add: return v[in.a] + v[in.b];
      case Op::Sub: return v[in.a] - v[in.b];
      case Op::Mul: return in.a == in.b ? sqr(v[in.a]) : v[in.a] * v[in.b];
      case Op::Div: return v[in.a] / v[in.b];
      case Op::Pow: return in.is_ipow ? pow_int(v[in.a], in.ipow) : pow(v[in.a], v[in.b]);
      case Op::Min: return min(v[in.a], v[in.b]);
      case Op::Max: return max(v[in.a], v[in.b]);
      case Op::Neg: return -v[in.a];
      case Op::Exp: return exp(v[in.a]);
      case Op::Log: return log(v[in.a]);
      case Op::Sin: return sin(v[in.a]);
      case Op::Cos: return cos(v[in.a]);
      case Op::Tanh: return tanh(v[in.a]);
      case Op::Sqrt: return sqrt(v[in.a]);
      case Op::Abs: return abs(v[in.a]);
      case Op::Sign: return sign(v[in.a]);
      case Op::Step: return step(v[in.a]);
    }
    return Interval::entire();
  }

  static double exec_point(const Instr& in, std::span<const double> slots, const std::vector<double>& v) {
    switch (in.op) {
      case Op::Var: return slots[in.slot];
      case Op::Const: return in.c.mid();
      case Op::Add: return v[in.a] + v[in.b];
      case Op::Sub: return v[in.a] - v[in.b];
      case Op::Mul: return v[in.a] * v[in.b];
      case Op::Div: return v[in.a] / v[in.b];
      case Op::Pow: return in.is_ipow ? std::pow(v[in.a], static_cast<double>(in.ipow)) : std::pow(v[in.a], v[in.b]);
      case Op::Min: return std::min(v[in.a], v[in.b]);
      case Op::Max: return std::max(v[in.a], v[in.b]);
      case Op::Neg: return -v[in.a];
      case Op::Exp: return std::exp(v[in.a]);
      case Op::Log: return std::log(v[in.a]);
      case Op::Sin: return std::sin(v[in.a]);
      case Op::Cos: return std::cos(v[in.a]);
      case Op::Tanh: return std::tanh(v[in.a]);
      case Op::Sqrt: return std::sqrt(v[in.a]);
      case Op::Abs: return std::fabs(v[in.a]);
      case Op::Sign: return v[in.a] > 0 ? 1.0 : (v[in.a] < 0 ? -1.0 : 0.0);
      case Op::Step: return v[in.a] > 0 ? 1.0 : (v[in.a] < 0 ? 0.0 : 0.5);
    }
    return 0.0;
  }

  static bool narrow(Interval& x, const Interval& y) {
    x = intersect(x, y);
    return !x.is_empty();
  }

  /// Real n-th root of the non-negative part of z, outward rounded.
  static Interval root(const Interval& z, long n) {
    Interval nz = intersect(z, Interval::unchecked(0.0, rounding::kInf));
    if (nz.is_empty()) return nz;
    if (n == 2) return sqrt(nz);
    auto r = [n](double x, bool upward) {
      if (x == 0.0 || std::isinf(x)) return x;
      double v = std::pow(x, 1.0 / static_cast<double>(n));
      return upward ? rounding::up_libm(rounding::up_libm(v)) : std::max(0.0, rounding::down_libm(rounding::down_libm(v)));
    };
    return Interval::unchecked(r(nz.lo(), false), r(nz.hi(), true));
  }

  static bool backward(const Instr& in, std::span<Interval> slots, std::vector<Interval>& v, const Interval& z) {
    if (z.is_empty()) return false;
    try {
      switch (in.op) {
        case Op::Var: return narrow(slots[in.slot], z);
        case Op::Const: return !intersect(in.c, z).is_empty();
        case Op::Add:
          return narrow(v[in.a], z - v[in.b]) && narrow(v[in.b], z - v[in.a]);
        case Op::Sub:
          return narrow(v[in.a], z + v[in.b]) && narrow(v[in.b], v[in.a] - z);
        case Op::Mul:
          if (in.a == in.b) {
            Interval r = root(z, 2);
            if (r.is_empty()) return false;
            return narrow(v[in.a], hull(intersect(v[in.a], r), intersect(v[in.a], -r)));
          }
          if (!v[in.b].contains(0.0) && !narrow(v[in.a], z / v[in.b])) return false;
          if (!v[in.a].contains(0.0) && !narrow(v[in.b], z / v[in.a])) return false;
          return true;
        case Op::Div:
          if (!narrow(v[in.a], z * v[in.b])) return false;
          if (!z.contains(0.0) && !narrow(v[in.b], v[in.a] / z)) return false;
          return true;
        case Op::Pow: {
          if (!in.is_ipow || in.ipow < 1) return true;
          if (in.ipow % 2 == 1) {
            Interval pos = root(z, in.ipow);
            Interval neg = -root(-z, in.ipow);
            return narrow(v[in.a], hull(pos, neg));
          }
          Interval r = root(z, in.ipow);
          if (r.is_empty()) return false;
          return narrow(v[in.a], hull(intersect(v[in.a], r), intersect(v[in.a], -r)));
        }
        case Op::Neg: return narrow(v[in.a], -z);
        case Op::Exp: {
          Interval pos = intersect(z, Interval::unchecked(0.0, rounding::kInf));
          if (pos.is_empty() || pos.hi() <= 0.0) return false;
          return narrow(v[in.a], log(pos));
        }
        case Op::Log: return narrow(v[in.a], exp(z));
        case Op::Sqrt: {
          Interval pos = intersect(z, Interval::unchecked(0.0, rounding::kInf));
          if (pos.is_empty()) return false;
          return narrow(v[in.a], sqr(pos));
        }
        case Op::Tanh: {
          Interval c = intersect(z, Interval::unchecked(-1.0, 1.0));
          if (c.is_empty()) return false;
          double lo = c.lo() <= -1.0 ? -rounding::kInf : rounding::down_libm(std::atanh(c.lo()));
          double hi = c.hi() >= 1.0 ? rounding::kInf : rounding::up_libm(std::atanh(c.hi()));
          return narrow(v[in.a], Interval::unchecked(lo, hi));
        }
        case Op::Abs: {
          Interval pos = intersect(z, Interval::unchecked(0.0, rounding::kInf));
          if (pos.is_empty()) return false;
          return narrow(v[in.a], hull(intersect(v[in.a], pos), intersect(v[in.a], -pos)));
        }
        case Op::Min: {
          Interval bound = Interval::unchecked(z.lo(), rounding::kInf);
          return narrow(v[in.a], bound) && narrow(v[in.b], bound);
        }
        case Op::Max: {
          Interval bound = Interval::unchecked(-rounding::kInf, z.hi());
          return narrow(v[in.a], bound) && narrow(v[in.b], bound);
        }
        default: return true;  // sin, cos, sign, step: no projection
      }
    } catch (const DomainError&) {
      return false;
    }
  }

  std::vector<Instr> code_;
  std::vector<int> roots_;
  int max_slot_ = -1;
};

/// Natural interval extension of `term` over `env`. Throws ShapeError on an
/// unbound variable and DomainError when an argument lies wholly outside a
/// function's domain.
inline Interval eval_interval(const Term& term, const Box& env) {
  Tape tape(term, [&](const std::string& n) { return static_cast<int>(env.vars()->index(n)); });
  return tape.eval(env.values());
}

/// Floating-point evaluation of `term` at the midpoint of `env`.
inline double eval_double(const Term& term, const Box& env) {
  Tape tape(term, [&](const std::string& n) { return static_cast<int>(env.vars()->index(n)); });
  std::vector<double> pt(env.size());
  for (std::size_t i = 0; i < env.size(); ++i) pt[i] = env[i].mid();
  return tape.eval_point(pt);
}

} // namespace hyreach
