// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hyreach/box.hpp"
#include "hyreach/tape.hpp"
#include "hyreach/term.hpp"

namespace hyreach {

class VectorField;  // ode.hpp
class Formula;

/// `pre --flow(mode)--> post` after dwell time `time`, with the mode
/// invariant required at every instant of the flow.
///
/// `pre`, `post` name the constraint-system variables bound to the field's
/// state variables (same order); parameters keep their own names.
struct FlowConstraint {
  std::shared_ptr<const VectorField> field;
  int mode = 0;
  std::vector<std::string> pre;
  std::vector<std::string> post;
  std::string time;
  double dwell_bound = 10.0;
  std::shared_ptr<const Formula> invariant;  // over the field's state/parameter names
};

/// Quantifier-free formula over atoms `t > 0` / `t >= 0`, conjunction,
/// disjunction and flow constraints.
///
/// Negation is not a constructor: `negate` pushes it into the atoms. Atoms
/// carry a rational offset so that `t + offset > 0` stays exact under
/// delta-weakening.
class Formula {
public:
  enum class Kind { Atom, And, Or, Flow };

  struct Atom {
    Term lhs;
    bool strict = false;
    Rational offset{0};

    /// The full left-hand side `lhs + offset`.
    Term term() const { return offset.is_zero() ? lhs : lhs + Term(offset); }
  };

  /// true
  Formula() : Formula(Kind::And) {}

  static Formula top() { return Formula(Kind::And); }
  static Formula bottom() { return Formula(Kind::Or); }

  /// t > 0
  static Formula gt0(Term t) { return atom(std::move(t), true); }
  /// t >= 0
  static Formula ge0(Term t) { return atom(std::move(t), false); }
  static Formula atom(Term t, bool strict, Rational offset = Rational(0)) {
    Formula f(Kind::Atom);
    f.node_->atom = Atom{std::move(t), strict, offset};
    return f;
  }

  static Formula gt(const Term& a, const Term& b) { return gt0(normalize(a, b)); }
  static Formula ge(const Term& a, const Term& b) { return ge0(normalize(a, b)); }
  static Formula lt(const Term& a, const Term& b) { return gt0(normalize(b, a)); }
  static Formula le(const Term& a, const Term& b) { return ge0(normalize(b, a)); }
  /// a = b as a >= b and b >= a.
  static Formula eq(const Term& a, const Term& b) { return conj({ge(a, b), le(a, b)}); }

  static Formula conj(std::vector<Formula> kids) { return combine(Kind::And, std::move(kids)); }
  static Formula disj(std::vector<Formula> kids) { return combine(Kind::Or, std::move(kids)); }

  static Formula flow(FlowConstraint fc) {
    Formula f(Kind::Flow);
    f.node_->flow = std::make_shared<const FlowConstraint>(std::move(fc));
    return f;
  }

  Kind kind() const noexcept { return node_->kind; }
  bool is_atom() const noexcept { return kind() == Kind::Atom; }
  bool is_true() const noexcept { return kind() == Kind::And && children().empty(); }
  bool is_false() const noexcept { return kind() == Kind::Or && children().empty(); }
  const Atom& atom() const { return node_->atom; }
  const std::vector<Formula>& children() const noexcept { return node_->kids; }
  const FlowConstraint& flow_constraint() const { return *node_->flow; }
  const std::shared_ptr<const FlowConstraint>& flow_ptr() const { return node_->flow; }

  bool has_flow() const {
    if (kind() == Kind::Flow) return true;
    for (const auto& k : children())
      if (k.has_flow()) return true;
    return false;
  }

  std::set<std::string> free_vars() const {
    std::set<std::string> out;
    collect_vars(out);
    return out;
  }

  /// Visits every atom (not descending into flow invariants).
  template <class F>
  void for_each_atom(F&& f) const {
    if (is_atom()) f(atom());
    for (const auto& k : children()) k.for_each_atom(f);
  }

  /// Renames every variable, including flow bindings.
  Formula rename(const std::function<std::string(const std::string&)>& f) const;
  Formula substitute(const std::map<std::string, Term>& map) const;

  std::string to_prefix() const {
    std::ostringstream os;
    print_prefix(os);
    return os.str();
  }

  /// Infix rendering in model-file syntax (`and`, `or`, `>=`).
  std::string to_string() const {
    std::ostringstream os;
    print_infix(os, false);
    return os.str();
  }

  friend bool structurally_equal(const Formula& a, const Formula& b);

private:
  struct Node {
    Kind kind;
    Atom atom;
    std::vector<Formula> kids;
    std::shared_ptr<const FlowConstraint> flow;
  };

  explicit Formula(Kind k) : node_(std::make_shared<Node>()) { node_->kind = k; }

  Node& mut() { return *node_; }

  static Term normalize(const Term& a, const Term& b) { return b.is_const(0) ? a : a - b; }

  static Formula combine(Kind k, std::vector<Formula> kids) {
    if (kids.size() == 1) return kids.front();
    Formula f(k);
    f.node_->kids = std::move(kids);
    return f;
  }

  void collect_vars(std::set<std::string>& out) const {
    switch (kind()) {
      case Kind::Atom: atom().lhs.collect_vars(out); break;
      case Kind::Flow: {
        const auto& fc = flow_constraint();
        out.insert(fc.pre.begin(), fc.pre.end());
        out.insert(fc.post.begin(), fc.post.end());
        out.insert(fc.time);
        break;
      }
      default:
        for (const auto& k : children()) k.collect_vars(out);
    }
  }

  void print_prefix(std::ostream& os) const {
    switch (kind()) {
      case Kind::Atom:
        os << '(' << (atom().strict ? ">" : ">=") << ' ' << atom().lhs.to_prefix();
        if (!atom().offset.is_zero()) os << " :offset " << atom().offset.to_string();
        os << " 0)";
        return;
      case Kind::Flow: {
        const auto& fc = flow_constraint();
        os << "(flow " << fc.mode << " (";
        for (std::size_t i = 0; i < fc.pre.size(); ++i) os << (i ? " " : "") << fc.pre[i];
        os << ") (";
        for (std::size_t i = 0; i < fc.post.size(); ++i) os << (i ? " " : "") << fc.post[i];
        os << ") " << fc.time << ')';
        return;
      }
      default:
        if (children().empty()) {
          os << (kind() == Kind::And ? "true" : "false");
          return;
        }
        os << '(' << (kind() == Kind::And ? "and" : "or");
        for (const auto& k : children()) {
          os << ' ';
          k.print_prefix(os);
        }
        os << ')';
    }
  }

  void print_infix(std::ostream& os, bool nested) const {
    switch (kind()) {
      case Kind::Atom: {
        // Render `t + c > 0` as `t > -c` so weakened atoms read naturally.
        os << atom().lhs.to_string() << (atom().strict ? " > " : " >= ")
           << (-atom().offset).to_string();
        return;
      }
      case Kind::Flow: os << to_prefix(); return;
      default:
        if (children().empty()) {
          os << (kind() == Kind::And ? "true" : "false");
          return;
        }
        if (nested) os << '(';
        for (std::size_t i = 0; i < children().size(); ++i) {
          if (i) os << (kind() == Kind::And ? " and " : " or ");
          children()[i].print_infix(os, true);
        }
        if (nested) os << ')';
    }
  }

  std::shared_ptr<Node> node_;
};

inline bool structurally_equal(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Formula::Kind::Atom:
      return a.atom().strict == b.atom().strict && a.atom().offset == b.atom().offset &&
             structurally_equal(a.atom().lhs, b.atom().lhs);
    case Formula::Kind::Flow: {
      const auto& x = a.flow_constraint();
      const auto& y = b.flow_constraint();
      if (x.field != y.field || x.mode != y.mode || x.pre != y.pre || x.post != y.post || x.time != y.time)
        return false;
      if (!x.invariant || !y.invariant) return x.invariant == y.invariant;
      return structurally_equal(*x.invariant, *y.invariant);
    }
    default:
      if (a.children().size() != b.children().size()) return false;
      for (std::size_t i = 0; i < a.children().size(); ++i)
        if (!structurally_equal(a.children()[i], b.children()[i])) return false;
      return true;
  }
}

inline Formula Formula::rename(const std::function<std::string(const std::string&)>& f) const {
  switch (kind()) {
    case Kind::Atom: return atom(atom().lhs.rename(f), atom().strict, atom().offset);
    case Kind::Flow: {
      FlowConstraint fc = flow_constraint();
      for (auto& v : fc.pre) v = f(v);
      for (auto& v : fc.post) v = f(v);
      fc.time = f(fc.time);
      return flow(std::move(fc));
    }
    default: {
      std::vector<Formula> kids;
      for (const auto& k : children()) kids.push_back(k.rename(f));
      Formula r(kind());
      r.node_->kids = std::move(kids);
      return r;
    }
  }
}

inline Formula Formula::substitute(const std::map<std::string, Term>& map) const {
  switch (kind()) {
    case Kind::Atom: return atom(atom().lhs.substitute(map), atom().strict, atom().offset);
    case Kind::Flow: return *this;
    default: {
      std::vector<Formula> kids;
      for (const auto& k : children()) kids.push_back(k.substitute(map));
      Formula r(kind());
      r.node_->kids = std::move(kids);
      return r;
    }
  }
}

/// Logical negation as a defined operation: `t > 0` becomes `-t >= 0`,
/// `t >= 0` becomes `-t > 0`, and conjunction and disjunction swap.
inline Formula negate(const Formula& phi) {
  switch (phi.kind()) {
    case Formula::Kind::Atom: {
      const auto& a = phi.atom();
      return Formula::atom(-a.lhs, !a.strict, -a.offset);
    }
    case Formula::Kind::Flow: throw ArgumentError("flow constraints cannot be negated");
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      std::vector<Formula> kids;
      kids.reserve(phi.children().size());
      for (const auto& k : phi.children()) kids.push_back(negate(k));
      if (kids.empty()) return phi.kind() == Formula::Kind::And ? Formula::bottom() : Formula::top();
      return phi.kind() == Formula::Kind::And ? Formula::disj(std::move(kids)) : Formula::conj(std::move(kids));
    }
  }
  return phi;
}

/// The delta-weakening: every atom `t > 0` becomes `t > -delta` (likewise for
/// `>=`), including the invariants carried by flow constraints.
inline Formula delta_weaken(const Formula& phi, const Rational& delta) {
  if (delta < Rational(0)) throw ArgumentError("delta must be non-negative");
  if (delta.is_zero()) return phi;
  switch (phi.kind()) {
    case Formula::Kind::Atom: {
      const auto& a = phi.atom();
      auto off = checked_add(a.offset, delta);
      if (!off) throw ArgumentError("delta-weakening overflows the rational offset");
      return Formula::atom(a.lhs, a.strict, *off);
    }
    case Formula::Kind::Flow: {
      FlowConstraint fc = phi.flow_constraint();
      if (fc.invariant) fc.invariant = std::make_shared<const Formula>(delta_weaken(*fc.invariant, delta));
      return Formula::flow(std::move(fc));
    }
    default: {
      std::vector<Formula> kids;
      for (const auto& k : phi.children()) kids.push_back(delta_weaken(k, delta));
      return phi.kind() == Formula::Kind::And ? Formula::conj(std::move(kids)) : Formula::disj(std::move(kids));
    }
  }
}

/// Truth of `phi` at a point (every dimension of `point` is evaluated at its
/// midpoint in double arithmetic).
inline bool eval_point(const Formula& phi, const Box& point) {
  switch (phi.kind()) {
    case Formula::Kind::Atom: {
      const auto& a = phi.atom();
      std::vector<double> slots(point.size());
      for (std::size_t i = 0; i < point.size(); ++i) slots[i] = point[i].mid();
      Tape tape(a.lhs, [&](const std::string& n) { return static_cast<int>(point.vars()->index(n)); });
      double v = tape.eval_point(slots) + a.offset.to_double();
      return a.strict ? v > 0 : v >= 0;
    }
    case Formula::Kind::Flow: throw ArgumentError("eval_point does not evaluate flow constraints");
    case Formula::Kind::And:
      for (const auto& k : phi.children())
        if (!eval_point(k, point)) return false;
      return true;
    case Formula::Kind::Or:
      for (const auto& k : phi.children())
        if (eval_point(k, point)) return true;
      return false;
  }
  return false;
}

/// Three-valued truth of a formula over a box.
enum class Truth { True, False, Unknown };

namespace detail {

inline Truth atom_truth(const Interval& value, bool strict) {
  if (value.is_empty()) return Truth::False;
  if (strict ? value.lo() > 0 : value.lo() >= 0) return Truth::True;
  if (strict ? value.hi() <= 0 : value.hi() < 0) return Truth::False;
  return Truth::Unknown;
}

} // namespace detail

/// Interval truth of a flow-free formula: True if it holds at every point of
/// `box`, False if it fails at every point, Unknown otherwise.
inline Truth eval_interval(const Formula& phi, const Box& box) {
  switch (phi.kind()) {
    case Formula::Kind::Atom: {
      const auto& a = phi.atom();
      Tape tape(a.lhs, [&](const std::string& n) { return static_cast<int>(box.vars()->index(n)); });
      try {
        return detail::atom_truth(tape.eval(box.values()) + a.offset.enclosure(), a.strict);
      } catch (const DomainError&) {
        return Truth::False;
      }
    }
    case Formula::Kind::Flow: throw ArgumentError("eval_interval does not evaluate flow constraints");
    case Formula::Kind::And: {
      Truth t = Truth::True;
      for (const auto& k : phi.children()) {
        Truth c = eval_interval(k, box);
        if (c == Truth::False) return Truth::False;
        if (c == Truth::Unknown) t = Truth::Unknown;
      }
      return t;
    }
    case Formula::Kind::Or: {
      Truth t = Truth::False;
      for (const auto& k : phi.children()) {
        Truth c = eval_interval(k, box);
        if (c == Truth::True) return Truth::True;
        if (c == Truth::Unknown) t = Truth::Unknown;
      }
      return t;
    }
  }
  return Truth::Unknown;
}

} // namespace hyreach
