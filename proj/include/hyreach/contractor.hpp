// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "hyreach/formula.hpp"
#include "hyreach/tape.hpp"

namespace hyreach {

/// HC4 contractor and three-valued evaluator for a flow-free formula whose
/// variables live in numbered slots.
///
/// Conjunctions are propagated atom by atom; a disjunction contracts each
/// branch on a copy and keeps the hull of the survivors.
class FormulaContractor {
public:
  FormulaContractor() = default;

  FormulaContractor(const Formula& f, const Tape::SlotResolver& slot_of) {
    std::vector<Term> terms;
    root_ = build(f, terms);
    tape_ = Tape(terms, slot_of);
  }

  bool trivial() const noexcept { return nodes_.empty() || (nodes_[root_].kind == Kind::And && nodes_[root_].kids.empty()); }

  /// Narrows `box` around the solutions of the formula; false if none remain.
  bool contract(std::span<Interval> box, int passes = 3) const {
    if (nodes_.empty()) return true;
    for (const auto& v : box)
      if (v.is_empty()) return false;
    return contract_node(root_, box, passes);
  }

  Truth eval(std::span<const Interval> box) const {
    if (nodes_.empty()) return Truth::True;
    std::vector<Interval> scratch;
    try {
      tape_.forward(box, scratch);
    } catch (const DomainError&) {
      // Some atom is undefined on the whole box; evaluate atoms one at a
      // time so the others still count.
      return eval_slow(root_, box);
    }
    return eval_node(root_, scratch);
  }

private:
  enum class Kind { Atom, And, Or };
  struct Node {
    Kind kind;
    int root = -1;          // tape root index for atoms
    Interval offset;        // enclosure of the rational offset
    bool strict = false;
    std::vector<int> kids;
  };

  int build(const Formula& f, std::vector<Term>& terms) {
    Node n;
    switch (f.kind()) {
      case Formula::Kind::Atom:
        n.kind = Kind::Atom;
        n.root = static_cast<int>(terms.size());
        terms.push_back(f.atom().lhs);
        n.offset = f.atom().offset.enclosure();
        n.strict = f.atom().strict;
        break;
      case Formula::Kind::Flow: throw ArgumentError("flow constraints are not handled by FormulaContractor");
      case Formula::Kind::And:
      case Formula::Kind::Or:
        n.kind = f.kind() == Formula::Kind::And ? Kind::And : Kind::Or;
        for (const auto& k : f.children()) n.kids.push_back(build(k, terms));
        break;
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  bool contract_node(int i, std::span<Interval> box, int passes) const {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case Kind::Atom: {
        // lhs + offset >= 0  =>  lhs >= -offset
        Interval target = Interval::unchecked(-n.offset.hi(), rounding::kInf);
        thread_local std::vector<Interval> scratch;
        return tape_.revise(box, target, scratch, static_cast<std::size_t>(n.root));
      }
      case Kind::And: {
        for (int pass = 0; pass < passes; ++pass) {
          double before = total_width(box);
          for (int k : n.kids)
            if (!contract_node(k, box, passes)) return false;
          double after = total_width(box);
          if (!(after < 0.99 * before)) break;
        }
        return true;
      }
      case Kind::Or: {
        if (n.kids.empty()) return false;
        std::vector<Interval> acc(box.size(), Interval::empty());
        bool any = false;
        std::vector<Interval> copy;
        for (int k : n.kids) {
          copy.assign(box.begin(), box.end());
          if (!contract_node(k, copy, passes)) continue;
          any = true;
          for (std::size_t d = 0; d < box.size(); ++d) acc[d] = hull(acc[d], copy[d]);
        }
        if (!any) return false;
        for (std::size_t d = 0; d < box.size(); ++d) box[d] = acc[d];
        return true;
      }
    }
    return true;
  }

  static double total_width(std::span<const Interval> box) {
    double s = 0;
    for (const auto& v : box) {
      double w = v.width();
      if (std::isfinite(w)) s += w;
    }
    return s;
  }

  static Truth atom_truth(const Interval& value, const Node& n) {
    return detail::atom_truth(value + n.offset, n.strict);
  }

  Truth eval_node(int i, const std::vector<Interval>& scratch) const {
    const Node& n = nodes_[i];
    if (n.kind == Kind::Atom) return atom_truth(scratch[tape_.root(n.root)], n);
    return combine(n, [&](int k) { return eval_node(k, scratch); });
  }

  Truth eval_slow(int i, std::span<const Interval> box) const {
    const Node& n = nodes_[i];
    if (n.kind == Kind::Atom) {
      try {
        return atom_truth(tape_.eval(box, n.root), n);
      } catch (const DomainError&) {
        return Truth::False;
      }
    }
    return combine(n, [&](int k) { return eval_slow(k, box); });
  }

  template <class F>
  static Truth combine(const Node& n, F&& child) {
    bool conj = n.kind == Kind::And;
    Truth acc = conj ? Truth::True : Truth::False;
    for (int k : n.kids) {
      Truth c = child(k);
      if (conj && c == Truth::False) return Truth::False;
      if (!conj && c == Truth::True) return Truth::True;
      if (c == Truth::Unknown) acc = Truth::Unknown;
    }
    return acc;
  }

  Tape tape_;
  std::vector<Node> nodes_;
  int root_ = 0;
};

} // namespace hyreach
