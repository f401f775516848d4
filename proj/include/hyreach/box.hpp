// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hyreach/interval.hpp"

namespace hyreach {

/// An immutable, ordered list of variable names with O(1) lookup. Boxes that
/// share a constraint system share one VarSet.
class VarSet {
public:
  explicit VarSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], i).second) throw ShapeError("duplicate variable '" + names_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("unbound variable '" + name + "'");
    return it->second;
  }

  friend bool operator==(const VarSet& a, const VarSet& b) noexcept { return a.names_ == b.names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// How `bisect` chooses the split dimension.
///
/// The default splits the widest dimension, breaking ties by variable-name
/// order. `eligible` (if non-empty) masks out dimensions that must not be
/// split; dimensions no wider than `min_width` are never chosen.
struct BisectPolicy {
  std::span<const char> eligible{};
  double min_width = 0.0;
};

/// A Cartesian product of intervals over a fixed, named variable set.
class Box {
public:
  Box() : vars_(std::make_shared<VarSet>(std::vector<std::string>{})) {}

  Box(std::shared_ptr<const VarSet> vars, std::vector<Interval> values)
      : vars_(std::move(vars)), values_(std::move(values)) {
    if (values_.size() != vars_->size()) throw ShapeError("box arity does not match its variable set");
  }

  Box(std::initializer_list<std::pair<std::string, Interval>> entries) {
    std::vector<std::string> names;
    for (const auto& [n, v] : entries) {
      names.push_back(n);
      values_.push_back(v);
    }
    vars_ = std::make_shared<VarSet>(std::move(names));
  }

  /// A box with every variable unbounded.
  static Box entire(std::shared_ptr<const VarSet> vars) {
    std::vector<Interval> values(vars->size(), Interval::entire());
    return Box(std::move(vars), std::move(values));
  }

  const std::shared_ptr<const VarSet>& vars() const noexcept { return vars_; }
  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return vars_->name(i); }

  const Interval& operator[](std::size_t i) const { return values_[i]; }
  Interval& operator[](std::size_t i) { return values_[i]; }
  const Interval& at(const std::string& name) const { return values_[vars_->index(name)]; }
  Interval& at(const std::string& name) { return values_[vars_->index(name)]; }
  bool has(const std::string& name) const { return vars_->find(name).has_value(); }

  std::span<const Interval> values() const noexcept { return values_; }
  std::span<Interval> values() noexcept { return values_; }

  bool is_empty() const noexcept {
    for (const auto& v : values_)
      if (v.is_empty()) return true;
    return false;
  }

  /// max over dimensions of (hi - lo).
  double width() const noexcept {
    double w = 0.0;
    for (const auto& v : values_) w = std::max(w, v.width());
    return w;
  }

  /// A box whose every dimension is the midpoint of this one.
  Box midpoint() const {
    std::vector<Interval> pts;
    pts.reserve(values_.size());
    for (const auto& v : values_) pts.emplace_back(v.mid());
    return Box(vars_, std::move(pts));
  }

  bool contains(const Box& other) const {
    require_same_shape(other);
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!values_[i].contains(other.values_[i])) return false;
    return true;
  }

  /// Splits dimension `dim` at its midpoint.
  std::pair<Box, Box> split(std::size_t dim) const {
    const Interval& x = values_.at(dim);
    if (x.is_empty() || x.width() <= 0.0) throw CannotSplitError();
    double m = x.mid();
    if (!(x.lo() < m && m < x.hi())) m = x.lo() + 0.5 * (x.hi() - x.lo());
    if (!(x.lo() < m && m < x.hi())) throw CannotSplitError();  // adjacent doubles
    Box a = *this, b = *this;
    a.values_[dim] = Interval::unchecked(x.lo(), m);
    b.values_[dim] = Interval::unchecked(m, x.hi());
    return {std::move(a), std::move(b)};
  }

  /// Index of the dimension `bisect` would split, if any.
  std::optional<std::size_t> choose_split(const BisectPolicy& policy = {}) const {
    std::optional<std::size_t> best;
    double best_w = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!policy.eligible.empty() && !policy.eligible[i]) continue;
      const Interval& x = values_[i];
      if (x.is_empty()) continue;
      double w = x.width();
      if (w <= policy.min_width) continue;
      // Adjacent doubles cannot be split further.
      if (std::nextafter(x.lo(), x.hi()) >= x.hi()) continue;
      if (!best || w > best_w || (w == best_w && name(i) < name(*best))) {
        best = i;
        best_w = w;
      }
    }
    return best;
  }

  void require_same_shape(const Box& other) const {
    if (vars_ != other.vars_ && !(*vars_ == *other.vars_))
      throw ShapeError("boxes range over different variable sets");
  }

  friend bool operator==(const Box& a, const Box& b) {
    return (a.vars_ == b.vars_ || *a.vars_ == *b.vars_) && a.values_ == b.values_;
  }

private:
  std::shared_ptr<const VarSet> vars_;
  std::vector<Interval> values_;
};

/// Splits the box in two at the midpoint of the dimension chosen by `policy`.
inline std::pair<Box, Box> bisect(const Box& box, const BisectPolicy& policy = {}) {
  auto dim = box.choose_split(policy);
  if (!dim) throw CannotSplitError();
  return box.split(*dim);
}

inline Box hull(const Box& a, const Box& b) {
  a.require_same_shape(b);
  std::vector<Interval> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = hull(a[i], b[i]);
  return Box(a.vars(), std::move(v));
}

/// Component-wise intersection; the result `is_empty()` on disjoint operands.
inline Box intersect(const Box& a, const Box& b) {
  a.require_same_shape(b);
  std::vector<Interval> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = intersect(a[i], b[i]);
  return Box(a.vars(), std::move(v));
}

inline double width(const Box& b) noexcept { return b.width(); }
inline Box midpoint(const Box& b) { return b.midpoint(); }

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  os << '{';
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i) os << ", ";
    os << b.name(i) << ':' << b[i];
  }
  return os << '}';
}

} // namespace hyreach
