// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hyreach/interval.hpp"
#include "hyreach/tape.hpp"
#include "support.hpp"

using namespace hyreach;

TEST(Interval, ConstructionRejectsInvertedPairs) {
  EXPECT_THROW(Interval(2.0, 1.0), ArgumentError);
  EXPECT_THROW(Interval(std::nan(""), 1.0), ArgumentError);
  EXPECT_TRUE(Interval::empty().is_empty());
  EXPECT_FALSE(Interval(1.0, 1.0).is_empty());
}

TEST(Interval, Addition) {
  Interval r = Interval(1, 2) + Interval(3, 4);
  EXPECT_LE(r.lo(), 4.0);
  EXPECT_GE(r.hi(), 6.0);
  EXPECT_NEAR(r.lo(), 4.0, 1e-15);
  EXPECT_NEAR(r.hi(), 6.0, 1e-15);
}

TEST(Interval, ProductMatchesEndpointBruteForce) {
  Interval x(-1, 2), y(3, 4);
  double p[] = {-1 * 3, -1 * 4, 2 * 3, 2 * 4};
  double lo = *std::min_element(std::begin(p), std::end(p));
  double hi = *std::max_element(std::begin(p), std::end(p));
  Interval r = x * y;
  EXPECT_DOUBLE_EQ(r.lo(), lo);
  EXPECT_DOUBLE_EQ(r.hi(), hi);
  EXPECT_EQ(lo, -4.0);
  EXPECT_EQ(hi, 8.0);
}

TEST(Interval, SinOverHalfPeriod) {
  Interval r = sin(Interval(0.0, std::numbers::pi));
  EXPECT_LE(r.lo(), 0.0);
  EXPECT_GT(r.lo(), -1e-12);
  EXPECT_GE(r.hi(), 1.0);
  EXPECT_LT(r.hi(), 1.0 + 1e-12);
}

TEST(Interval, CosDetectsCrests) {
  Interval r = cos(Interval(-0.1, 0.1));
  EXPECT_GE(r.hi(), 1.0);
  Interval s = cos(Interval(3.0, 3.3));
  EXPECT_LE(s.lo(), -1.0);
}

TEST(Interval, OutwardRoundingEnclosesDecimal) {
  Interval tenth = Interval(1.0) / Interval(10.0);
  EXPECT_LT(tenth.lo(), tenth.hi());
  Interval three = tenth * Interval(30.0);
  EXPECT_TRUE(three.contains(3.0));
}

TEST(Interval, DomainErrors) {
  EXPECT_THROW(log(Interval(-2, -1)), DomainError);
  EXPECT_THROW(log(Interval(-1, 0)), DomainError);
  EXPECT_THROW(sqrt(Interval(-2, -1)), DomainError);
  EXPECT_THROW(Interval(1, 2) / Interval(0, 0), DomainError);
  Interval partial = sqrt(Interval(-1, 4));
  EXPECT_LE(partial.lo(), 0.0);
  EXPECT_GE(partial.hi(), 2.0);
  Interval lpart = log(Interval(-1, 1));
  EXPECT_EQ(lpart.lo(), -rounding::kInf);
  EXPECT_GE(lpart.hi(), 0.0);
}

TEST(Interval, ExtendedDivision) {
  Interval r = Interval(1, 2) / Interval(0, 1);
  EXPECT_GE(r.lo(), 0.0);
  EXPECT_LE(r.lo(), 1.0);
  EXPECT_EQ(r.hi(), rounding::kInf);
  EXPECT_FALSE((Interval(1, 2) / Interval(-1, 1)).is_bounded());
}

TEST(Interval, HullIntersect) {
  EXPECT_EQ(intersect(Interval(0, 2), Interval(1, 3)), Interval(1, 2));
  EXPECT_TRUE(intersect(Interval(0, 1), Interval(2, 3)).is_empty());
  EXPECT_EQ(hull(Interval(0, 1), Interval(2, 3)), Interval(0, 3));
  EXPECT_EQ(hull(Interval::empty(), Interval(2, 3)), Interval(2, 3));
  EXPECT_DOUBLE_EQ(width(Interval(1, 4)), 3.0);
  EXPECT_EQ(midpoint(Interval(1, 4)), 2.5);
}

TEST(Interval, PowersAndNonSmooth) {
  EXPECT_EQ(sqr(Interval(-2, 1)), Interval(0, 4));
  Interval c = pow_int(Interval(-2, 1), 3);
  EXPECT_LE(c.lo(), -8.0);
  EXPECT_GE(c.hi(), 1.0);
  EXPECT_EQ(abs(Interval(-3, 1)), Interval(0, 3));
  EXPECT_EQ(min(Interval(0, 5), Interval(2, 3)), Interval(0, 3));
  EXPECT_EQ(max(Interval(0, 5), Interval(2, 3)), Interval(2, 5));
  EXPECT_EQ(sign(Interval(-1, 1)), Interval(-1, 1));
  EXPECT_EQ(step(Interval(1, 2)), Interval(1, 1));
  Interval p = pow(Interval(4, 9), Interval(0.5));
  EXPECT_TRUE(p.contains(Interval(2, 3)));
}

namespace {

Box random_box(test_support::TermGen& g, const std::vector<std::string>& names, double max_width) {
  std::vector<Interval> v;
  for (std::size_t i = 0; i < names.size(); ++i) {
    double lo = g.uniform(-3, 3);
    v.emplace_back(lo, lo + g.uniform(0, max_width));
  }
  return Box(std::make_shared<VarSet>(names), v);
}

} // namespace

TEST(IntervalProperty, InclusionMonotonicity) {
  const std::vector<std::string> names{"x", "y", "z"};
  test_support::TermGen g(names, 17);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Term t = g.term(4);
    Box outer = random_box(g, names, 2.0);
    std::vector<Interval> inner_v;
    for (std::size_t i = 0; i < outer.size(); ++i) {
      double a = g.uniform(outer[i].lo(), outer[i].hi());
      double b = g.uniform(outer[i].lo(), outer[i].hi());
      inner_v.emplace_back(std::min(a, b), std::max(a, b));
    }
    Box inner(outer.vars(), inner_v);
    Interval big, small;
    try {
      big = eval_interval(t, outer);
    } catch (const DomainError&) {
      continue;
    }
    try {
      small = eval_interval(t, inner);
    } catch (const DomainError&) {
      continue;
    }
    ASSERT_TRUE(big.contains(small)) << t.to_string() << " over " << outer << " vs " << inner;
    ++checked;
  }
  EXPECT_GT(checked, 400);
}

TEST(IntervalProperty, PointConsistency) {
  const std::vector<std::string> names{"x", "y"};
  test_support::TermGen g(names, 99);
  for (int trial = 0; trial < 1000; ++trial) {
    Term t = g.term(4);
    Box pt = random_box(g, names, 0.0);
    double v = eval_double(t, pt);
    if (!std::isfinite(v)) continue;
    Interval r = eval_interval(t, pt);
    ASSERT_TRUE(r.contains(v)) << t.to_string() << " at " << pt << ": " << v << " not in " << r;
  }
}

TEST(IntervalProperty, SampledPointsInsideEnclosure) {
  const std::vector<std::string> names{"x", "y"};
  test_support::TermGen g(names, 5);
  for (int trial = 0; trial < 300; ++trial) {
    Term t = g.term(3);
    Box b = random_box(g, names, 1.0);
    Interval r = eval_interval(t, b);
    for (int s = 0; s < 20; ++s) {
      Box p({{"x", Interval(g.uniform(b[0].lo(), b[0].hi()))}, {"y", Interval(g.uniform(b[1].lo(), b[1].hi()))}});
      double v = eval_double(t, p);
      if (std::isfinite(v)) {
        ASSERT_TRUE(r.contains(v)) << t.to_string();
      }
    }
  }
}
