// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "hyreach/formula.hpp"
#include "support.hpp"

using namespace hyreach;

namespace {
Term x = Term::var("x");
Term y = Term::var("y");
Box at(double v) { return Box{{"x", Interval(v)}}; }
} // namespace

TEST(DeltaWeaken, ShiftsAtomThreshold) {
  Formula f = Formula::gt0(x - Term(1));
  Formula w = delta_weaken(f, Rational(1, 10));
  EXPECT_EQ(w.atom().offset, Rational(1, 10));
  EXPECT_TRUE(w.atom().strict);
  EXPECT_EQ(w.to_string(), "x - 1 > -0.1");
  EXPECT_TRUE(eval_point(w, at(0.95)));
  EXPECT_FALSE(eval_point(f, at(0.95)));
}

TEST(DeltaWeaken, ZeroIsIdentity) {
  Formula f = Formula::conj({Formula::gt0(x), Formula::disj({Formula::ge0(y), Formula::gt0(x * y)})});
  EXPECT_TRUE(structurally_equal(delta_weaken(f, Rational(0)), f));
}

TEST(DeltaWeaken, DistributesOverConnectives) {
  Formula f = Formula::conj({Formula::gt0(x), Formula::ge0(y)});
  Formula w = delta_weaken(f, Rational(1, 2));
  Formula expected = Formula::conj({Formula::atom(x, true, Rational(1, 2)), Formula::atom(y, false, Rational(1, 2))});
  EXPECT_TRUE(structurally_equal(w, expected));
  EXPECT_EQ(w.to_string(), "x > -0.5 and y >= -0.5");
}

TEST(DeltaWeaken, NegativeDeltaRejected) {
  EXPECT_THROW(delta_weaken(Formula::gt0(x), Rational(-1, 10)), ArgumentError);
}

TEST(Negate, Atoms) {
  Formula n = negate(Formula::gt0(x));
  EXPECT_FALSE(n.atom().strict);
  EXPECT_TRUE(structurally_equal(n.atom().lhs, -x));
  Formula m = negate(Formula::ge0(x));
  EXPECT_TRUE(m.atom().strict);
}

TEST(Negate, DeMorgan) {
  Formula a = Formula::gt0(x), b = Formula::ge0(y);
  Formula n = negate(Formula::conj({a, b}));
  EXPECT_EQ(n.kind(), Formula::Kind::Or);
  EXPECT_TRUE(structurally_equal(n, Formula::disj({negate(a), negate(b)})));
  EXPECT_TRUE(negate(Formula::top()).is_false());
}

TEST(Negate, Involution) {
  Formula f = Formula::ge0(x);
  EXPECT_TRUE(structurally_equal(negate(negate(f)), f));
  test_support::TermGen g({"x", "y"}, 7);
  for (int i = 0; i < 300; ++i) {
    Formula r = g.formula(3);
    ASSERT_TRUE(structurally_equal(negate(negate(r)), r)) << r.to_prefix();
  }
}

TEST(EvalPoint, Examples) {
  Formula f = Formula::gt0(x - Term(1));
  EXPECT_TRUE(eval_point(f, at(2)));
  EXPECT_FALSE(eval_point(f, at(1)));
  Formula g = Formula::disj({Formula::ge0(x), Formula::gt0(x + Term(5))});
  EXPECT_TRUE(eval_point(g, at(-1)));
  EXPECT_THROW(eval_point(Formula::gt0(y), at(0)), ShapeError);
}

TEST(Formula, PrefixDump) {
  Formula f = Formula::conj({Formula::gt0(x), Formula::atom(y, false, Rational(1, 4))});
  EXPECT_EQ(f.to_prefix(), "(and (> x 0) (>= y :offset 0.25 0))");
  EXPECT_EQ(Formula::top().to_prefix(), "true");
}

TEST(Formula, NegateEvaluatesToComplement) {
  test_support::TermGen g({"x", "y"}, 21);
  for (int i = 0; i < 500; ++i) {
    Formula f = g.formula(3);
    Box p{{"x", Interval(g.uniform(-3, 3))}, {"y", Interval(g.uniform(-3, 3))}};
    bool a, b;
    try {
      a = eval_point(f, p);
      b = eval_point(negate(f), p);
    } catch (const DomainError&) {
      continue;
    }
    // NaN comparisons are false on both sides; skip those points.
    if (a == b) continue;
    ASSERT_NE(a, b);
  }
}

TEST(FormulaProperty, WeakeningSoundness) {
  test_support::TermGen g({"x", "y"}, 2024);
  int implied = 0;
  for (int i = 0; i < 1000; ++i) {
    Formula f = g.formula(3);
    Box p{{"x", Interval(g.uniform(-3, 3))}, {"y", Interval(g.uniform(-3, 3))}};
    Rational delta(static_cast<std::int64_t>(g.pick(1000)), 1000);
    if (eval_point(f, p)) {
      ASSERT_TRUE(eval_point(delta_weaken(f, delta), p)) << f.to_prefix();
      ++implied;
    }
    ASSERT_TRUE(structurally_equal(delta_weaken(f, Rational(0)), f));
  }
  EXPECT_GT(implied, 200);
}

TEST(EvalInterval, ThreeValued) {
  Box b{{"x", Interval(1, 10)}};
  EXPECT_EQ(eval_interval(Formula::ge0(x), b), Truth::True);
  EXPECT_EQ(eval_interval(Formula::gt0(-x), b), Truth::False);
  EXPECT_EQ(eval_interval(Formula::ge0(x - Term(5)), b), Truth::Unknown);
}
