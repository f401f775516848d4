// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "hyreach/icp.hpp"
#include "oracles.hpp"

using namespace hyreach;
using namespace hyreach::test_support;

namespace {

Term x = Term::var("x");
Term y = Term::var("y");

Verdict run(Box dom, Formula phi, double delta = 1e-4) {
  SolverConfig cfg;
  cfg.delta = delta;
  return decide(ConstraintSystem(std::move(dom), std::move(phi), delta), cfg);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

TEST(Decide, SquareRootOfTwo) {
  Verdict v = run(Box{{"x", Interval(1, 2)}}, eq0(x * x - Term(2)));
  ASSERT_EQ(v.kind, VerdictKind::DeltaSat);
  const Interval& w = v.witness->at("x");
  EXPECT_NEAR(w.mid(), 1.414214, 1e-4);
  EXPECT_LE(w.width(), 1e-5 * (1 + 1e-9));
  EXPECT_TRUE(certify_witness(*v.witness, eq0(x * x - Term(2)), 1e-4));
}

TEST(Decide, NegativeDefinite) {
  EXPECT_EQ(run(Box{{"x", Interval(-1, 1)}}, Formula::ge0(Term(-1) * x * x - Term(1))).kind, VerdictKind::Unsat);
}

TEST(Decide, NoRootInBox) {
  EXPECT_EQ(run(Box{{"x", Interval(2, 3)}}, eq0(x * x - Term(2))).kind, VerdictKind::Unsat);
}

TEST(Decide, Disjunction) {
  Formula f = Formula::disj({eq0(x - Term(5)), eq0(x + Term(Rational(1, 2)))});
  Verdict v = run(Box{{"x", Interval(-1, 1)}}, f);
  ASSERT_EQ(v.kind, VerdictKind::DeltaSat);
  EXPECT_NEAR(v.witness->at("x").mid(), -0.5, 1e-4);
}

TEST(Decide, BudgetExceededIsExplicit) {
  SolverConfig cfg;
  cfg.max_splits = 3;
  // A thin curve: many splits before any box is narrow enough.
  ConstraintSystem sys(Box{{"x", Interval(-10, 10)}, {"y", Interval(-10, 10)}},
                       Formula::conj({eq0(sin(x * Term(7)) - y), Formula::ge0(y - Term(Rational(99, 100)))}), 1e-4);
  EXPECT_EQ(decide(sys, cfg).kind, VerdictKind::BudgetExceeded);
}

TEST(Decide, DeterministicSingleWorker) {
  Formula f = eq0(x * x + y * y - Term(1));
  Box dom{{"x", Interval(-2, 2)}, {"y", Interval(-2, 2)}};
  Verdict a = run(dom, f), b = run(dom, f);
  ASSERT_EQ(a.kind, VerdictKind::DeltaSat);
  ASSERT_EQ(b.kind, VerdictKind::DeltaSat);
  EXPECT_EQ(a.stats.branches, b.stats.branches);
  for (std::size_t i = 0; i < a.witness->size(); ++i) {
    EXPECT_EQ((*a.witness)[i].lo(), (*b.witness)[i].lo());
    EXPECT_EQ((*a.witness)[i].hi(), (*b.witness)[i].hi());
  }
}

TEST(Decide, WorkersAgreeOnVerdict) {
  Box dom{{"x", Interval(-2, 2)}, {"y", Interval(-2, 2)}};
  SolverConfig cfg;
  cfg.workers = 3;
  Formula sat = eq0(x * x + y * y - Term(1)), unsat = Formula::ge0(Term(-1) - x * x - y * y);
  Verdict v = decide(ConstraintSystem(dom, sat), cfg);
  ASSERT_EQ(v.kind, VerdictKind::DeltaSat);
  EXPECT_TRUE(certify_witness(*v.witness, sat, 1e-4));
  EXPECT_EQ(decide(ConstraintSystem(dom, unsat), cfg).kind, VerdictKind::Unsat);
}

TEST(Decide, DeltaMonotone) {
  Formula f = eq0(x * x * x - x - Term(1));
  Verdict v = run(Box{{"x", Interval(0, 3)}}, f, 1e-3);
  ASSERT_EQ(v.kind, VerdictKind::DeltaSat);
  for (double d : {1e-3, 1e-2, 0.1, 1.0}) EXPECT_TRUE(certify_witness(*v.witness, f, d)) << d;
}

TEST(Prune, LinearAtom) {
  auto b = prune(Box{{"x", Interval(0, 10)}}, Formula::ge0(x - Term(3)));
  ASSERT_TRUE(b);
  EXPECT_EQ(b->at("x").lo(), 3.0);
  EXPECT_EQ(b->at("x").hi(), 10.0);
}

TEST(Prune, Empty) { EXPECT_FALSE(prune(Box{{"x", Interval(0, 1)}}, Formula::ge0(x - Term(3)))); }

TEST(Prune, UniqueSolution) {
  Formula f = Formula::conj({Formula::ge0(y - x), Formula::ge0(x - y), Formula::ge0(x - Term(2)), Formula::ge0(Term(2) - x)});
  auto b = prune(Box{{"x", Interval(0, 4)}, {"y", Interval(0, 4)}}, f);
  ASSERT_TRUE(b);
  for (const char* n : {"x", "y"}) {
    EXPECT_NEAR(b->at(n).lo(), 2.0, 1e-12);
    EXPECT_NEAR(b->at(n).hi(), 2.0, 1e-12);
  }
}

TEST(Prune, KeepsSampledSolutions) {
  TermGen gen({"x", "y"}, 7);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    Formula f = gen.formula(2);
    Box box{{"x", Interval(gen.uniform(-3, 0), gen.uniform(0, 3))}, {"y", Interval(gen.uniform(-3, 0), gen.uniform(0, 3))}};
    std::optional<Box> p;
    try {
      p = prune(box, f);
    } catch (const DomainError&) {
      continue;
    }
    for (int s = 0; s < 20; ++s) {
      Box pt{{"x", Interval(gen.uniform(box.at("x").lo(), box.at("x").hi()))},
             {"y", Interval(gen.uniform(box.at("y").lo(), box.at("y").hi()))}};
      bool sat;
      try {
        sat = eval_point(f, pt);
      } catch (const DomainError&) {
        continue;
      }
      // Points near an atom's boundary may differ in float evaluation.
      if (!sat || eval_interval(f, pt) != Truth::True) continue;
      ++checked;
      ASSERT_TRUE(p) << f.to_string();
      EXPECT_TRUE(p->contains(pt)) << f.to_string();
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Certify, Examples) {
  EXPECT_TRUE(certify_witness(Box{{"x", Interval(1.41, 1.42)}}, Formula::ge0(x * x - Term(2)), 0.05));
  EXPECT_FALSE(certify_witness(Box{{"x", Interval(0, 0.1)}}, Formula::gt0(x - Term(1)), 0.01));
  EXPECT_TRUE(certify_witness(Box{{"x", Interval(1, 1)}}, Formula::ge0(x - Term(1)), 0.0));
}

TEST(Stats, KeyValue) {
  Verdict v = run(Box{{"x", Interval(1, 2)}}, eq0(x * x - Term(2)));
  std::string kv = v.stats.to_kv();
  EXPECT_NE(kv.find("branches="), std::string::npos);
  EXPECT_NE(kv.find("prunes="), std::string::npos);
  EXPECT_NE(kv.find("max_depth="), std::string::npos);
}

// One-sided error: systems with a planted solution are never unsat, systems
// without solutions are never delta-sat.
TEST(OneSidedError, PlantedNeverUnsat) {
  TermGen g(system_vars(), 2024);
  SolverConfig cfg;
  cfg.max_splits = 200000;
  int sat = 0;
  for (int i = 0; i < 200; ++i) {
    Generated s = planted_system(g);
    auto t0 = std::chrono::steady_clock::now();
    Verdict v = decide(ConstraintSystem(s.dom, s.phi, cfg.delta), cfg);
    double secs = seconds_since(t0);
    EXPECT_NE(v.kind, VerdictKind::Unsat) << i << ": " << s.phi.to_string();
    EXPECT_LT(secs, 5.0) << i << ": " << s.phi.to_string();
    if (v.kind == VerdictKind::DeltaSat) {
      ++sat;
      EXPECT_TRUE(certify_witness(*v.witness, s.phi, cfg.delta));
    }
  }
  EXPECT_GE(sat, 190);
}

TEST(OneSidedError, InfeasibleNeverDeltaSat) {
  TermGen g(system_vars(), 4048);
  SolverConfig cfg;
  cfg.max_splits = 200000;
  int unsat = 0;
  for (int i = 0; i < 200; ++i) {
    Generated s = infeasible_system(g);
    auto t0 = std::chrono::steady_clock::now();
    Verdict v = decide(ConstraintSystem(s.dom, s.phi, cfg.delta), cfg);
    double secs = seconds_since(t0);
    EXPECT_NE(v.kind, VerdictKind::DeltaSat) << i << ": " << s.phi.to_string();
    EXPECT_LT(secs, 5.0) << i << ": " << s.phi.to_string();
    unsat += v.kind == VerdictKind::Unsat;
  }
  EXPECT_GE(unsat, 190);
}
