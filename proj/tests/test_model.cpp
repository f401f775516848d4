// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "hyreach/model.hpp"

using namespace hyreach;

namespace {

std::string model_path(const std::string& name) { return std::string(HYREACH_MODELS_DIR) + "/" + name; }

bool has_code(const std::vector<Diagnostic>& d, const std::string& code) {
  for (const auto& x : d)
    if (x.code == code) return true;
  return false;
}

const char* kTiny = R"(
var x in [0, 10];
param k in [1, 2];
mode 1 { d/dt[x] = -k * x; }
mode 2 { inv: x >= 0; d/dt[x] = 0; }
jump 1 -> 2 when x <= 1 reset { x' = x + 1; };
init mode 1 with x = 5;
)";

} // namespace

TEST(ParseModel, BouncingBall) {
  HybridAutomaton ha = load_model(model_path("bouncing_ball.model"));
  EXPECT_EQ(ha.modes.size(), 2u);
  EXPECT_EQ(ha.jumps.size(), 2u);
  ASSERT_EQ(ha.inits.size(), 1u);
  EXPECT_EQ(ha.inits[0].mode, 1);
  Box init_pt{{"x", Interval(10)}, {"v", Interval(0)}};
  EXPECT_TRUE(eval_point(ha.inits[0].condition, init_pt));
  Box other{{"x", Interval(9)}, {"v", Interval(0)}};
  EXPECT_FALSE(eval_point(ha.inits[0].condition, other));
  EXPECT_TRUE(validate(ha).empty());
}

TEST(ParseModel, BundledModelsValidate) {
  for (const char* name : {"bouncing_ball.model", "bcf.model", "fk.model", "bcf_spike_dome.model", "fk_spike_dome.model"}) {
    HybridAutomaton ha = load_model(model_path(name));
    auto diags = validate(ha);
    EXPECT_TRUE(diags.empty()) << name << ": " << (diags.empty() ? "" : diags.front().message);
  }
  HybridAutomaton bcf = load_model(model_path("bcf.model"));
  EXPECT_EQ(bcf.modes.size(), 4u);
  EXPECT_EQ(bcf.free_params(), std::vector<std::string>{"eps"});
}

TEST(ParseModel, UndeclaredModeInJump) {
  std::string text = std::string(kTiny) + "jump 1 -> 9 when x >= 1 reset {};\n";
  try {
    parse_model(text);
    FAIL() << "expected an error";
  } catch (const UnknownIdentifierError& e) {
    EXPECT_EQ(e.line(), 8);
  }
}

TEST(ParseModel, EmptyFile) {
  EXPECT_THROW(parse_model(""), ParseError);
  EXPECT_THROW(parse_model("  // only a comment\n"), ParseError);
}

TEST(ParseModel, SyntaxErrorsCarryPositions) {
  try {
    parse_model("var x in [0, 1]\nmode 1 { }");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.column(), 1);
  }
}

TEST(ParseModel, MissingBoundAndUnknownIdentifier) {
  EXPECT_THROW(parse_model("var x;"), ParseError);
  EXPECT_THROW(parse_model("param p;"), ParseError);
  EXPECT_THROW(parse_model("var x in [0,1]; mode 1 { d/dt[x] = y; } init mode 1;"), UnknownIdentifierError);
  EXPECT_THROW(parse_model("var x in [0,1]; mode 1 { d/dt[x] = 1; } mode 1 { d/dt[x] = 1; }"), ParseError);
}

TEST(ParseModel, ParenthesisedTermsAndFormulas) {
  HybridAutomaton ha = parse_model(R"(
var x in [0, 10];
var y in [0, 10];
mode 1 { inv: (x + 1) * 2 >= y and (x <= 3 or not (y > 2)) and 0 <= x <= 9; d/dt[x] = 1; d/dt[y] = -(x - y) ^ 2; }
init mode 1 with x = 0 and y = 0;
)");
  const Formula& inv = ha.modes[0].invariant;
  EXPECT_TRUE(eval_point(inv, Box{{"x", Interval(1)}, {"y", Interval(1)}}));
  EXPECT_FALSE(eval_point(inv, Box{{"x", Interval(5)}, {"y", Interval(5)}}));
  EXPECT_TRUE(eval_point(inv, Box{{"x", Interval(2)}, {"y", Interval(5)}}));
  EXPECT_FALSE(eval_point(inv, Box{{"x", Interval(9.5)}, {"y", Interval(1)}}));
}

TEST(Validate, MissingFlow) {
  HybridAutomaton ha = load_model(model_path("bcf.model"));
  for (auto& m : ha.modes)
    if (m.id == 2) m.flow.erase("w");
  auto d = validate(ha);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].code, "missing-flow");
}

TEST(Validate, NameClash) {
  HybridAutomaton ha = parse_model(std::string(kTiny) + "param x = 3;\n");
  EXPECT_TRUE(has_code(validate(ha), "name-clash"));
}

TEST(Validate, DuplicateResetAndUnknownMode) {
  HybridAutomaton ha = parse_model(kTiny);
  ha.jumps[0].reset.emplace_back("x", Term(0));
  Jump bad;
  bad.from = 2;
  bad.to = 5;
  ha.jumps.push_back(bad);
  auto d = validate(ha);
  EXPECT_TRUE(has_code(d, "duplicate-reset"));
  EXPECT_TRUE(has_code(d, "unknown-mode"));
}

TEST(RoundTrip, SerializeThenParse) {
  for (const char* name : {"bouncing_ball.model", "bcf.model", "fk.model", "bcf_spike_dome.model"}) {
    HybridAutomaton a = load_model(model_path(name));
    std::string text = serialize(a);
    HybridAutomaton b = parse_model(text);
    EXPECT_EQ(serialize(b), text) << name;
    ASSERT_EQ(a.modes.size(), b.modes.size());
    for (std::size_t i = 0; i < a.modes.size(); ++i) {
      EXPECT_TRUE(structurally_equal(a.modes[i].invariant, b.modes[i].invariant));
      for (const auto& [v, t] : a.modes[i].flow) EXPECT_TRUE(structurally_equal(t, b.modes[i].flow.at(v))) << v;
    }
    for (std::size_t i = 0; i < a.jumps.size(); ++i) EXPECT_TRUE(structurally_equal(a.jumps[i].guard, b.jumps[i].guard));
    EXPECT_TRUE(structurally_equal(a.inits[0].condition, b.inits[0].condition));
  }
}

TEST(Overrides, ParamsAndInitialValues) {
  HybridAutomaton ha = load_model(model_path("bcf.model"));
  ha.set("eps", Rational(0), Rational(1, 4));
  EXPECT_EQ(ha.find_param("eps")->hi, Rational(1, 4));
  ha.set("tau_o1", Rational(11, 2000), Rational(11, 2000));
  EXPECT_TRUE(ha.find_param("tau_o1")->is_point());
  ha.set("u", Rational(1, 10), Rational(1, 10));
  Box pt{{"u", Interval(0.1)}, {"v", Interval(1)}, {"w", Interval(1)}, {"s", Interval(0)}, {"tg", Interval(0)}};
  EXPECT_TRUE(eval_point(ha.inits[0].condition, pt));
  EXPECT_THROW(ha.set("nope", Rational(0), Rational(1)), ArgumentError);
}

TEST(Goal, Parse) {
  HybridAutomaton ha = load_model(model_path("bcf.model"));
  Goal g = parse_goal("mode=4", ha);
  EXPECT_EQ(g.mode, 4);
  EXPECT_TRUE(g.condition.is_true());
  Goal h = parse_goal("mode=4 && u>=1.18", ha);
  EXPECT_EQ(h.mode, 4);
  EXPECT_TRUE(h.condition.is_atom());
  Goal any = parse_goal("u >= 1", ha);
  EXPECT_FALSE(any.mode);
  EXPECT_THROW(parse_goal("mode=9", ha), UnknownIdentifierError);
  EXPECT_THROW(parse_goal("q >= 1", ha), UnknownIdentifierError);
}
