// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "hyreach/formula.hpp"
#include "hyreach/term.hpp"

namespace hyreach::test_support {

/// Random terms over the given variables from the full constructor set.
/// Domain-restricted functions only receive arguments kept positive.
class TermGen {
public:
  TermGen(std::vector<std::string> vars, std::uint64_t seed) : vars_(std::move(vars)), rng_(seed) {}

  Term term(int depth) {
    if (depth <= 0 || pick(4) == 0) return leaf();
    switch (pick(14)) {
      case 0: return term(depth - 1) + term(depth - 1);
      case 1: return term(depth - 1) - term(depth - 1);
      case 2: return term(depth - 1) * term(depth - 1);
      case 3: return term(depth - 1) / (Term(2) + sqr_of(term(depth - 1)));
      case 4: return pow(term(depth - 1), Term(static_cast<int>(pick(4))));
      case 5: return exp(Term::apply(Op::Mul, {Term(Rational(1, 4)), term(depth - 1)}));
      case 6: return log(Term(1) + sqr_of(term(depth - 1)));
      case 7: return sin(term(depth - 1));
      case 8: return cos(term(depth - 1));
      case 9: return sqrt(Term(Rational(1, 2)) + sqr_of(term(depth - 1)));
      case 10: return min(term(depth - 1), term(depth - 1));
      case 11: return max(term(depth - 1), term(depth - 1));
      case 12: return abs(term(depth - 1));
      default: return tanh(term(depth - 1));
    }
  }

  Formula formula(int depth) {
    if (depth <= 0 || pick(3) == 0) {
      Term t = term(2);
      return pick(2) ? Formula::gt0(t) : Formula::ge0(t);
    }
    std::vector<Formula> kids;
    int n = 1 + static_cast<int>(pick(3));
    for (int i = 0; i < n; ++i) kids.push_back(formula(depth - 1));
    return pick(2) ? Formula::conj(kids) : Formula::disj(kids);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::mt19937_64& rng() { return rng_; }

private:
  static Term sqr_of(const Term& t) { return t * t; }

  Term leaf() {
    if (pick(3) == 0) {
      int num = static_cast<int>(pick(21)) - 10;
      int den = 1 + static_cast<int>(pick(4));
      return Term(Rational(num, den));
    }
    return Term::var(vars_[pick(vars_.size())]);
  }

  std::vector<std::string> vars_;
  std::mt19937_64 rng_;
};

} // namespace hyreach::test_support
