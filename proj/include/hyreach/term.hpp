// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hyreach/interval.hpp"

namespace hyreach {

/// An exact rational num/den with den > 0, in lowest terms.
class Rational {
public:
  constexpr Rational() noexcept = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) { // NOLINT
    if (den == 0) throw ArgumentError("rational with zero denominator");
    normalize();
  }

  /// Parses `[+-]digits[.digits][(e|E)[+-]digits]`. Returns nullopt if the
  /// value does not fit in 64-bit numerator/denominator.
  static std::optional<Rational> parse(std::string_view text) {
    std::size_t i = 0;
    bool neg = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) neg = text[i++] == '-';
    __int128 num = 0, den = 1;
    const __int128 limit = static_cast<__int128>(1) << 62;
    bool any = false;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i, any = true) {
      num = num * 10 + (text[i] - '0');
      if (num > limit) return std::nullopt;
    }
    if (i < text.size() && text[i] == '.') {
      for (++i; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i, any = true) {
        num = num * 10 + (text[i] - '0');
        den *= 10;
        if (num > limit || den > limit) return std::nullopt;
      }
    }
    if (!any) return std::nullopt;
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
      ++i;
      bool eneg = false;
      if (i < text.size() && (text[i] == '+' || text[i] == '-')) eneg = text[i++] == '-';
      int e = 0;
      bool edigits = false;
      for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i, edigits = true) {
        e = e * 10 + (text[i] - '0');
        if (e > 40) return std::nullopt;
      }
      if (!edigits) return std::nullopt;
      for (int k = 0; k < e; ++k) {
        if (eneg) den *= 10; else num *= 10;
        if (num > limit || den > limit) return std::nullopt;
      }
    }
    if (i != text.size()) return std::nullopt;
    return Rational(static_cast<std::int64_t>(neg ? -num : num), static_cast<std::int64_t>(den));
  }

  /// The exact value of a finite double when it fits, else the nearest
  /// 17-digit decimal.
  static Rational from_double(double v) {
    if (!std::isfinite(v)) throw ArgumentError("cannot convert a non-finite value to a rational");
    if (v == 0.0) return Rational(0);
    int e = 0;
    double m = std::frexp(v, &e);
    auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
    e -= 53;
    while (e < 0 && (mant & 1) == 0) {
      mant /= 2;
      ++e;
    }
    if (e >= 0 && e < 62 && std::llabs(mant) < (std::int64_t{1} << (62 - e))) return Rational(mant * (std::int64_t{1} << e));
    if (e < 0 && e > -63) return Rational(mant, std::int64_t{1} << (-e));
    // Shortest decimal that reads back as v.
    char buf[40];
    for (int digits = 1; digits <= 17; ++digits) {
      std::snprintf(buf, sizeof buf, "%.*g", digits, v);
      if (std::strtod(buf, nullptr) != v) continue;
      if (auto r = parse(buf)) return *r;
    }
    throw ArgumentError("value out of rational range");
  }

  /// The shortest decimal that reads back as `v`, for user-facing
  /// tolerances such as delta. Falls back to the exact binary value.
  static Rational from_decimal(double v) {
    if (!std::isfinite(v)) throw ArgumentError("cannot convert a non-finite value to a rational");
    char buf[40];
    for (int digits = 1; digits <= 17; ++digits) {
      std::snprintf(buf, sizeof buf, "%.*g", digits, v);
      if (std::strtod(buf, nullptr) != v) continue;
      if (auto r = parse(buf)) return *r;
      break;
    }
    return from_double(v);
  }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  bool is_zero() const noexcept { return num_ == 0; }
  bool is_integer() const noexcept { return den_ == 1; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Tightest outward-rounded enclosure of the exact value.
  Interval enclosure() const noexcept {
    constexpr std::int64_t exact = std::int64_t{1} << 53;
    double q = static_cast<double>(num_) / static_cast<double>(den_);
    if (std::llabs(num_) <= exact && den_ <= exact) {
      double r = std::fma(-q, static_cast<double>(den_), static_cast<double>(num_));
      if (r == 0.0) return Interval(q);
      return r > 0 ? Interval::unchecked(q, rounding::up(q)) : Interval::unchecked(rounding::down(q), q);
    }
    return Interval::unchecked(rounding::down(rounding::down(q)), rounding::up(rounding::up(q)));
  }

  std::string to_string() const {
    if (den_ == 1) return std::to_string(num_);
    // Print terminating fractions as decimals so model files stay readable.
    std::int64_t d = den_;
    int twos = 0, fives = 0;
    while (d % 2 == 0) d /= 2, ++twos;
    while (d % 5 == 0) d /= 5, ++fives;
    if (d == 1 && std::max(twos, fives) <= 18) {
      int digits = std::max(twos, fives);
      __int128 scale = 1;
      for (int i = 0; i < digits; ++i) scale *= 10;
      __int128 scaled = static_cast<__int128>(num_) * (scale / den_);
      bool neg = scaled < 0;
      if (neg) scaled = -scaled;
      std::string s;
      for (int i = 0; i < digits || scaled > 0; ++i) {
        s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(scaled % 10)));
        scaled /= 10;
        if (i + 1 == digits) s.insert(s.begin(), '.');
      }
      if (s.front() == '.') s.insert(s.begin(), '0');
      return (neg ? "-" : "") + s;
    }
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

  friend std::optional<Rational> checked_add(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                     static_cast<__int128>(a.den_) * b.den_);
  }
  friend std::optional<Rational> checked_mul(const Rational& a, const Rational& b) {
    return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
  }
  Rational operator-() const { return Rational(-num_, den_); }

  friend bool operator==(const Rational& a, const Rational& b) noexcept {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const Rational& a, const Rational& b) noexcept {
    return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
  }

private:
  static std::optional<Rational> from_wide(__int128 n, __int128 d) {
    if (d < 0) n = -n, d = -d;
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) n /= a, d /= a;
    const __int128 lim = static_cast<__int128>(INT64_MAX);
    if (n > lim || n < -lim || d > lim) return std::nullopt;
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
  }

  void normalize() {
    if (den_ < 0) num_ = -num_, den_ = -den_;
    std::int64_t g = std::gcd(num_, den_);
    if (g > 1) num_ /= g, den_ /= g;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Term constructors. Every node of a term is one of these.
enum class Op {
  Var, Const,
  Add, Sub, Mul, Div, Pow, Min, Max,  // binary
  Neg, Exp, Log, Sin, Cos, Tanh, Sqrt, Abs,  // unary
  Sign, Step  // unary, arise from differentiating abs/min/max
};

inline constexpr int arity(Op op) noexcept {
  switch (op) {
    case Op::Var:
    case Op::Const: return 0;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
    case Op::Min:
    case Op::Max: return 2;
    default: return 1;
  }
}

inline const char* function_name(Op op) noexcept {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Pow: return "^";
    case Op::Neg: return "-";
    case Op::Min: return "min";
    case Op::Max: return "max";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Sign: return "sign";
    case Op::Step: return "step";
    default: return "?";
  }
}

/// Looks up a named unary/binary function symbol (`exp`, `min`, ...).
inline std::optional<Op> function_by_name(std::string_view name) noexcept {
  static constexpr std::pair<std::string_view, Op> table[] = {
      {"exp", Op::Exp}, {"log", Op::Log}, {"sin", Op::Sin},   {"cos", Op::Cos},   {"tanh", Op::Tanh},
      {"sqrt", Op::Sqrt}, {"abs", Op::Abs}, {"min", Op::Min}, {"max", Op::Max}, {"pow", Op::Pow},
      {"sign", Op::Sign}, {"step", Op::Step}};
  for (const auto& [n, op] : table)
    if (n == name) return op;
  return std::nullopt;
}

/// An immutable arithmetic term: a variable, a rational constant, or a
/// function applied to sub-terms. Copies share structure.
class Term {
  struct Node {
    Op op;
    std::string name;            // Var
    std::optional<Rational> exact;  // Const, when representable
    Interval value;              // Const enclosure
    std::vector<Term> args;
  };

public:
  Term() : Term(Rational(0)) {}
  Term(Rational c) : node_(make_const(c)) {} // NOLINT
  Term(int c) : Term(Rational(c)) {} // NOLINT
  Term(double) = delete;

  static Term var(std::string name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->name = std::move(name);
    return Term(std::move(n));
  }

  static Term constant(Rational c) { return Term(c); }

  /// A decimal literal. Literals too long for an exact 64-bit rational keep
  /// a one-ulp enclosure of their nearest double.
  static Term literal(std::string_view text) {
    if (auto r = Rational::parse(text)) return Term(*r);
    double d = std::strtod(std::string(text).c_str(), nullptr);
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = Interval::unchecked(rounding::down(d), rounding::up(d));
    return Term(std::move(n));
  }

  /// Applies `op` to the given arguments with light algebraic simplification
  /// (identity elements, constant folding over exact rationals, --x = x).
  static Term apply(Op op, std::vector<Term> args);

  Op op() const noexcept { return node_->op; }
  const std::string& name() const noexcept { return node_->name; }
  const std::vector<Term>& args() const noexcept { return node_->args; }
  const Term& arg(std::size_t i) const { return node_->args.at(i); }
  const std::optional<Rational>& exact() const noexcept { return node_->exact; }
  const Interval& const_value() const noexcept { return node_->value; }

  bool is_const() const noexcept { return op() == Op::Const; }
  bool is_const(std::int64_t v) const noexcept {
    return is_const() && exact() && *exact() == Rational(v);
  }
  bool is_var() const noexcept { return op() == Op::Var; }
  const void* identity() const noexcept { return node_.get(); }

  void collect_vars(std::set<std::string>& out) const {
    if (is_var()) out.insert(name());
    for (const auto& a : args()) a.collect_vars(out);
  }
  std::set<std::string> free_vars() const {
    std::set<std::string> s;
    collect_vars(s);
    return s;
  }

  /// False if the term contains a non-differentiable constructor.
  bool is_smooth() const {
    switch (op()) {
      case Op::Min:
      case Op::Max:
      case Op::Abs:
      case Op::Sign:
      case Op::Step: return false;
      default: break;
    }
    for (const auto& a : args())
      if (!a.is_smooth()) return false;
    return true;
  }

  /// Node count, used to bound expression swell.
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : args()) n += a.size();
    return n;
  }

  /// Replaces variables by terms; unmapped variables stay.
  Term substitute(const std::map<std::string, Term>& map) const {
    if (is_var()) {
      auto it = map.find(name());
      return it == map.end() ? *this : it->second;
    }
    if (args().empty()) return *this;
    std::vector<Term> a;
    a.reserve(args().size());
    bool changed = false;
    for (const auto& x : args()) {
      a.push_back(x.substitute(map));
      changed |= a.back().identity() != x.identity();
    }
    return changed ? apply(op(), std::move(a)) : *this;
  }

  Term rename(const std::function<std::string(const std::string&)>& f) const {
    if (is_var()) return var(f(name()));
    if (args().empty()) return *this;
    std::vector<Term> a;
    for (const auto& x : args()) a.push_back(x.rename(f));
    return apply(op(), std::move(a));
  }

  /// Symbolic partial derivative with respect to `v`.
  Term derivative(const std::string& v) const;

  /// Conventional infix rendering, re-parseable by the model parser.
  std::string to_string() const {
    std::ostringstream os;
    print_infix(os, 0);
    return os.str();
  }

  /// Fully parenthesised prefix rendering, e.g. `(+ x (* 2 y))`.
  std::string to_prefix() const {
    std::ostringstream os;
    print_prefix(os);
    return os.str();
  }

  friend bool structurally_equal(const Term& a, const Term& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op()) return false;
    switch (a.op()) {
      case Op::Var: return a.name() == b.name();
      case Op::Const:
        if (a.exact() && b.exact()) return *a.exact() == *b.exact();
        return !a.exact() && !b.exact() && a.const_value() == b.const_value();
      default:
        if (a.args().size() != b.args().size()) return false;
        for (std::size_t i = 0; i < a.args().size(); ++i)
          if (!structurally_equal(a.args()[i], b.args()[i])) return false;
        return true;
    }
  }

private:
  explicit Term(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static std::shared_ptr<const Node> make_const(const Rational& c) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->exact = c;
    n->value = c.enclosure();
    return n;
  }

  static int precedence(Op op) noexcept {
    switch (op) {
      case Op::Add:
      case Op::Sub: return 1;
      case Op::Mul:
      case Op::Div: return 2;
      case Op::Neg: return 3;
      case Op::Pow: return 4;
      default: return 5;
    }
  }

  void print_const(std::ostream& os) const {
    if (exact()) {
      os << exact()->to_string();
    } else {
      std::ostringstream s;
      s.precision(17);
      s << const_value().mid();
      os << s.str();
    }
  }

  void print_infix(std::ostream& os, int parent_prec) const {
    switch (op()) {
      case Op::Var: os << name(); return;
      case Op::Const: {
        bool neg = exact() ? exact()->num() < 0 : const_value().mid() < 0;
        bool frac = exact() && !exact()->is_integer() && exact()->to_string().find('/') != std::string::npos;
        bool paren = (neg && parent_prec >= 1) || (frac && parent_prec >= 2);
        if (paren) os << '(';
        print_const(os);
        if (paren) os << ')';
        return;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow: {
        int p = precedence(op());
        bool paren = p < parent_prec;
        if (paren) os << '(';
        // Left-associative except ^; a right operand at equal precedence is
        // parenthesised so re-parsing rebuilds the same tree.
        arg(0).print_infix(os, op() == Op::Pow ? p + 1 : p);
        os << ' ' << function_name(op()) << ' ';
        arg(1).print_infix(os, p + 1);
        if (paren) os << ')';
        return;
      }
      case Op::Neg: {
        bool paren = parent_prec > 0;
        if (paren) os << '(';
        os << '-';
        arg(0).print_infix(os, precedence(Op::Neg) + 1);
        if (paren) os << ')';
        return;
      }
      default: {
        os << function_name(op()) << '(';
        for (std::size_t i = 0; i < args().size(); ++i) {
          if (i) os << ", ";
          args()[i].print_infix(os, 0);
        }
        os << ')';
      }
    }
  }

  void print_prefix(std::ostream& os) const {
    if (is_var()) {
      os << name();
      return;
    }
    if (is_const()) {
      print_const(os);
      return;
    }
    os << '(' << (op() == Op::Neg ? "neg" : function_name(op()));
    for (const auto& a : args()) {
      os << ' ';
      a.print_prefix(os);
    }
    os << ')';
  }

  std::shared_ptr<const Node> node_;
};

inline Term Term::apply(Op op, std::vector<Term> args) {
  if (static_cast<int>(args.size()) != arity(op)) throw ArgumentError("wrong arity for term constructor");
  auto exact_of = [](const Term& t) -> std::optional<Rational> {
    return t.is_const() ? t.exact() : std::nullopt;
  };
  switch (op) {
    case Op::Add:
      if (args[0].is_const(0)) return args[1];
      if (args[1].is_const(0)) return args[0];
      if (auto a = exact_of(args[0]), b = exact_of(args[1]); a && b)
        if (auto r = checked_add(*a, *b)) return Term(*r);
      break;
    case Op::Sub:
      if (args[1].is_const(0)) return args[0];
      if (args[0].is_const(0)) return apply(Op::Neg, {args[1]});
      if (auto a = exact_of(args[0]), b = exact_of(args[1]); a && b)
        if (auto r = checked_add(*a, -*b)) return Term(*r);
      break;
    case Op::Mul:
      if (args[0].is_const(0) || args[1].is_const(0)) return Term(0);
      if (args[0].is_const(1)) return args[1];
      if (args[1].is_const(1)) return args[0];
      if (args[0].is_const(-1)) return apply(Op::Neg, {args[1]});
      if (args[1].is_const(-1)) return apply(Op::Neg, {args[0]});
      if (auto a = exact_of(args[0]), b = exact_of(args[1]); a && b)
        if (auto r = checked_mul(*a, *b)) return Term(*r);
      break;
    case Op::Div:
      if (args[1].is_const(1)) return args[0];
      if (args[0].is_const(0) && !args[1].is_const(0)) return Term(0);
      break;
    case Op::Pow:
      if (args[1].is_const(1)) return args[0];
      if (args[1].is_const(0)) return Term(1);
      break;
    case Op::Neg:
      if (args[0].op() == Op::Neg) return args[0].arg(0);
      if (auto a = exact_of(args[0])) return Term(-*a);
      break;
    default: break;
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return Term(std::move(n));
}

// --- builders ----------------------------------------------------------

inline Term operator+(const Term& a, const Term& b) { return Term::apply(Op::Add, {a, b}); }
inline Term operator-(const Term& a, const Term& b) { return Term::apply(Op::Sub, {a, b}); }
inline Term operator*(const Term& a, const Term& b) { return Term::apply(Op::Mul, {a, b}); }
inline Term operator/(const Term& a, const Term& b) { return Term::apply(Op::Div, {a, b}); }
inline Term operator-(const Term& a) { return Term::apply(Op::Neg, {a}); }
inline Term pow(const Term& a, const Term& b) { return Term::apply(Op::Pow, {a, b}); }
inline Term exp(const Term& a) { return Term::apply(Op::Exp, {a}); }
inline Term log(const Term& a) { return Term::apply(Op::Log, {a}); }
inline Term sin(const Term& a) { return Term::apply(Op::Sin, {a}); }
inline Term cos(const Term& a) { return Term::apply(Op::Cos, {a}); }
inline Term tanh(const Term& a) { return Term::apply(Op::Tanh, {a}); }
inline Term sqrt(const Term& a) { return Term::apply(Op::Sqrt, {a}); }
inline Term abs(const Term& a) { return Term::apply(Op::Abs, {a}); }
inline Term min(const Term& a, const Term& b) { return Term::apply(Op::Min, {a, b}); }
inline Term max(const Term& a, const Term& b) { return Term::apply(Op::Max, {a, b}); }

inline Term Term::derivative(const std::string& v) const {
  switch (op()) {
    case Op::Var: return Term(name() == v ? 1 : 0);
    case Op::Const: return Term(0);
    default: break;
  }
  const Term& a = arg(0);
  Term da = a.derivative(v);
  if (arity(op()) == 1) {
    if (da.is_const(0)) return Term(0);
    switch (op()) {
      case Op::Neg: return -da;
      case Op::Exp: return *this * da;
      case Op::Log: return da / a;
      case Op::Sin: return cos(a) * da;
      case Op::Cos: return -(sin(a) * da);
      case Op::Tanh: return (Term(1) - *this * *this) * da;
      case Op::Sqrt: return da / (Term(2) * *this);
      // Clarke generalised gradient; sign(0) evaluates to [-1, 1].
      case Op::Abs: return Term::apply(Op::Sign, {a}) * da;
      // Piecewise constant; the jump is not representable and callers must
      // not rely on second derivatives of non-smooth terms.
      case Op::Sign:
      case Op::Step: return Term(0);
      default: break;
    }
  }
  const Term& b = arg(1);
  Term db = b.derivative(v);
  switch (op()) {
    case Op::Add: return da + db;
    case Op::Sub: return da - db;
    case Op::Mul: return da * b + a * db;
    case Op::Div: return (da * b - a * db) / (b * b);
    case Op::Pow:
      if (db.is_const(0)) {
        if (da.is_const(0)) return Term(0);
        return b * pow(a, b - Term(1)) * da;
      }
      return *this * (db * log(a) + b * da / a);
    case Op::Min:
    case Op::Max: {
      if (da.is_const(0) && db.is_const(0)) return Term(0);
      // Active branch away from the switching surface; on it, step() spans
      // [0, 1] and the blend covers the hull of both branch gradients.
      Term wa = Term::apply(Op::Step, {op() == Op::Max ? a - b : b - a});
      return wa * da + (Term(1) - wa) * db;
    }
    default: break;
  }
  throw ArgumentError("cannot differentiate term");
}

} // namespace hyreach
