// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hyreach/formula.hpp"
#include "hyreach/term.hpp"

namespace hyreach {

/// Name of the implicit per-mode clock (d/dt = 1, reset to 0 on every jump).
inline constexpr std::string_view kTimeVar = "time";

struct VarDecl {
  std::string name;
  Rational lo, hi;
};

struct ParamDecl {
  std::string name;
  Rational lo, hi;
  bool fixed = false;  // declared `param p = v;`

  bool is_point() const { return lo == hi; }
};

struct Mode {
  int id = 0;
  std::map<std::string, Term> flow;  // d/dt[var] = term
  Formula invariant = Formula::top();
};

struct Jump {
  int from = 0;
  int to = 0;
  Formula guard = Formula::top();
  std::vector<std::pair<std::string, Term>> reset;  // var' = term over the pre-state
};

struct InitCond {
  int mode = 0;
  Formula condition = Formula::top();
};

struct Diagnostic {
  std::string code;
  std::string message;
};

/// A hybrid automaton in the ℒ_ℝF representation: state variables with
/// global bounds, named parameters, modes with vector fields and invariants,
/// guarded jumps with resets, and initial conditions.
class HybridAutomaton {
public:
  std::vector<VarDecl> vars;
  std::vector<ParamDecl> params;
  std::vector<Mode> modes;
  std::vector<Jump> jumps;
  std::vector<InitCond> inits;

  const Mode* find_mode(int id) const {
    for (const auto& m : modes)
      if (m.id == id) return &m;
    return nullptr;
  }
  const Mode& mode(int id) const {
    if (const Mode* m = find_mode(id)) return *m;
    throw ShapeError("no mode " + std::to_string(id));
  }
  const VarDecl* find_var(std::string_view name) const {
    for (const auto& v : vars)
      if (v.name == name) return &v;
    return nullptr;
  }
  const ParamDecl* find_param(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  ParamDecl* find_param(std::string_view name) {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::vector<std::string> var_names() const {
    std::vector<std::string> out;
    for (const auto& v : vars) out.push_back(v.name);
    return out;
  }

  /// Parameters whose bound is a non-degenerate interval.
  std::vector<std::string> free_params() const {
    std::vector<std::string> out;
    for (const auto& p : params)
      if (!p.is_point()) out.push_back(p.name);
    return out;
  }

  /// Exact values of the point-valued parameters.
  std::map<std::string, Term> fixed_param_values() const {
    std::map<std::string, Term> out;
    for (const auto& p : params)
      if (p.is_point()) out.emplace(p.name, Term(p.lo));
    return out;
  }

  /// Replaces the bound of parameter `name`.
  void set_param(const std::string& name, Rational lo, Rational hi) {
    ParamDecl* p = find_param(name);
    if (!p) throw ArgumentError("unknown parameter '" + name + "'");
    if (hi < lo) throw ArgumentError("empty range for '" + name + "'");
    p->lo = lo;
    p->hi = hi;
    p->fixed = lo == hi;
  }

  /// Replaces the initial value of state variable `name` in every initial
  /// condition: top-level conjuncts constraining only `name` are dropped and
  /// `lo <= name <= hi` is added.
  void set_initial(const std::string& name, Rational lo, Rational hi) {
    if (!find_var(name)) throw ArgumentError("unknown state variable '" + name + "'");
    if (hi < lo) throw ArgumentError("empty range for '" + name + "'");
    Term v = Term::var(name);
    for (auto& init : inits) {
      std::vector<Formula> kept;
      auto keep = [&](const Formula& f) {
        auto fv = f.free_vars();
        if (!(fv.size() == 1 && *fv.begin() == name)) kept.push_back(f);
      };
      if (init.condition.kind() == Formula::Kind::And)
        for (const auto& k : init.condition.children()) keep(k);
      else
        keep(init.condition);
      if (lo == hi) {
        kept.push_back(Formula::eq(v, Term(lo)));
      } else {
        kept.push_back(Formula::ge(v, Term(lo)));
        kept.push_back(Formula::le(v, Term(hi)));
      }
      init.condition = Formula::conj(std::move(kept));
    }
  }

  /// Applies `name = [lo, hi]` to a parameter or, failing that, to the
  /// initial value of a state variable.
  void set(const std::string& name, Rational lo, Rational hi) {
    if (find_param(name))
      set_param(name, lo, hi);
    else if (find_var(name))
      set_initial(name, lo, hi);
    else
      throw ArgumentError("unknown parameter or variable '" + name + "'");
  }
};

// --- validation ----------------------------------------------------------

/// One diagnostic per violated structural invariant; empty iff well-formed.
inline std::vector<Diagnostic> validate(const HybridAutomaton& ha) {
  std::vector<Diagnostic> out;
  auto report = [&](std::string code, std::string msg) { out.push_back({std::move(code), std::move(msg)}); };

  std::set<std::string> state, params;
  for (const auto& v : ha.vars) {
    if (v.name == kTimeVar) report("reserved-name", "'time' is the implicit mode clock");
    if (!state.insert(v.name).second) report("duplicate-variable", "variable '" + v.name + "' declared twice");
    if (v.hi < v.lo) report("empty-bound", "variable '" + v.name + "' has an empty bound");
  }
  for (const auto& p : ha.params) {
    if (state.count(p.name)) report("name-clash", "parameter '" + p.name + "' clashes with a state variable");
    if (p.name == kTimeVar) report("reserved-name", "'time' is the implicit mode clock");
    if (!params.insert(p.name).second) report("duplicate-parameter", "parameter '" + p.name + "' declared twice");
    if (p.hi < p.lo) report("empty-bound", "parameter '" + p.name + "' has an empty bound");
  }
  auto known = [&](const std::string& n) { return state.count(n) || params.count(n) || n == kTimeVar; };
  auto check_names = [&](const std::set<std::string>& names, const std::string& where) {
    for (const auto& n : names)
      if (!known(n)) report("unknown-identifier", "'" + n + "' in " + where + " is not declared");
  };

  std::set<int> ids;
  for (const auto& m : ha.modes) {
    std::string where = "mode " + std::to_string(m.id);
    if (!ids.insert(m.id).second) report("duplicate-mode", where + " declared twice");
    for (const auto& v : ha.vars)
      if (!m.flow.count(v.name)) report("missing-flow", where + " has no d/dt[" + v.name + "]");
    for (const auto& [name, rhs] : m.flow) {
      if (!state.count(name)) report("unknown-identifier", where + " defines d/dt[" + name + "] for an undeclared variable");
      check_names(rhs.free_vars(), where + " flow");
    }
    check_names(m.invariant.free_vars(), where + " invariant");
  }
  for (const auto& j : ha.jumps) {
    std::string where = "jump " + std::to_string(j.from) + " -> " + std::to_string(j.to);
    if (!ids.count(j.from) || !ids.count(j.to)) report("unknown-mode", where + " refers to an undeclared mode");
    check_names(j.guard.free_vars(), where + " guard");
    std::set<std::string> assigned;
    for (const auto& [name, rhs] : j.reset) {
      if (!state.count(name)) report("unknown-identifier", where + " resets undeclared variable '" + name + "'");
      if (!assigned.insert(name).second) report("duplicate-reset", where + " resets '" + name + "' twice");
      check_names(rhs.free_vars(), where + " reset");
    }
  }
  if (ha.inits.empty()) report("no-init", "no initial condition");
  for (const auto& i : ha.inits) {
    if (!ids.count(i.mode)) report("unknown-mode", "init refers to undeclared mode " + std::to_string(i.mode));
    check_names(i.condition.free_vars(), "init");
  }
  return out;
}

// --- parsing -------------------------------------------------------------

namespace detail {

struct Token {
  enum Kind { Ident, Number, Punct, End } kind;
  std::string text;
  int line, col;
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  static const char* const two[] = {"<=", ">=", "==", "&&", "||", "->", "**", "!="};
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    int l = line, cc = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Token::Ident, std::string(src.substr(i, j - i)), l, cc});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      out.push_back({Token::Number, std::string(src.substr(i, j - i)), l, cc});
      advance(j - i);
      continue;
    }
    bool matched = false;
    for (const char* t : two) {
      if (src.substr(i, 2) == t) {
        out.push_back({Token::Punct, t, l, cc});
        advance(2);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("+-*/^<>=;,()[]{}:'!").find(c) != std::string_view::npos) {
      out.push_back({Token::Punct, std::string(1, c), l, cc});
      advance(1);
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", l, cc);
  }
  out.push_back({Token::End, "", line, col});
  return out;
}

/// Recursive-descent parser for terms and formulas over a token stream.
class ExprParser {
public:
  using Resolver = std::function<std::optional<Term>(const std::string&)>;

  ExprParser(std::vector<Token> toks, Resolver resolve) : t_(std::move(toks)), resolve_(std::move(resolve)) {}

  const Token& peek(std::size_t k = 0) const { return t_[std::min(p_ + k, t_.size() - 1)]; }
  bool at_end() const { return peek().kind == Token::End; }
  bool is(std::string_view s, std::size_t k = 0) const {
    const Token& tk = peek(k);
    return tk.kind != Token::End && tk.kind != Token::Number && tk.text == s;
  }
  bool accept(std::string_view s) {
    if (!is(s)) return false;
    ++p_;
    return true;
  }
  const Token& next() { return t_[std::min(p_++, t_.size() - 1)]; }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, peek().line, peek().col); }
  [[noreturn]] void fail_at(const Token& tk, const std::string& msg) const { throw ParseError(msg, tk.line, tk.col); }
  void expect(std::string_view s) {
    if (!accept(s)) fail("expected '" + std::string(s) + "'" + found());
  }
  std::string found() const {
    return at_end() ? " but reached end of input" : " but found '" + peek().text + "'";
  }
  std::string ident() {
    if (peek().kind != Token::Ident) fail("expected identifier" + found());
    return next().text;
  }
  int integer() {
    const Token& tk = peek();
    if (tk.kind != Token::Number) fail("expected integer" + found());
    auto r = Rational::parse(tk.text);
    if (!r || !r->is_integer()) fail("expected integer" + found());
    ++p_;
    return static_cast<int>(r->num());
  }

  /// A term that folds to an exact rational constant.
  Rational constant() {
    const Token& start = peek();
    Term t = term();
    if (!t.is_const() || !t.exact()) fail_at(start, "expected a constant");
    return *t.exact();
  }

  // term := add
  Term term() { return additive(); }

  Formula formula() { return disjunction(); }

  std::size_t pos() const { return p_; }
  void reset(std::size_t p) { p_ = p; }

private:
  Term additive() {
    Term t = multiplicative();
    for (;;) {
      if (accept("+")) t = t + multiplicative();
      else if (accept("-")) t = t - multiplicative();
      else return t;
    }
  }
  Term multiplicative() {
    Term t = unary();
    for (;;) {
      if (accept("*")) t = t * unary();
      else if (accept("/")) t = t / unary();
      else return t;
    }
  }
  Term unary() {
    if (accept("-")) return -unary();
    if (accept("+")) return unary();
    return power();
  }
  Term power() {
    Term base = primary();
    if (accept("^") || accept("**")) return pow(base, unary());
    return base;
  }
  Term primary() {
    const Token& tk = peek();
    if (tk.kind == Token::Number) {
      ++p_;
      return Term::literal(tk.text);
    }
    if (accept("(")) {
      Term t = term();
      expect(")");
      return t;
    }
    if (tk.kind == Token::Ident) {
      ++p_;
      if (is("(")) {
        auto op = function_by_name(tk.text);
        if (!op) fail_at(tk, "unknown function '" + tk.text + "'");
        expect("(");
        std::vector<Term> args{term()};
        while (accept(",")) args.push_back(term());
        expect(")");
        if (static_cast<int>(args.size()) != arity(*op))
          fail_at(tk, "function '" + tk.text + "' takes " + std::to_string(arity(*op)) + " argument(s)");
        return Term::apply(*op, std::move(args));
      }
      if (auto t = resolve_(tk.text)) return *t;
      throw UnknownIdentifierError("unknown identifier '" + tk.text + "'", tk.line, tk.col);
    }
    fail("expected a term" + found());
  }

  Formula disjunction() {
    std::vector<Formula> kids{conjunction()};
    while (accept("or") || accept("||")) kids.push_back(conjunction());
    return Formula::disj(std::move(kids));
  }
  Formula conjunction() {
    std::vector<Formula> kids{negation()};
    while (accept("and") || accept("&&")) kids.push_back(negation());
    return Formula::conj(std::move(kids));
  }
  Formula negation() {
    if (accept("not") || accept("!")) return negate(negation());
    return comparison();
  }
  Formula comparison() {
    if (accept("true")) return Formula::top();
    if (accept("false")) return Formula::bottom();
    if (is("(")) {
      // Either a parenthesised formula or a term starting with '('.
      std::size_t save = p_;
      try {
        ++p_;
        Formula f = formula();
        expect(")");
        if (!is_relop() && !is_arith()) return f;
      } catch (const UnknownIdentifierError&) {
        throw;
      } catch (const ParseError&) {
      }
      p_ = save;
    }
    Term lhs = term();
    if (!is_relop()) fail("expected a comparison" + found());
    std::vector<Formula> parts;
    while (is_relop()) {
      std::string op = next().text;
      Term rhs = term();
      parts.push_back(relation(lhs, op, rhs));
      lhs = rhs;
    }
    return Formula::conj(std::move(parts));
  }
  bool is_relop() const { return is("<") || is("<=") || is(">") || is(">=") || is("=") || is("=="); }
  bool is_arith() const { return is("+") || is("-") || is("*") || is("/") || is("^") || is("**"); }
  static Formula relation(const Term& a, const std::string& op, const Term& b) {
    if (op == "<") return Formula::lt(a, b);
    if (op == "<=") return Formula::le(a, b);
    if (op == ">") return Formula::gt(a, b);
    if (op == ">=") return Formula::ge(a, b);
    return Formula::eq(a, b);
  }

  std::vector<Token> t_;
  std::size_t p_ = 0;
  Resolver resolve_;
};

} // namespace detail

/// Parses the model grammar (see docs/model-language.md).
inline HybridAutomaton parse_model(std::string_view text) {
  HybridAutomaton ha;
  std::map<std::string, Term> defines;
  std::set<std::string> declared;
  auto resolve = [&](const std::string& n) -> std::optional<Term> {
    if (auto it = defines.find(n); it != defines.end()) return it->second;
    if (declared.count(n) || n == kTimeVar) return Term::var(n);
    return std::nullopt;
  };
  auto tokens = detail::tokenize(text);
  detail::ExprParser p(tokens, resolve);
  if (p.at_end()) p.fail("empty model");

  struct ModeRef {
    int id;
    detail::Token where;
  };
  std::vector<ModeRef> refs;
  auto mode_ref = [&]() {
    detail::Token tk = p.peek();
    int id = p.integer();
    refs.push_back({id, tk});
    return id;
  };
  auto bound = [&](const std::string& what, const std::string& name) {
    if (!p.is("in")) p.fail("missing bound for " + what + " '" + name + "'");
    p.expect("in");
    p.expect("[");
    Rational lo = p.constant();
    p.expect(",");
    Rational hi = p.constant();
    p.expect("]");
    if (hi < lo) p.fail("empty bound for " + what + " '" + name + "'");
    return std::pair{lo, hi};
  };

  while (!p.at_end()) {
    detail::Token kw = p.peek();
    if (p.accept("var")) {
      do {
        std::string name = p.ident();
        auto [lo, hi] = bound("variable", name);
        ha.vars.push_back({name, lo, hi});
        declared.insert(name);
      } while (p.accept(","));
      p.expect(";");
    } else if (p.accept("param")) {
      std::string name = p.ident();
      if (p.accept("=")) {
        Rational v = p.constant();
        ha.params.push_back({name, v, v, true});
      } else {
        auto [lo, hi] = bound("parameter", name);
        ha.params.push_back({name, lo, hi, false});
      }
      declared.insert(name);
      p.expect(";");
    } else if (p.accept("define")) {
      std::string name = p.ident();
      p.expect("=");
      defines[name] = p.term();
      p.expect(";");
    } else if (p.accept("mode")) {
      Mode m;
      m.id = p.integer();
      if (ha.find_mode(m.id)) p.fail_at(kw, "duplicate mode id " + std::to_string(m.id));
      p.expect("{");
      std::vector<Formula> inv;
      while (!p.accept("}")) {
        if (p.at_end()) p.fail("unterminated mode block");
        if (p.accept("inv")) {
          p.expect(":");
          inv.push_back(p.formula());
          p.expect(";");
        } else if (p.is("d") && p.is("/", 1)) {
          p.expect("d");
          p.expect("/");
          p.expect("dt");
          p.expect("[");
          detail::Token vt = p.peek();
          std::string v = p.ident();
          if (!declared.count(v))
            throw UnknownIdentifierError("unknown variable '" + v + "'", vt.line, vt.col);
          p.expect("]");
          p.expect("=");
          if (m.flow.count(v)) p.fail_at(vt, "second d/dt[" + v + "] in mode " + std::to_string(m.id));
          m.flow.emplace(v, p.term());
          p.expect(";");
        } else {
          p.fail("expected 'inv:' or 'd/dt[...]'" + p.found());
        }
      }
      m.invariant = Formula::conj(std::move(inv));
      ha.modes.push_back(std::move(m));
    } else if (p.accept("jump")) {
      Jump j;
      j.from = mode_ref();
      p.expect("->");
      j.to = mode_ref();
      if (p.accept("when")) j.guard = p.formula();
      if (p.accept("reset")) {
        p.expect("{");
        while (!p.accept("}")) {
          detail::Token vt = p.peek();
          std::string v = p.ident();
          if (!declared.count(v))
            throw UnknownIdentifierError("unknown variable '" + v + "'", vt.line, vt.col);
          p.expect("'");
          p.expect("=");
          j.reset.emplace_back(v, p.term());
          p.expect(";");
        }
      }
      p.expect(";");
      ha.jumps.push_back(std::move(j));
    } else if (p.accept("init")) {
      InitCond init;
      p.expect("mode");
      init.mode = mode_ref();
      if (p.accept("with")) init.condition = p.formula();
      p.expect(";");
      ha.inits.push_back(std::move(init));
    } else {
      p.fail("expected a declaration (var, param, define, mode, jump, init)" + p.found());
    }
  }
  for (const auto& r : refs)
    if (!ha.find_mode(r.id))
      throw UnknownIdentifierError("undeclared mode " + std::to_string(r.id), r.where.line, r.where.col);
  return ha;
}

inline HybridAutomaton load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

/// Renders `ha` in the model grammar. Definitions are expanded.
inline std::string serialize(const HybridAutomaton& ha) {
  std::ostringstream os;
  for (const auto& v : ha.vars)
    os << "var " << v.name << " in [" << v.lo.to_string() << ", " << v.hi.to_string() << "];\n";
  for (const auto& p : ha.params) {
    if (p.fixed && p.is_point())
      os << "param " << p.name << " = " << p.lo.to_string() << ";\n";
    else
      os << "param " << p.name << " in [" << p.lo.to_string() << ", " << p.hi.to_string() << "];\n";
  }
  for (const auto& m : ha.modes) {
    os << "\nmode " << m.id << " {\n";
    if (!m.invariant.is_true()) os << "  inv: " << m.invariant.to_string() << ";\n";
    for (const auto& v : ha.vars)
      if (auto it = m.flow.find(v.name); it != m.flow.end())
        os << "  d/dt[" << v.name << "] = " << it->second.to_string() << ";\n";
    os << "}\n";
  }
  if (!ha.jumps.empty()) os << '\n';
  for (const auto& j : ha.jumps) {
    os << "jump " << j.from << " -> " << j.to;
    if (!j.guard.is_true()) os << " when " << j.guard.to_string();
    os << " reset {";
    for (const auto& [v, t] : j.reset) os << ' ' << v << "' = " << t.to_string() << ';';
    os << (j.reset.empty() ? "};\n" : " };\n");
  }
  if (!ha.inits.empty()) os << '\n';
  for (const auto& i : ha.inits) {
    os << "init mode " << i.mode;
    if (!i.condition.is_true()) os << " with " << i.condition.to_string();
    os << ";\n";
  }
  return os.str();
}

/// A reachability goal: an optional target mode and a condition on the state.
struct Goal {
  std::optional<int> mode;  // nullopt: any mode
  Formula condition = Formula::top();

  std::string to_string() const {
    std::string s = mode ? "mode=" + std::to_string(*mode) : "";
    if (!condition.is_true()) s += (s.empty() ? "" : " && ") + condition.to_string();
    return s.empty() ? "true" : s;
  }
};

/// Parses `mode=4`, `mode=7 && u>=1.18` or a bare state condition.
inline Goal parse_goal(std::string_view text, const HybridAutomaton& ha) {
  auto resolve = [&](const std::string& n) -> std::optional<Term> {
    if (ha.find_var(n) || ha.find_param(n) || n == kTimeVar) return Term::var(n);
    return std::nullopt;
  };
  detail::ExprParser p(detail::tokenize(text), resolve);
  Goal g;
  if (p.at_end()) p.fail("empty goal");
  if (p.is("mode") && (p.is("=", 1) || p.is("==", 1))) {
    detail::Token tk = p.peek(2);
    p.next();
    p.next();
    g.mode = p.integer();
    if (!ha.find_mode(*g.mode))
      throw UnknownIdentifierError("undeclared mode " + std::to_string(*g.mode), tk.line, tk.col);
    if (p.at_end()) return g;
    if (!p.accept("&&") && !p.accept("and")) p.fail("expected '&&'" + p.found());
  }
  g.condition = p.formula();
  if (!p.at_end()) p.fail("unexpected trailing input" + p.found());
  return g;
}

} // namespace hyreach
