// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hyreach/bmc.hpp"
#include "hyreach/model.hpp"

namespace hyreach {

/// `name=[lo,hi]` or `name=value`.
struct Setting {
  std::string name;
  Rational lo, hi;
};

inline Setting parse_setting(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ArgumentError("expected name=value or name=[lo,hi], got '" + text + "'");
  Setting s;
  s.name = text.substr(0, eq);
  std::string rhs = text.substr(eq + 1);
  auto num = [&](std::string v) {
    while (!v.empty() && v.front() == ' ') v.erase(v.begin());
    while (!v.empty() && v.back() == ' ') v.pop_back();
    auto r = Rational::parse(v);
    if (!r) {
      char* end = nullptr;
      double d = std::strtod(v.c_str(), &end);
      if (v.empty() || *end != '\0' || !std::isfinite(d)) throw ArgumentError("bad number '" + v + "' in '" + text + "'");
      r = Rational::from_double(d);
    }
    return *r;
  };
  if (!rhs.empty() && rhs.front() == '[') {
    auto comma = rhs.find(',');
    if (rhs.back() != ']' || comma == std::string::npos) throw ArgumentError("bad range in '" + text + "'");
    s.lo = num(rhs.substr(1, comma - 1));
    s.hi = num(rhs.substr(comma + 1, rhs.size() - comma - 2));
  } else {
    s.lo = s.hi = num(rhs);
  }
  if (s.hi < s.lo) throw ArgumentError("empty range in '" + text + "'");
  return s;
}

/// Everything needed to build a ReachQuery from a command line.
struct QueryArgs {
  std::string model;
  std::string goal;
  int k = 3;
  double delta = 1e-4;
  double dwell = 10.0;
  std::vector<std::string> sets;
  std::uint64_t max_splits = 2'000'000;
  unsigned workers = 1;
};

/// Default solver precision: HYREACH_DELTA if set, else 1e-4.
inline double default_delta() {
  if (const char* e = std::getenv("HYREACH_DELTA")) {
    char* end = nullptr;
    double d = std::strtod(e, &end);
    if (*e != '\0' && *end == '\0' && d > 0 && std::isfinite(d)) return d;
  }
  return 1e-4;
}

inline ReachQuery build_query(const QueryArgs& a) {
  ReachQuery q;
  q.automaton = load_model(a.model);
  for (const auto& s : a.sets) {
    Setting st = parse_setting(s);
    q.automaton.set(st.name, st.lo, st.hi);
  }
  q.goal = parse_goal(a.goal, q.automaton);
  if (a.k < 0) throw ArgumentError("k must be non-negative");
  if (!(a.delta > 0)) throw ArgumentError("delta must be positive");
  if (!(a.dwell > 0)) throw ArgumentError("dwell bound must be positive");
  q.k_max = a.k;
  q.dwell_bound = a.dwell;
  q.solver.delta = a.delta;
  q.solver.max_splits = a.max_splits;
  q.solver.workers = std::max(1u, a.workers);
  return q;
}

/// Splits a command line on blanks; double quotes group words.
inline std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, any = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      any = true;
    } else if (!quoted && (c == ' ' || c == '\t')) {
      if (any) out.push_back(cur);
      cur.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (quoted) throw ArgumentError("unterminated quote");
  if (any) out.push_back(cur);
  return out;
}

struct BenchmarkCase {
  std::string name;
  std::string tag;  // fast | long
  VerdictKind expect = VerdictKind::Unsat;
  double budget = 120.0;  // seconds
  QueryArgs args;
  std::string invocation;
};

inline VerdictKind parse_verdict(const std::string& s) {
  if (s == "unsat") return VerdictKind::Unsat;
  if (s == "delta-sat") return VerdictKind::DeltaSat;
  if (s == "budget-exceeded") return VerdictKind::BudgetExceeded;
  throw ArgumentError("unknown verdict '" + s + "'");
}

/// Reads `check` invocation words into `a`.
inline void parse_check_words(const std::vector<std::string>& w, std::size_t from, QueryArgs& a) {
  auto need = [&](std::size_t i) -> const std::string& {
    if (i >= w.size()) throw ArgumentError("missing value after " + w[i - 1]);
    return w[i];
  };
  for (std::size_t i = from; i < w.size(); ++i) {
    const std::string& o = w[i];
    if (o == "--goal") a.goal = need(++i);
    else if (o == "-k") a.k = std::stoi(need(++i));
    else if (o == "--delta") a.delta = std::stod(need(++i));
    else if (o == "--dwell") a.dwell = std::stod(need(++i));
    else if (o == "--set") a.sets.push_back(need(++i));
    else if (o == "--max-splits") a.max_splits = std::stoull(need(++i));
    else if (a.model.empty() && o.rfind("-", 0) != 0) a.model = o;
    else throw ArgumentError("unknown option '" + o + "'");
  }
  if (a.model.empty()) throw ArgumentError("missing model file");
}

/// Manifest lines: `name tag expect budget check <model> <options...>`.
/// Model paths are relative to the manifest. `#` starts a comment.
inline std::vector<BenchmarkCase> load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open suite '" + path + "'");
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<BenchmarkCase> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto w = split_words(line);
    if (w.empty()) continue;
    try {
      if (w.size() < 6 || w[4] != "check") throw ArgumentError("expected: name tag expect budget check <model> ...");
      BenchmarkCase c;
      c.name = w[0];
      c.tag = w[1];
      if (c.tag != "fast" && c.tag != "long") throw ArgumentError("tag must be fast or long");
      c.expect = parse_verdict(w[2]);
      c.budget = std::stod(w[3]);
      parse_check_words(w, 5, c.args);
      c.args.model = (dir / c.args.model).string();
      for (std::size_t i = 4; i < w.size(); ++i) c.invocation += (i > 4 ? " " : "") + w[i];
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno, 1);
    }
  }
  return out;
}

struct SuiteEntry {
  std::string name;
  VerdictKind expect = VerdictKind::Unsat, got = VerdictKind::BudgetExceeded;
  double seconds = 0.0;
  std::size_t vars = 0;
  bool pass = false;
  std::string note;
};

/// Runs every case whose tag matches `tag` (all when empty), `jobs` cases at
/// a time. Each case uses one solver worker. Entries keep manifest order.
inline std::vector<SuiteEntry> run_suite(const std::vector<BenchmarkCase>& cases, const std::string& tag = "fast",
                                         unsigned jobs = 1,
                                         const std::function<void(const SuiteEntry&)>& on_done = {}) {
  std::vector<const BenchmarkCase*> todo;
  for (const auto& c : cases)
    if (tag.empty() || c.tag == tag) todo.push_back(&c);
  std::vector<SuiteEntry> out(todo.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < todo.size();) {
      const BenchmarkCase& c = *todo[i];
      SuiteEntry e;
      e.name = c.name;
      e.expect = c.expect;
      try {
        QueryArgs a = c.args;
        a.workers = 1;
        ReachResult r = check_reach(build_query(a));
        e.got = r.kind;
        e.seconds = r.seconds;
        e.vars = r.var_count;
        e.pass = r.kind == c.expect && r.seconds <= c.budget;
        if (r.kind != c.expect) e.note = "verdict differs";
        else if (r.seconds > c.budget) e.note = "over budget";
      } catch (const std::exception& ex) {
        e.note = ex.what();
      }
      std::lock_guard lk(mu);
      if (on_done) on_done(e);
      out[i] = std::move(e);
    }
  };
  jobs = std::clamp<unsigned>(jobs, 1, static_cast<unsigned>(std::max<std::size_t>(1, todo.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

inline std::string format_entry(const SuiteEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-4s expect=%s got=%s vars=%zu time=%.3gs%s%s", e.name.c_str(),
                e.pass ? "PASS" : "FAIL", to_string(e.expect), to_string(e.got), e.vars, e.seconds,
                e.note.empty() ? "" : " ", e.note.c_str());
  return buf;
}

} // namespace hyreach
