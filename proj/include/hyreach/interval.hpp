// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "hyreach/error.hpp"

namespace hyreach {

namespace rounding {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// One ulp toward -inf. Basic IEEE operations are correctly rounded, so one
/// step outward from the round-to-nearest result encloses the exact value.
inline double down(double x) noexcept {
  return std::isinf(x) ? x : std::nextafter(x, -kInf);
}
inline double up(double x) noexcept {
  return std::isinf(x) ? x : std::nextafter(x, kInf);
}

/// libm transcendentals are not correctly rounded; glibc documents errors of
/// a few ulp, so they get a wider margin.
inline constexpr int kLibmUlps = 4;

inline double down_libm(double x) noexcept {
  for (int i = 0; i < kLibmUlps; ++i) x = down(x);
  return x;
}
inline double up_libm(double x) noexcept {
  for (int i = 0; i < kLibmUlps; ++i) x = up(x);
  return x;
}

/// Directed-rounding primitives. The round-to-nearest result is kept when the
/// error-free transformation shows it is exact or already on the right side.
inline double add_down(double a, double b) noexcept {
  double s = a + b;
  if (!std::isfinite(s)) {
    if (std::isnan(s)) return -kInf;
    return (s > 0 && std::isfinite(a) && std::isfinite(b)) ? std::numeric_limits<double>::max() : s;
  }
  double bb = s - a;
  double e = (a - (s - bb)) + (b - bb);
  return e < 0 ? down(s) : s;
}
inline double add_up(double a, double b) noexcept {
  double s = a + b;
  if (!std::isfinite(s)) {
    if (std::isnan(s)) return kInf;
    return (s < 0 && std::isfinite(a) && std::isfinite(b)) ? std::numeric_limits<double>::lowest() : s;
  }
  double bb = s - a;
  double e = (a - (s - bb)) + (b - bb);
  return e > 0 ? up(s) : s;
}
inline double mul_down(double a, double b) noexcept {
  if (a == 0.0 || b == 0.0) return 0.0;
  double p = a * b;
  if (!std::isfinite(p) || std::fabs(p) < 1e-290) return down(p);
  return std::fma(a, b, -p) < 0 ? down(p) : p;
}
inline double mul_up(double a, double b) noexcept {
  if (a == 0.0 || b == 0.0) return 0.0;
  double p = a * b;
  if (!std::isfinite(p) || std::fabs(p) < 1e-290) return up(p);
  return std::fma(a, b, -p) > 0 ? up(p) : p;
}
/// a / b for b != 0.
inline double div_down(double a, double b) noexcept {
  double q = a / b;
  if (!std::isfinite(q) || q == 0.0 || std::fabs(q) < 1e-290 || std::isinf(b)) return down(q);
  double r = std::fma(-q, b, a);  // a - q*b, exact
  if (r == 0.0) return q;
  return ((r > 0) == (b > 0)) ? q : down(q);
}
inline double div_up(double a, double b) noexcept {
  double q = a / b;
  if (!std::isfinite(q) || q == 0.0 || std::fabs(q) < 1e-290 || std::isinf(b)) return up(q);
  double r = std::fma(-q, b, a);
  if (r == 0.0) return q;
  return ((r > 0) == (b > 0)) ? up(q) : q;
}

} // namespace rounding

/// A closed real interval [lo, hi] with extended-real endpoints.
///
/// The empty set is a distinct state (`is_empty()`), never an inverted pair,
/// so `lo() <= hi()` holds for every non-empty value. All arithmetic rounds
/// the lower endpoint toward -inf and the upper toward +inf, so the exact
/// real result set is always contained in the returned interval.
class Interval {
public:
  constexpr Interval() noexcept : lo_(0.0), hi_(0.0), empty_(false) {}
  constexpr Interval(double point) noexcept : lo_(point), hi_(point), empty_(false) {} // NOLINT
  Interval(double lo, double hi) : lo_(lo), hi_(hi), empty_(false) {
    if (std::isnan(lo) || std::isnan(hi) || lo > hi) throw ArgumentError("invalid interval bounds");
  }

  static constexpr Interval empty() noexcept {
    Interval r;
    r.empty_ = true;
    return r;
  }
  static Interval entire() noexcept { return unchecked(-rounding::kInf, rounding::kInf); }

  /// Builds [lo, hi] without validation; callers guarantee lo <= hi.
  static constexpr Interval unchecked(double lo, double hi) noexcept {
    Interval r;
    r.lo_ = lo;
    r.hi_ = hi;
    return r;
  }

  constexpr bool is_empty() const noexcept { return empty_; }
  constexpr double lo() const noexcept { return lo_; }
  constexpr double hi() const noexcept { return hi_; }

  double width() const noexcept {
    if (empty_) return 0.0;
    if (std::isinf(lo_) || std::isinf(hi_)) return rounding::kInf;
    return rounding::add_up(hi_, -lo_);
  }

  /// A finite point of the interval near its centre.
  double mid() const noexcept {
    if (empty_) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(lo_) && std::isinf(hi_)) return 0.0;
    if (std::isinf(lo_)) return hi_ <= 0 ? 2 * hi_ - 1 : 0.0;
    if (std::isinf(hi_)) return lo_ >= 0 ? 2 * lo_ + 1 : 0.0;
    double m = 0.5 * lo_ + 0.5 * hi_;
    return std::clamp(m, lo_, hi_);
  }

  /// max |x| over the interval.
  double mag() const noexcept { return empty_ ? 0.0 : std::max(std::fabs(lo_), std::fabs(hi_)); }

  bool is_point() const noexcept { return !empty_ && lo_ == hi_; }
  bool is_bounded() const noexcept { return !empty_ && std::isfinite(lo_) && std::isfinite(hi_); }

  bool contains(double x) const noexcept { return !empty_ && lo_ <= x && x <= hi_; }
  bool contains(const Interval& o) const noexcept {
    return o.empty_ || (!empty_ && lo_ <= o.lo_ && o.hi_ <= hi_);
  }
  bool interior_contains(double x) const noexcept { return !empty_ && lo_ < x && x < hi_; }

  friend bool operator==(const Interval& a, const Interval& b) noexcept {
    if (a.empty_ || b.empty_) return a.empty_ == b.empty_;
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

private:
  double lo_;
  double hi_;
  bool empty_;
};

inline std::ostream& operator<<(std::ostream& os, const Interval& x) {
  if (x.is_empty()) return os << "empty";
  return os << '[' << x.lo() << ", " << x.hi() << ']';
}

inline Interval hull(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty()) return b;
  if (b.is_empty()) return a;
  return Interval::unchecked(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

inline Interval intersect(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  double lo = std::max(a.lo(), b.lo());
  double hi = std::min(a.hi(), b.hi());
  if (lo > hi) return Interval::empty();
  return Interval::unchecked(lo, hi);
}

inline double width(const Interval& x) noexcept { return x.width(); }
inline double midpoint(const Interval& x) noexcept { return x.mid(); }

/// Encloses a real number known only to lie within [lo, hi] after rounding.
inline Interval widen_libm(double lo, double hi) noexcept {
  return Interval::unchecked(rounding::down_libm(lo), rounding::up_libm(hi));
}

// --- arithmetic ---------------------------------------------------------

inline Interval operator-(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  return Interval::unchecked(-x.hi(), -x.lo());
}

inline Interval operator+(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return Interval::unchecked(rounding::add_down(a.lo(), b.lo()), rounding::add_up(a.hi(), b.hi()));
}

inline Interval operator-(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return Interval::unchecked(rounding::add_down(a.lo(), -b.hi()), rounding::add_up(a.hi(), -b.lo()));
}

namespace detail {

// 0 * inf is taken as 0: an infinite endpoint stands for "unbounded", and
// multiplying the zero element by any finite member yields zero.
inline double mul_or_zero(double a, double b) noexcept {
  if (a == 0.0 || b == 0.0) return 0.0;
  return a * b;
}

} // namespace detail

inline Interval operator*(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  using rounding::mul_down, rounding::mul_up;
  double lo = std::min(std::min(mul_down(a.lo(), b.lo()), mul_down(a.lo(), b.hi())),
                       std::min(mul_down(a.hi(), b.lo()), mul_down(a.hi(), b.hi())));
  double hi = std::max(std::max(mul_up(a.lo(), b.lo()), mul_up(a.lo(), b.hi())),
                       std::max(mul_up(a.hi(), b.lo()), mul_up(a.hi(), b.hi())));
  return Interval::unchecked(lo, hi);
}

/// Extended division. A divisor that is exactly zero violates the domain; a
/// divisor straddling zero yields the hull of the valid part.
inline Interval operator/(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  if (b.lo() == 0.0 && b.hi() == 0.0) throw DomainError("division by the zero interval");
  constexpr double inf = rounding::kInf;
  if (b.lo() > 0.0 || b.hi() < 0.0) {
    if (!a.is_bounded() || !b.is_bounded()) {
      const double c[4] = {a.lo() / b.lo(), a.lo() / b.hi(), a.hi() / b.lo(), a.hi() / b.hi()};
      double mn = inf, mx = -inf;
      for (double v : c) {
        if (std::isnan(v)) return Interval::entire();
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      return Interval::unchecked(rounding::down(mn), rounding::up(mx));
    }
    using rounding::div_down, rounding::div_up;
    double lo = std::min(std::min(div_down(a.lo(), b.lo()), div_down(a.lo(), b.hi())),
                         std::min(div_down(a.hi(), b.lo()), div_down(a.hi(), b.hi())));
    double hi = std::max(std::max(div_up(a.lo(), b.lo()), div_up(a.lo(), b.hi())),
                         std::max(div_up(a.hi(), b.lo()), div_up(a.hi(), b.hi())));
    return Interval::unchecked(lo, hi);
  }
  if (a.lo() == 0.0 && a.hi() == 0.0) return Interval(0.0);
  if (b.lo() == 0.0) {  // b = [0, d], d > 0
    if (a.lo() >= 0.0) return Interval::unchecked(rounding::down(a.lo() / b.hi()), inf);
    if (a.hi() <= 0.0) return Interval::unchecked(-inf, rounding::up(a.hi() / b.hi()));
    return Interval::entire();
  }
  if (b.hi() == 0.0) {  // b = [c, 0], c < 0
    if (a.lo() >= 0.0) return Interval::unchecked(-inf, rounding::up(a.lo() / b.lo()));
    if (a.hi() <= 0.0) return Interval::unchecked(rounding::down(a.hi() / b.lo()), inf);
    return Interval::entire();
  }
  return Interval::entire();
}

inline Interval& operator+=(Interval& a, const Interval& b) noexcept { return a = a + b; }
inline Interval& operator-=(Interval& a, const Interval& b) noexcept { return a = a - b; }
inline Interval& operator*=(Interval& a, const Interval& b) noexcept { return a = a * b; }

// --- elementary functions ---------------------------------------------

inline Interval sqr(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  double lo = std::fabs(x.lo()) < std::fabs(x.hi()) ? x.lo() : x.hi();
  double hi = std::fabs(x.lo()) < std::fabs(x.hi()) ? x.hi() : x.lo();
  double h = rounding::mul_up(hi, hi);
  if (x.contains(0.0)) return Interval::unchecked(0.0, h);
  return Interval::unchecked(std::max(0.0, rounding::mul_down(lo, lo)), h);
}

/// Integer power by repeated outward-rounded multiplication of magnitudes.
inline Interval pow_int(const Interval& x, long n) {
  if (x.is_empty()) return x;
  if (n == 0) return Interval(1.0);
  if (n < 0) return Interval(1.0) / pow_int(x, -n);
  if (n == 1) return x;
  if (n == 2) return sqr(x);
  auto mag_pow = [n](double v, bool upward) {
    double r = 1.0;
    for (long i = 0; i < n; ++i) r = upward ? rounding::up(r * v) : rounding::down(r * v);
    return r;
  };
  double alo = std::fabs(x.lo()), ahi = std::fabs(x.hi());
  if (n % 2 == 1) {
    double lo = x.lo() >= 0 ? mag_pow(alo, false) : -mag_pow(alo, true);
    double hi = x.hi() >= 0 ? mag_pow(ahi, true) : -mag_pow(ahi, false);
    return Interval::unchecked(lo, hi);
  }
  double mn = x.contains(0.0) ? 0.0 : std::min(alo, ahi);
  double mx = std::max(alo, ahi);
  return Interval::unchecked(mag_pow(mn, false), mag_pow(mx, true));
}

inline Interval exp(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  double lo = std::exp(x.lo()), hi = std::exp(x.hi());
  return Interval::unchecked(std::max(0.0, rounding::down_libm(lo)), rounding::up_libm(hi));
}

/// Natural log over the positive part of x.
inline Interval log(const Interval& x) {
  if (x.is_empty()) return x;
  if (x.hi() <= 0.0) throw DomainError("log of a non-positive interval");
  double lo = x.lo() <= 0.0 ? -rounding::kInf : rounding::down_libm(std::log(x.lo()));
  return Interval::unchecked(lo, rounding::up_libm(std::log(x.hi())));
}

inline Interval sqrt(const Interval& x) {
  if (x.is_empty()) return x;
  if (x.hi() < 0.0) throw DomainError("sqrt of a negative interval");
  double lo = x.lo() <= 0.0 ? 0.0 : std::max(0.0, rounding::down(std::sqrt(x.lo())));
  return Interval::unchecked(lo, rounding::up(std::sqrt(x.hi())));
}

inline Interval tanh(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  double lo = std::max(-1.0, rounding::down_libm(std::tanh(x.lo())));
  double hi = std::min(1.0, rounding::up_libm(std::tanh(x.hi())));
  return Interval::unchecked(lo, hi);
}

namespace detail {

/// True if some k makes offset + k*period land in [lo, hi]. Errs toward true,
/// which only loosens the enclosure.
inline bool may_contain_periodic(double lo, double hi, double offset, double period) noexcept {
  const double slack = 1e-12;
  double a = (lo - offset) / period;
  double b = (hi - offset) / period;
  return std::ceil(a - slack) <= std::floor(b + slack);
}

} // namespace detail

/// sin enclosed segment-wise: the extremes are attained either at the
/// endpoints or at the crests/troughs contained in the interval.
inline Interval sin(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  constexpr double pi = std::numbers::pi;
  if (!x.is_bounded() || x.width() >= 2 * pi) return Interval::unchecked(-1.0, 1.0);
  double a = std::sin(x.lo()), b = std::sin(x.hi());
  double lo = rounding::down_libm(std::min(a, b));
  double hi = rounding::up_libm(std::max(a, b));
  if (detail::may_contain_periodic(x.lo(), x.hi(), pi / 2, 2 * pi)) hi = 1.0;
  if (detail::may_contain_periodic(x.lo(), x.hi(), -pi / 2, 2 * pi)) lo = -1.0;
  return Interval::unchecked(std::max(-1.0, lo), std::min(1.0, hi));
}

inline Interval cos(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  constexpr double pi = std::numbers::pi;
  if (!x.is_bounded() || x.width() >= 2 * pi) return Interval::unchecked(-1.0, 1.0);
  double a = std::cos(x.lo()), b = std::cos(x.hi());
  double lo = rounding::down_libm(std::min(a, b));
  double hi = rounding::up_libm(std::max(a, b));
  if (detail::may_contain_periodic(x.lo(), x.hi(), 0.0, 2 * pi)) hi = 1.0;
  if (detail::may_contain_periodic(x.lo(), x.hi(), pi, 2 * pi)) lo = -1.0;
  return Interval::unchecked(std::max(-1.0, lo), std::min(1.0, hi));
}

inline Interval abs(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  if (x.lo() >= 0) return x;
  if (x.hi() <= 0) return -x;
  return Interval::unchecked(0.0, std::max(-x.lo(), x.hi()));
}

inline Interval min(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return Interval::unchecked(std::min(a.lo(), b.lo()), std::min(a.hi(), b.hi()));
}

inline Interval max(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return Interval::unchecked(std::max(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

/// sign(x), with sign(0) spanning [-1, 1] (generalised derivative of |x|).
inline Interval sign(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  if (x.lo() > 0) return Interval(1.0);
  if (x.hi() < 0) return Interval(-1.0);
  return Interval::unchecked(-1.0, 1.0);
}

/// Heaviside step with step(0) spanning [0, 1].
inline Interval step(const Interval& x) noexcept {
  if (x.is_empty()) return x;
  if (x.lo() > 0) return Interval(1.0);
  if (x.hi() < 0) return Interval(0.0);
  return Interval::unchecked(0.0, 1.0);
}

/// x^y for a real exponent, computed as exp(y log x) over x > 0. Integer
/// exponents are routed to `pow_int`, which also accepts negative bases.
inline Interval pow(const Interval& x, const Interval& y) {
  if (x.is_empty() || y.is_empty()) return Interval::empty();
  if (y.is_point() && std::nearbyint(y.lo()) == y.lo() && std::fabs(y.lo()) < 1e9)
    return pow_int(x, static_cast<long>(y.lo()));
  if (x.hi() < 0.0) throw DomainError("real power of a negative interval");
  Interval base = intersect(x, Interval::unchecked(0.0, rounding::kInf));
  if (base.lo() == 0.0) {
    // 0^y = 0 for y > 0; the positive part is handled by exp/log.
    if (base.hi() == 0.0) return Interval(0.0);
    Interval pos = exp(y * log(base));
    return hull(pos, Interval(0.0));
  }
  return exp(y * log(base));
}

} // namespace hyreach
