// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "hyreach/ode.hpp"

namespace hyreach {

struct Sample {
  double t;
  std::vector<double> x;  // states then parameters
};

/// Adaptive Dormand-Prince 5(4) integration of `f` from the point `z0`
/// (states then parameters) over [0, horizon]. Returns the state at
/// `horizon`; `every > 0` records samples at that spacing (plus the ends).
inline std::vector<double> simulate(const VectorField& f, std::vector<double> z0, double horizon, double tol = 1e-10,
                                    double every = 0.0, std::vector<Sample>* samples = nullptr) {
  const std::size_t n = f.dim(), m = f.size();
  if (z0.size() != m) throw ShapeError("initial point does not match the vector field");
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2;
  (void)c3;
  (void)c4;
  (void)c5;
  if (!(horizon >= 0.0)) throw ArgumentError("horizon must be non-negative");
  std::vector<double> x = std::move(z0), tmp(m), y(m);
  std::array<std::vector<double>, 7> k;
  for (auto& v : k) v.assign(n, 0.0);
  auto rhs = [&](const std::vector<double>& z, std::vector<double>& out) { f.eval_point(z, out); };
  double t = 0.0;
  double h = std::min(horizon, 1e-3);
  double next_sample = 0.0;
  auto record = [&](double at, const std::vector<double>& z) {
    if (samples) samples->push_back({at, z});
  };
  if (samples && every > 0) {
    record(0.0, x);
    next_sample = every;
  }
  rhs(x, k[0]);
  while (t < horizon) {
    h = std::min(h, horizon - t);
    auto stage = [&](std::initializer_list<std::pair<int, double>> terms, std::vector<double>& out) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (auto [j, a] : terms) s += a * k[j][i];
        tmp[i] = x[i] + h * s;
      }
      for (std::size_t j = n; j < m; ++j) tmp[j] = x[j];
      rhs(tmp, out);
    };
    stage({{0, a21}}, k[1]);
    stage({{0, a31}, {1, a32}}, k[2]);
    stage({{0, a41}, {1, a42}, {2, a43}}, k[3]);
    stage({{0, a51}, {1, a52}, {2, a53}, {3, a54}}, k[4]);
    stage({{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}}, k[5]);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * (b1 * k[0][i] + b3 * k[2][i] + b4 * k[3][i] + b5 * k[4][i] + b6 * k[5][i]);
    for (std::size_t j = n; j < m; ++j) y[j] = x[j];
    rhs(y, k[6]);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
      double sc = tol + tol * std::max(std::fabs(x[i]), std::fabs(y[i]));
      err = std::max(err, std::fabs(e) / sc);
    }
    if (!std::isfinite(err)) throw DomainError("simulation diverged");
    if (err <= 1.0) {
      // Dense output by cubic Hermite interpolation for samples in the step.
      while (samples && every > 0 && next_sample < t + h && next_sample < horizon) {
        double th = (next_sample - t) / h;
        std::vector<double> z(m);
        for (std::size_t i = 0; i < n; ++i) {
          double h00 = 2 * th * th * th - 3 * th * th + 1, h10 = th * th * th - 2 * th * th + th;
          double h01 = -2 * th * th * th + 3 * th * th, h11 = th * th * th - th * th;
          z[i] = h00 * x[i] + h10 * h * k[0][i] + h01 * y[i] + h11 * h * k[6][i];
        }
        for (std::size_t j = n; j < m; ++j) z[j] = x[j];
        record(next_sample, z);
        next_sample += every;
      }
      t = (horizon - t <= h) ? horizon : t + h;
      x = y;
      k[0] = k[6];
    }
    double factor = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (t < horizon && h < 1e-15 * std::max(1.0, horizon) && horizon - t > 1e-15 * std::max(1.0, horizon))
      throw StepUnderflowError("simulation step underflow");
    h = std::max(h, 1e-15 * std::max(1.0, horizon));
  }
  if (samples && every > 0) record(horizon, x);
  return x;
}

} // namespace hyreach
