#pragma once

// Multiplicative observation noise d -> d (1 + delta zeta), zeta ~ U[0,1],
// and natural cubic splines for differentiating the noisy data.
//
// zeta for sample k of field id is a pure function of (seed, id, k), so the
// noise does not depend on the order in which fields are visited.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mfgcvx/forward.hpp"
#include "mfgcvx/grid.hpp"

namespace mfgcvx {

struct NoiseSpec {
  double delta = 0.0;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Uniform [0,1) variate for sample `index` of stream `stream`.
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t key = detail::splitmix64(seed ^ detail::splitmix64(stream + 0x632be59bd9b4e019ULL));
  const std::uint64_t bits = detail::splitmix64(key ^ detail::splitmix64(index));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

enum class NoiseStream : std::uint64_t { v0 = 1, p0, g01, g02, g11, g12 };

inline Field perturb(const Field& f, const NoiseSpec& spec, NoiseStream stream) {
  require(spec.delta >= 0.0, "inject: delta must be non-negative");
  Field out = f;
  if (spec.delta == 0.0) return out;
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] *= 1.0 + spec.delta * counter_uniform(spec.seed, static_cast<std::uint64_t>(stream), k);
  return out;
}

/// Perturbs v0, p0 and the four traces; the stored time derivatives of the
/// traces are recomputed from the perturbed traces by grid stencils.
inline ObservationData inject(const ObservationData& obs, const NoiseSpec& spec) {
  ObservationData out;
  out.v0 = perturb(obs.v0, spec, NoiseStream::v0);
  out.p0 = perturb(obs.p0, spec, NoiseStream::p0);
  out.g01 = perturb(obs.g01, spec, NoiseStream::g01);
  out.g02 = perturb(obs.g02, spec, NoiseStream::g02);
  out.g11 = perturb(obs.g11, spec, NoiseStream::g11);
  out.g12 = perturb(obs.g12, spec, NoiseStream::g12);
  if (spec.delta == 0.0) {
    out.dt_g01 = obs.dt_g01;
    out.dt_g02 = obs.dt_g02;
    out.dt_g11 = obs.dt_g11;
    out.dt_g12 = obs.dt_g12;
  } else {
    out.dt_g01 = trace_ddt(out.g01);
    out.dt_g02 = trace_ddt(out.g02);
    out.dt_g11 = trace_ddt(out.g11);
    out.dt_g12 = trace_ddt(out.g12);
  }
  return out;
}

/// Natural cubic interpolant on uniform knots x0 + k h.
class CubicSpline1D {
 public:
  CubicSpline1D(double x0, double h, std::vector<double> values)
      : x0_(x0), h_(h), y_(std::move(values)) {
    require(y_.size() >= 3, "spline_fit: need at least 3 knots");
    require(h > 0.0 && std::isfinite(h), "spline_fit: knots must be distinct");
    solve_moments();
  }

  std::size_t knots() const { return y_.size(); }
  double x0() const { return x0_; }
  double step() const { return h_; }
  double x_end() const { return x0_ + h_ * static_cast<double>(y_.size() - 1); }
  const std::vector<double>& values() const { return y_; }
  /// Second derivatives at the knots; zero at both ends.
  const std::vector<double>& moments() const { return mo_; }

  double operator()(double x) const { return eval(x, 0); }
  double derivative(double x, int order) const {
    require(order == 1 || order == 2, "spline_derivative: order must be 1 or 2");
    return eval(x, order);
  }

 private:
  void solve_moments() {
    // M_{k-1} + 4 M_k + M_{k+1} = 6 (y_{k-1} - 2 y_k + y_{k+1}) / h^2, M_0 = M_n = 0
    const std::size_t n = y_.size();
    mo_.assign(n, 0.0);
    if (n == 3) {
      mo_[1] = 1.5 * (y_[0] - 2 * y_[1] + y_[2]) / (h_ * h_);
      return;
    }
    const std::size_t m = n - 2;
    std::vector<double> c(m), d(m);
    for (std::size_t k = 0; k < m; ++k)
      d[k] = 6.0 * (y_[k] - 2.0 * y_[k + 1] + y_[k + 2]) / (h_ * h_);
    // Thomas algorithm for the constant (1, 4, 1) tridiagonal system
    c[0] = 0.25;
    d[0] /= 4.0;
    for (std::size_t k = 1; k < m; ++k) {
      const double w = 4.0 - c[k - 1];
      c[k] = 1.0 / w;
      d[k] = (d[k] - d[k - 1]) / w;
    }
    mo_[m] = d[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) mo_[k + 1] = d[k] - c[k] * mo_[k + 2];
  }

  double eval(double x, int order) const {
    const double tol = 1e-12 * h_ * static_cast<double>(y_.size());
    if (x < x0_ - tol || x > x_end() + tol)
      throw ContractError("spline: query point outside the knot range");
    double pos = (x - x0_) / h_;
    std::size_t k = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
    if (k >= y_.size() - 1) k = y_.size() - 2;
    const double s = pos - static_cast<double>(k);  // in [0,1]
    const double a = 1.0 - s, h = h_;
    const double m0 = mo_[k], m1 = mo_[k + 1], y0 = y_[k], y1 = y_[k + 1];
    switch (order) {
      case 0:
        return a * y0 + s * y1 + h * h / 6.0 * ((a * a * a - a) * m0 + (s * s * s - s) * m1);
      case 1:
        return (y1 - y0) / h + h / 6.0 * ((1.0 - 3.0 * a * a) * m0 + (3.0 * s * s - 1.0) * m1);
      default:
        return a * m0 + s * m1;
    }
  }

  double x0_, h_;
  std::vector<double> y_, mo_;
};

inline CubicSpline1D spline_fit(double x0, double h, std::span<const double> values) {
  return CubicSpline1D(x0, h, std::vector<double>(values.begin(), values.end()));
}

inline std::vector<double> spline_derivative(const CubicSpline1D& sp, int order,
                                             std::span<const double> at) {
  std::vector<double> out;
  out.reserve(at.size());
  for (double x : at) out.push_back(sp.derivative(x, order));
  return out;
}

namespace detail {

// d/dt of every per-node time series in a boundary or gamma trace.
inline Field spline_trace_ddt(const Field& trace) {
  const auto& g = trace.grid();
  const std::size_t nt = g.nt, series = trace.size() / nt;
  Field out(g, trace.rank());
  for (std::size_t s = 0; s < series; ++s) {
    const CubicSpline1D sp = spline_fit(0.0, g.ht(), trace.values().subspan(s * nt, nt));
    for (std::size_t n = 0; n < nt; ++n) out[s * nt + n] = sp.derivative(g.t(n), 1);
  }
  return out;
}

}  // namespace detail

/// Spline-based derivatives of the observation data: v0 by splines along x1
/// on every x2 line and along x2 on every x1 line, traces by splines in t.
inline DataDerivatives smooth_observations(const ObservationData& obs) {
  const Field& v0 = obs.v0;
  const auto& g = v0.grid();
  DataDerivatives d;
  d.v0_x1 = Field(g, Rank::spatial);
  d.v0_x2 = Field(g, Rank::spatial);
  d.v0_lap = Field(g, Rank::spatial);
  std::vector<double> line;
  for (std::size_t j = 0; j < g.n2; ++j) {
    line.clear();
    for (std::size_t i = 0; i < g.n1; ++i) line.push_back(v0.at(i, j));
    const CubicSpline1D sp = spline_fit(g.a, g.h1(), line);
    for (std::size_t i = 0; i < g.n1; ++i) {
      d.v0_x1.at(i, j) = sp.derivative(g.x1(i), 1);
      d.v0_lap.at(i, j) += sp.derivative(g.x1(i), 2);
    }
  }
  for (std::size_t i = 0; i < g.n1; ++i) {
    line.clear();
    for (std::size_t j = 0; j < g.n2; ++j) line.push_back(v0.at(i, j));
    const CubicSpline1D sp = spline_fit(-g.half_width, g.h2(), line);
    for (std::size_t j = 0; j < g.n2; ++j) {
      d.v0_x2.at(i, j) = sp.derivative(g.x2(j), 1);
      d.v0_lap.at(i, j) += sp.derivative(g.x2(j), 2);
    }
  }
  d.dt_g01 = detail::spline_trace_ddt(obs.g01);
  d.dt_g02 = detail::spline_trace_ddt(obs.g02);
  d.dt_g11 = detail::spline_trace_ddt(obs.g11);
  d.dt_g12 = detail::spline_trace_ddt(obs.g12);
  return d;
}

}  // namespace mfgcvx
