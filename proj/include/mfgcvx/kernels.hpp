#pragma once

// The global-interaction integral operator f -> int_Omega K(x,y) f(y,t) dy
// (without the leading k(x) factor) for the two kernel families:
//
//   GaussianDelta:   K = delta(x1 - y1) * exp(-(x2 - y2)^2 / sigma^2)
//   HeavisideCutoff: K = H(y1 - x1) * Kbar2(x, y)
//
// The delta factor collapses the y1 integral analytically, so the Gaussian
// branch is a 1D trapezoid rule in y2 on each x1 line. sigma = +inf gives
// Kbar1 = 1.

#include <cmath>
#include <limits>
#include <variant>
#include <vector>

#include "mfgcvx/grid.hpp"

namespace mfgcvx {

struct GaussianDelta {
  double sigma = 0.2;
};

struct HeavisideCutoff {
  SpaceTimeGrid grid;          // grid the kernel was sampled on
  std::vector<double> kernel;  // Kbar2[(i,j), (i',j')], row-major, size (n1*n2)^2
  double eta = 0.25;           // cutoff width, 0 < eta < b - a
};

using KernelSpec = std::variant<GaussianDelta, HeavisideCutoff>;

inline void validate(const KernelSpec& spec, double a, double b) {
  if (const auto* g = std::get_if<GaussianDelta>(&spec)) {
    require(g->sigma > 0.0, "kernel: sigma must be positive");
  } else {
    const auto& h = std::get<HeavisideCutoff>(spec);
    require(h.eta > 0.0 && h.eta < b - a, "kernel: need 0 < eta < b - a");
    const std::size_t ns = h.grid.spatial_size();
    require(h.kernel.size() == ns * ns, "kernel: Kbar2 must be sampled on Omega x Omega");
  }
}

/// chi(x1): 1 on [a, b - eta), 0 on [b - eta, b].
inline double cutoff(double x1, double b, double eta) { return x1 < b - eta ? 1.0 : 0.0; }

class InteractionOperator {
 public:
  InteractionOperator(const SpaceTimeGrid& grid, KernelSpec spec)
      : grid_(grid), spec_(std::move(spec)) {
    validate(spec_, grid.a, grid.b);
    w2_ = trapezoid_weights(grid.n2, grid.h2());
    if (const auto* g = std::get_if<GaussianDelta>(&spec_)) {
      const std::size_t n2 = grid.n2;
      gauss_.assign(n2 * n2, 0.0);
      const double inv_s2 = std::isinf(g->sigma) ? 0.0 : 1.0 / (g->sigma * g->sigma);
      for (std::size_t j = 0; j < n2; ++j)
        for (std::size_t jj = 0; jj < n2; ++jj) {
          const double d = grid.x2(j) - grid.x2(jj);
          gauss_[j * n2 + jj] = w2_[jj] * std::exp(-d * d * inv_s2);
        }
    } else {
      const auto& h = std::get<HeavisideCutoff>(spec_);
      require(h.grid.n1 == grid.n1 && h.grid.n2 == grid.n2 && h.grid.a == grid.a &&
                  h.grid.b == grid.b && h.grid.half_width == grid.half_width,
              "kernel: Kbar2 grid does not match the field grid");
    }
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  const KernelSpec& spec() const { return spec_; }
  bool is_gaussian() const { return std::holds_alternative<GaussianDelta>(spec_); }

  Field apply(const Field& f) const { return run(f, false); }
  Field apply_transpose(const Field& r) const { return run(r, true); }

 private:
  // Trapezoid weight of node i' in the integral over [x1_i, b].
  double tail_weight(std::size_t i, std::size_t ii) const {
    const std::size_t last = grid_.n1 - 1;
    if (ii < i || i == last) return 0.0;
    const double h = grid_.h1();
    return (ii == i || ii == last) ? 0.5 * h : h;
  }

  Field run(const Field& f, bool transpose) const {
    require(f.rank() == Rank::spatial || f.rank() == Rank::space_time,
            "interaction_integral: need a spatial or space-time field");
    require(f.grid().n1 == grid_.n1 && f.grid().n2 == grid_.n2 && f.grid().a == grid_.a &&
                f.grid().b == grid_.b && f.grid().half_width == grid_.half_width,
            "interaction_integral: kernel grid mismatch");
    const auto& g = f.grid();
    const std::size_t n1 = g.n1, n2 = g.n2;
    const std::size_t nt = f.rank() == Rank::space_time ? g.nt : 1;
    Field out(g, f.rank());
    const double* in = f.values().data();
    double* o = out.values().data();
    if (is_gaussian()) {
      for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j)
          for (std::size_t jj = 0; jj < n2; ++jj) {
            const double w = gauss_[j * n2 + jj];
            const std::size_t row = (i * n2 + j) * nt, col = (i * n2 + jj) * nt;
            if (!transpose) {
              for (std::size_t n = 0; n < nt; ++n) o[row + n] += w * in[col + n];
            } else {
              for (std::size_t n = 0; n < nt; ++n) o[col + n] += w * in[row + n];
            }
          }
      return out;
    }
    const auto& kbar = std::get<HeavisideCutoff>(spec_).kernel;
    const std::size_t ns = n1 * n2;
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        for (std::size_t ii = i; ii < n1; ++ii) {
          const double w1 = tail_weight(i, ii);
          if (w1 == 0.0) continue;
          for (std::size_t jj = 0; jj < n2; ++jj) {
            const double w = w1 * w2_[jj] * kbar[(i * n2 + j) * ns + ii * n2 + jj];
            const std::size_t row = (i * n2 + j) * nt, col = (ii * n2 + jj) * nt;
            if (!transpose) {
              for (std::size_t n = 0; n < nt; ++n) o[row + n] += w * in[col + n];
            } else {
              for (std::size_t n = 0; n < nt; ++n) o[col + n] += w * in[row + n];
            }
          }
        }
    return out;
  }

  SpaceTimeGrid grid_;
  KernelSpec spec_;
  std::vector<double> w2_;
  std::vector<double> gauss_;  // trapezoid-weighted Kbar1 matrix in (x2, y2)
};

inline Field interaction_integral(const Field& f, const KernelSpec& kernel) {
  return InteractionOperator(f.grid(), kernel).apply(f);
}

struct Denominator {
  Field value;       // un-inverted denominator of f(x)
  double min_abs;    // min |value| over the nodes where it is inverted
};

/// Denominator of the recovery coefficient f(x). For the Heaviside kernel the
/// chi cutoff is applied and min_abs is taken where chi = 1 only.
inline Denominator denominator_field(const Field& p0, const KernelSpec& kernel) {
  require(p0.rank() == Rank::spatial, "denominator_field: need a spatial p0");
  Field d = interaction_integral(p0, kernel);
  const auto& g = p0.grid();
  double min_abs = std::numeric_limits<double>::infinity();
  const auto* cut = std::get_if<HeavisideCutoff>(&kernel);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      if (cut && cutoff(g.x1(i), g.b, cut->eta) == 0.0) {
        d.at(i, j) = 0.0;
        continue;
      }
      min_abs = std::min(min_abs, std::abs(d.at(i, j)));
    }
  return {std::move(d), min_abs};
}

}  // namespace mfgcvx
