#pragma once

// Small closed-form inverse problems for the objective and solver tests:
// observations sampled straight from smooth v, p on the inverse grid.

#include <cmath>
#include <numbers>
#include <random>

#include "mfgcvx/carleman.hpp"
#include "mfgcvx/forward.hpp"
#include "mfgcvx/inverse.hpp"
#include "mfgcvx/objective.hpp"

namespace mfgcvx::testing {

struct SmallProblem {
  SpaceTimeGrid grid;
  ObservationData obs;
  DataDerivatives der;
  Field s, s_t, r;

  ObjectiveContext context(double lambda, double beta, ObjectiveTerms terms = {}) const {
    return ObjectiveContext(obs, der, s, s_t, r, GaussianDelta{},
                            CarlemanParams::from_alpha(lambda, 0.2, grid.b, grid.final_time), beta,
                            terms);
  }
  ConstraintData constraints(NeumannVariant v = NeumannVariant::standard) const {
    return ConstraintData::from(der, v);
  }
};

inline SmallProblem small_problem(std::size_t n1, std::size_t n2, std::size_t nt) {
  SmallProblem sp;
  sp.grid = SpaceTimeGrid::make(1, 2, 0.5, 1, n1, n2, nt);
  const auto& g = sp.grid;
  constexpr double pi = std::numbers::pi;
  const Field v = sample_space_time(g, [](double x1, double x2, double t) {
    return 0.1 * std::cos(pi * x1) * std::sin(pi * x2) * (t * t + 1.0);
  });
  const Field p = sample_space_time(
      g, [](double x1, double x2, double t) { return (t + 1.0) * (x1 * x2 + 2.0); });
  sp.obs = extract_observations(p, v, g);
  sp.der = stencil_derivatives(sp.obs);
  sp.s = sample_space_time(
      g, [](double x1, double x2, double t) { return 0.3 * std::sin(x1 + t) * std::cos(x2); });
  sp.s_t = ddt(sp.s);
  sp.r = Field(g, Rank::spatial, 1.0);
  return sp;
}

inline void fill_uniform(Field& f, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : f.values()) v = u(rng);
}

inline Iterate random_iterate(const SpaceTimeGrid& g, std::mt19937_64& rng, double scale = 1.0) {
  Iterate z = Iterate::zeros(g);
  fill_uniform(z.u, rng, scale);
  fill_uniform(z.m, rng, scale);
  return z;
}

/// Relative error of the analytic directional derivative <grad J, w> against
/// the central difference (J(z + eps w) - J(z - eps w)) / (2 eps).
inline double directional_error(const ObjectiveContext& ctx, const Iterate& z, const Iterate& w,
                                double eps = 1e-5) {
  Iterate zp = z, zm = z;
  zp.axpy(eps, w);
  zm.axpy(-eps, w);
  const double fd = (ctx.value(zp) - ctx.value(zm)) / (2.0 * eps);
  const double ad = dot(ctx.gradient(z), w);
  return std::abs(fd - ad) / std::max(std::abs(ad), std::abs(fd));
}

}  // namespace mfgcvx::testing
