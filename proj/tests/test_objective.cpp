#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fixture.hpp"
#include "mfgcvx/objective.hpp"

using namespace mfgcvx;
using namespace mfgcvx::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Observations with v = 0 and p = 1 everywhere, s = s_t = 0.
SmallProblem quiet_problem(std::size_t n1, std::size_t n2, std::size_t nt) {
  SmallProblem sp;
  sp.grid = SpaceTimeGrid::make(1, 2, 0.5, 1, n1, n2, nt);
  const Field v(sp.grid, Rank::space_time), p(sp.grid, Rank::space_time, 1.0);
  sp.obs = extract_observations(p, v, sp.grid);
  sp.der = stencil_derivatives(sp.obs);
  sp.s = Field(sp.grid, Rank::space_time);
  sp.s_t = Field(sp.grid, Rank::space_time);
  sp.r = Field(sp.grid, Rank::spatial, 1.0);
  return sp;
}

double max_abs_field(const Field& f) { return max_abs(f.values()); }

}  // namespace

TEST(Objective, ComputeFConstantMode) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 6, 11, 3);
  for (double c : {1.0, 2.0}) {
    const Field f = compute_f(Field(g, Rank::spatial, c), GaussianDelta{kInf});
    for (double v : f.values()) EXPECT_NEAR(v, 1.0 / c, 1e-14);
  }
}

TEST(Objective, ComputeFMatchesQuadratureOracle) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 3, 1281, 3);
  auto p0 = [](double x1, double x2) { return 1.5 * (x1 * x2 + 2.0); };
  const Field f = compute_f(sample_spatial(g, p0), GaussianDelta{0.2});
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; j += 80) {
      auto fn = [&](double y) {
        const double d = g.x2(j) - y;
        return std::exp(-d * d / 0.04) * p0(g.x1(i), y);
      };
      const double ref =
          1.0 / boost::math::quadrature::gauss_kronrod<double, 61>::integrate(fn, -0.5, 0.5, 15, 1e-14);
      EXPECT_NEAR(f.at(i, j), ref, 1e-6 * std::abs(ref));
    }
}

TEST(Objective, ComputeFRejectsVanishingDenominator) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 5, 11, 3);
  const Field p0 = sample_spatial(g, [](double x1, double x2) { return x1 * x2; });
  EXPECT_THROW(compute_f(p0, GaussianDelta{}), NumericalError);
}

TEST(Objective, ComputeFExamples) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 6, 6, 3);
  const Field f(g, Rank::spatial, 0.7), p0(g, Rank::spatial, 1.0), r(g, Rank::spatial, 1.0);
  const Field s(g, Rank::space_time);
  const Field F0 = compute_F(Field(g, Rank::spatial), p0, r, s, f);
  for (double v : F0.values()) EXPECT_EQ(v, 0.0);
  const Field x1 = sample_spatial(g, [](double a, double) { return a; });
  const Field F1 = compute_F(x1, p0, r, s, f);
  for (double v : F1.values()) EXPECT_NEAR(v, -0.35, 1e-12);
}

TEST(Objective, ComputeFAgainstSymbolicDerivatives) {
  // stencil F converges to the closed-form value at second order
  constexpr double pi = std::numbers::pi;
  auto err = [&](std::size_t n) {
    const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, n, n, 3);
    auto v0 = [](double x1, double x2) { return 0.125 * std::cos(pi * x1) * std::sin(pi * x2); };
    const Field f(g, Rank::spatial, 1.0), p0(g, Rank::spatial, 2.0), r(g, Rank::spatial, 1.0);
    const Field s = sample_space_time(g, [](double x1, double x2, double) { return x1 + x2; });
    const Field F = compute_F(sample_spatial(g, v0), p0, r, s, f);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x1 = g.x1(i), x2 = g.x2(j);
        const double lap = -2 * pi * pi * v0(x1, x2);
        const double a1 = -0.125 * pi * std::sin(pi * x1) * std::sin(pi * x2);
        const double a2 = 0.125 * pi * std::cos(pi * x1) * std::cos(pi * x2);
        const double ref = lap - 0.5 * (a1 * a1 + a2 * a2) - (x1 + x2) * 2.0;
        e = std::max(e, std::abs(F.at(i, j) - ref));
      }
    return e;
  };
  const double e1 = err(21), e2 = err(41);
  EXPECT_LT(e1, 0.1);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
}

TEST(Objective, ZeroDataZeroIterate) {
  const SmallProblem sp = quiet_problem(6, 6, 5);
  const auto ctx = sp.context(3, 0.001);
  const Iterate z = Iterate::zeros(sp.grid);
  EXPECT_EQ(max_abs_field(residual_L1(z, ctx)), 0.0);
  EXPECT_EQ(max_abs_field(residual_L2(z, ctx)), 0.0);
  EXPECT_EQ(assemble_J(z, ctx), 0.0);
  const Iterate gr = gradient_J(z, ctx);
  EXPECT_EQ(max_norm(gr), 0.0);
  // F = 0 here, so k is the f-scaled u at T/2
  for (double v : ctx.F().values()) EXPECT_EQ(v, 0.0);
}

TEST(Objective, ConstantDensityRateHasNoL2Residual) {
  const SmallProblem sp = quiet_problem(7, 6, 5);
  const auto ctx = sp.context(1, 0.001);
  Iterate z = Iterate::zeros(sp.grid);
  for (double& v : z.m.values()) v = 0.37;
  const Field l2 = residual_L2(z, ctx);
  for (double v : l2.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Objective, WeightsNeverExceedOne) {
  const SmallProblem sp = small_problem(11, 11, 7);
  for (double lambda : {0.0, 3.0, 10.0, 100.0}) {
    const auto ctx = sp.context(lambda, 0.001);
    double total = 0.0;
    for (double w : ctx.weights().values()) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      total += w;
    }
    EXPECT_GT(total, 0.0);
  }
}

// The first residual carries the factor lambda^{3/2}, so at lambda = 0 only
// the second residual is left, unweighted.
TEST(Objective, UnweightedLeastSquaresAtLambdaZero) {
  const SmallProblem sp = small_problem(8, 7, 5);
  const auto ctx = sp.context(0, 0);
  EXPECT_EQ(ctx.l1_factor(), 0.0);
  std::mt19937_64 rng(3);
  const Iterate z = random_iterate(sp.grid, rng);
  const Field l2 = residual_L2(z, ctx);
  const Field w = quadrature_weights(sp.grid, Rank::space_time);
  double ref = 0.0;
  for (std::size_t i = 1; i + 1 < sp.grid.n1; ++i)
    for (std::size_t j = 1; j + 1 < sp.grid.n2; ++j)
      for (std::size_t n = 0; n < sp.grid.nt; ++n) {
        const std::size_t q = sp.grid.idx(i, j, n);
        ref += w[q] * l2[q] * l2[q];
      }
  EXPECT_NEAR(assemble_J(z, ctx), ref, 1e-12 * ref);
}

TEST(Objective, ValueDominatesRegularization) {
  const SmallProblem sp = small_problem(8, 7, 5);
  const auto ctx = sp.context(3, 0.01);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const Iterate z = random_iterate(sp.grid, rng, 2.0);
    const auto ev = ctx.evaluate(z, false);
    EXPECT_GE(ev.value, 0.01 * h_tilde_norm_sq(z));
    EXPECT_NEAR(ev.regularization, 0.01 * h_tilde_norm_sq(z), 1e-12 * ev.regularization);
  }
}

TEST(Objective, ResidualsAreQuadraticInTheIterate) {
  // R(z + e w) + R(z - e w) - 2 R(z) = 2 e^2 Q(w): the second difference
  // scales by exactly 4 when e doubles
  const SmallProblem sp = small_problem(8, 8, 5);
  const auto ctx = sp.context(3, 0.001);
  std::mt19937_64 rng(5);
  const Iterate z = random_iterate(sp.grid, rng), w = random_iterate(sp.grid, rng);
  for (auto residual : {&ObjectiveContext::residual_L1, &ObjectiveContext::residual_L2}) {
    auto second = [&](double e) {
      Iterate zp = z, zm = z;
      zp.axpy(e, w);
      zm.axpy(-e, w);
      return (ctx.*residual)(zp) + (ctx.*residual)(zm) - 2.0 * (ctx.*residual)(z);
    };
    const Field d1 = second(1e-2), d2 = second(2e-2);
    double num = 0.0, den = 0.0;
    for (std::size_t q = 0; q < d1.size(); ++q) {
      num += std::abs(d2[q] - 4.0 * d1[q]);
      den += std::abs(d2[q]);
    }
    EXPECT_LT(num, 1e-8 * den + 1e-14);
    // linearization: forward difference matches central difference to O(e^2)
    auto fwd = [&](double e) {
      Iterate zp = z;
      zp.axpy(e, w);
      Field r = (ctx.*residual)(zp) - (ctx.*residual)(z);
      return (1.0 / e) * r;
    };
    const Field a = fwd(1e-6), b = fwd(-1e-6);
    double diff = 0.0, scale = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
      diff = std::max(diff, std::abs(a[q] - b[q]));
      scale = std::max(scale, std::abs(a[q] + b[q]));
    }
    EXPECT_LT(diff, 1e-4 * scale);
  }
}

TEST(Objective, GradientMatchesCentralDifferences) {
  const SmallProblem sp = small_problem(11, 11, 7);
  const auto ctx = sp.context(3, 0.001);
  std::mt19937_64 rng(6);
  const Iterate z = random_iterate(sp.grid, rng);
  for (int k = 0; k < 20; ++k) {
    const Iterate w = random_iterate(sp.grid, rng);
    EXPECT_LT(directional_error(ctx, z, w), 1e-5) << "direction " << k;
  }
}

TEST(Objective, GradientMatchesInQuadraticMode) {
  const SmallProblem sp = small_problem(9, 8, 5);
  const auto ctx = sp.context(1, 0.01, ObjectiveTerms{false, 1.0});
  std::mt19937_64 rng(7);
  const Iterate z = random_iterate(sp.grid, rng);
  for (int k = 0; k < 5; ++k) EXPECT_LT(directional_error(ctx, z, random_iterate(sp.grid, rng)), 1e-6);
}

TEST(Objective, GradientScalesWithResidualWeights) {
  const SmallProblem sp = small_problem(8, 8, 5);
  std::mt19937_64 rng(8);
  const Iterate z = random_iterate(sp.grid, rng);
  const Iterate g1 = gradient_J(z, sp.context(3, 0, ObjectiveTerms{true, 1.0}));
  const Iterate g4 = gradient_J(z, sp.context(3, 0, ObjectiveTerms{true, 4.0}));
  for (std::size_t q = 0; q < g1.u.size(); ++q) {
    EXPECT_NEAR(g4.u[q], 4.0 * g1.u[q], 1e-12 * (1 + std::abs(g4.u[q])));
    EXPECT_NEAR(g4.m[q], 4.0 * g1.m[q], 1e-12 * (1 + std::abs(g4.m[q])));
  }
}

TEST(Objective, ConvexityGapSelfIsZero) {
  const SmallProblem sp = small_problem(8, 8, 5);
  const auto ctx = sp.context(3, 0.001);
  std::mt19937_64 rng(9);
  const Iterate z = random_iterate(sp.grid, rng);
  EXPECT_NEAR(convexity_gap(z, z, ctx), 0.0, 1e-12 * ctx.value(z));
}

TEST(Objective, ConvexityGapRejectsDifferentBoundaryData) {
  const SmallProblem sp = small_problem(8, 8, 5);
  const auto ctx = sp.context(3, 0.001);
  const Iterate z = Iterate::zeros(sp.grid);
  Iterate y = z;
  y.u.at(0, 3, 2) = 1.0;
  EXPECT_THROW(convexity_gap(z, y, ctx), ContractError);
}

TEST(Objective, ConvexityGapBoundOnFeasiblePairs) {
  const SmallProblem sp = small_problem(11, 11, 7);
  const auto ctx = sp.context(3, 0.001);
  const auto cons = sp.constraints();
  std::mt19937_64 rng(10);
  for (int k = 0; k < 20; ++k) {
    const Iterate z1 = project_constraints(random_iterate(sp.grid, rng, 0.5), cons);
    const Iterate z2 = project_constraints(random_iterate(sp.grid, rng, 0.5), cons);
    const double bound = 0.5 * 0.001 * h_tilde_norm_sq(z2 - z1);
    EXPECT_GE(convexity_gap(z1, z2, ctx), bound) << "pair " << k;
  }
}

TEST(Objective, QuadraticModeGapIsTheQuadraticForm) {
  const SmallProblem sp = small_problem(8, 8, 5);
  const auto ctx = sp.context(0, 0.01, ObjectiveTerms{false, 1.0});
  const auto cons = sp.constraints();
  std::mt19937_64 rng(11);
  const Iterate z1 = project_constraints(random_iterate(sp.grid, rng), cons);
  const Iterate z2 = project_constraints(random_iterate(sp.grid, rng), cons);
  const double g12 = convexity_gap(z1, z2, ctx), g21 = convexity_gap(z2, z1, ctx);
  EXPECT_NEAR(g12, g21, 1e-9 * g12);
  // the same difference applied at another base point gives the same value
  Iterate z3 = project_constraints(random_iterate(sp.grid, rng), cons);
  Iterate z4 = z3;
  z4.axpy(1.0, z2 - z1);
  EXPECT_NEAR(convexity_gap(z3, z4, ctx), g12, 1e-9 * g12);
  EXPECT_GE(g12, 0.5 * 0.01 * h_tilde_norm_sq(z2 - z1) * (1 - 1e-12));
}
