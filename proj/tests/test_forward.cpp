#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "manufactured.hpp"
#include "mfgcvx/forward.hpp"

using namespace mfgcvx;
using namespace mfgcvx::testing;

namespace {

ForwardSpec constant_spec(double h, double ht) {
  ForwardSpec s;
  s.grid = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, h, ht);
  s.value = [](double, double, double) { return 0.0; };
  s.initial_density = [](double, double) { return 1.0; };
  s.boundary_density = [](double, double, double) { return 1.0; };
  s.k_true = Field(s.grid, Rank::spatial, 1.0);
  return s;
}

}  // namespace

TEST(Forward, ConstantsArePreserved) {
  const DensitySolution sol = solve_density(constant_spec(1.0 / 10, 1.0 / 10));
  for (double v : sol.p.values()) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_NEAR(sol.min_abs, 1.0, 1e-12);
}

TEST(Forward, MissingInputsRejected) {
  ForwardSpec s = constant_spec(1.0 / 10, 1.0 / 10);
  s.boundary_density = nullptr;
  EXPECT_THROW(solve_density(s), ContractError);
}

TEST(Forward, DiscreteMaximumPrinciple) {
  // pure diffusion with data in [0.5, 1.5]: the solution stays in range
  ForwardSpec s = constant_spec(1.0 / 10, 1.0 / 20);
  s.initial_density = [](double x1, double x2) { return 1.0 + 0.5 * std::sin(7 * x1) * std::cos(3 * x2); };
  s.boundary_density = [](double x1, double x2, double t) {
    return 1.0 + 0.5 * std::sin(7 * x1) * std::cos(3 * x2) * std::cos(t);
  };
  const Field p = solve_density(s).p;
  for (double v : p.values()) {
    EXPECT_GE(v, 0.5 - 1e-12);
    EXPECT_LE(v, 1.5 + 1e-12);
  }
}

TEST(Forward, ManufacturedSolutionOrders) {
  const OrderStudy o = mms_order_study();
  EXPECT_NEAR(o.temporal, 1.0, 0.2);
  EXPECT_NEAR(o.spatial, 2.0, 0.3);
  for (int k = 0; k + 1 < 3; ++k) {
    EXPECT_LT(o.et[k + 1], o.et[k]);
    EXPECT_LT(o.es[k + 1], o.es[k]);
  }
}

TEST(Forward, MakeSZeroNumerator) {
  const auto g = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  const Field p(g, Rank::space_time, 1.0), v(g, Rank::space_time);
  const Field k(g, Rank::spatial), r(g, Rank::spatial, 1.0);
  const LocalInteraction li = make_s(p, v, k, r, GaussianDelta{});
  for (double x : li.s.values()) EXPECT_EQ(x, 0.0);
  for (double x : li.s_t.values()) EXPECT_EQ(x, 0.0);
}

TEST(Forward, MakeSConstantAlgebra) {
  const auto g = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  const Field p(g, Rank::space_time, 1.0), v(g, Rank::space_time);
  const Field k(g, Rank::spatial, 1.0), r(g, Rank::spatial, 1.0);
  const LocalInteraction li =
      make_s(p, v, k, r, GaussianDelta{std::numeric_limits<double>::infinity()});
  for (double x : li.s.values()) EXPECT_NEAR(x, -1.0, 1e-13);
}

TEST(Forward, MakeSClosesTheValueEquation) {
  // v_t + lap v - r|grad v|^2/2 - k I[p] - s p = 0 nodewise with the same stencils
  const auto g = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  const Field p = sample_space_time(g, [](double x1, double x2, double t) { return 3 + x1 * x2 * (1 + t); });
  const Field v = sample_space_time(g, mms_v);
  const Field k = sample_spatial(g, [](double x1, double x2) { return 1 + x1 * x1 + x2; });
  const Field r(g, Rank::spatial, 0.7);
  const LocalInteraction li = make_s(p, v, k, r, GaussianDelta{});
  const Field vt = ddt(v), lap = laplacian(v), v1 = ddx1(v), v2 = ddx2(v);
  const Field ip = interaction_integral(p, GaussianDelta{});
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j)
      for (std::size_t n = 0; n < g.nt; ++n) {
        const std::size_t q = g.idx(i, j, n);
        const double res = vt[q] + lap[q] - 0.35 * (v1[q] * v1[q] + v2[q] * v2[q]) -
                           k.at(i, j) * ip[q] - li.s[q] * p[q];
        EXPECT_NEAR(res, 0.0, 1e-12);
      }
}

TEST(Forward, MakeSGuardNamesTheNode) {
  const auto g = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  const Field p = sample_space_time(g, [](double x1, double x2, double t) { return (t + 1) * x1 * x2; });
  const Field v(g, Rank::space_time), k(g, Rank::spatial, 1.0), r(g, Rank::spatial, 1.0);
  try {
    make_s(p, v, k, r, GaussianDelta{});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("j=5"), std::string::npos) << e.what();
  }
}

TEST(Forward, ExtractionRestrictsAndDifferentiates) {
  const auto fine = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.05, 0.05);
  const auto coarse = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  // quadratic in x1 and t: one-sided differences are exact
  auto fv = [](double x1, double x2, double t) { return x1 * x1 * (1 + x2) + t * t; };
  auto fp = [](double x1, double x2, double t) { return 3 * x1 - x2 * t; };
  const Field v = sample_space_time(fine, fv), p = sample_space_time(fine, fp);
  const ObservationData obs = extract_observations(p, v, coarse);
  EXPECT_EQ(obs.grid(), coarse);
  for (std::size_t i = 0; i < coarse.n1; ++i)
    for (std::size_t j = 0; j < coarse.n2; ++j) {
      EXPECT_NEAR(obs.v0.at(i, j), fv(coarse.x1(i), coarse.x2(j), 0.5), 1e-13);
      EXPECT_NEAR(obs.p0.at(i, j), fp(coarse.x1(i), coarse.x2(j), 0.5), 1e-13);
    }
  for (std::size_t j = 0; j < coarse.n2; ++j)
    for (std::size_t n = 0; n < coarse.nt; ++n) {
      const std::size_t q = j * coarse.nt + n;
      EXPECT_NEAR(obs.g11[q], 4.0 * (1 + coarse.x2(j)), 1e-11);
      EXPECT_NEAR(obs.g12[q], 3.0, 1e-11);
      EXPECT_NEAR(obs.dt_g11[q], 0.0, 1e-9);
    }
  // v0 agrees with the Dirichlet trace at t = T/2
  const auto nodes = coarse.boundary_nodes();
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    const auto [i, j] = nodes[b];
    EXPECT_EQ(obs.g01[b * coarse.nt + coarse.mid()], obs.v0.at(i, j));
    EXPECT_NEAR(obs.dt_g01[b * coarse.nt + 3], 2 * coarse.t(3), 1e-12);
    EXPECT_NEAR(obs.dt_g02[b * coarse.nt + 3], -coarse.x2(j), 1e-12);
  }
}

TEST(Forward, GenerateRestrictsToCoarseGrid) {
  ForwardSpec s = constant_spec(0.05, 0.05);
  s.value = mms_v;
  s.initial_density = [](double x1, double x2) { return x1 * x2 + 2; };
  s.boundary_density = [](double x1, double x2, double t) { return (t + 1) * (x1 * x2 + 2); };
  const auto coarse = SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1);
  const GeneratedData d = generate(s, coarse);
  EXPECT_NEAR(d.min_abs_p, 1.0, 1e-12);
  EXPECT_EQ(d.s_coarse.grid(), coarse);
  EXPECT_EQ(d.s_coarse.at(4, 6, 2), d.s.at(8, 12, 4));
  EXPECT_EQ(d.observations.p0.at(3, 3), d.p.at(6, 6, 10));
  EXPECT_TRUE(d.s.all_finite());
}

TEST(Forward, GenerateRejectsVanishingDensity) {
  ForwardSpec s = constant_spec(0.05, 0.05);
  s.value = mms_v;
  s.initial_density = [](double x1, double x2) { return x1 * x2; };
  s.boundary_density = [](double x1, double x2, double t) { return (t + 1) * x1 * x2; };
  EXPECT_THROW(generate(s, SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.1, 0.1)), NumericalError);
}
