#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfgcvx/grid.hpp"

using namespace mfgcvx;

namespace {

constexpr double kPi = std::numbers::pi;

SpaceTimeGrid unit_grid(double h = 1.0 / 20, double ht = 1.0 / 10) {
  return SpaceTimeGrid::with_steps(1.0, 2.0, 0.5, 1.0, h, ht);
}

Field random_field(const SpaceTimeGrid& g, Rank r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(g, r);
  for (double& v : f.values()) v = u(rng);
  return f;
}

double max_error_interior(const Field& f, const Field& ref) {
  const auto& g = f.grid();
  double e = 0.0;
  for (std::size_t i = 1; i + 1 < g.n1; ++i)
    for (std::size_t j = 1; j + 1 < g.n2; ++j)
      for (std::size_t n = 0; n < g.nt; ++n)
        e = std::max(e, std::abs(f.at(i, j, n) - ref.at(i, j, n)));
  return e;
}

double max_error(const Field& f, const Field& ref) {
  double e = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) e = std::max(e, std::abs(f[k] - ref[k]));
  return e;
}

}  // namespace

TEST(Grid, ConstructionInvariants) {
  const auto g = unit_grid();
  EXPECT_EQ(g.n1, 21u);
  EXPECT_EQ(g.n2, 21u);
  EXPECT_EQ(g.nt, 11u);
  EXPECT_DOUBLE_EQ(g.h1(), 0.05);
  EXPECT_DOUBLE_EQ(g.ht(), 0.1);
  EXPECT_EQ(g.mid(), 5u);
  EXPECT_DOUBLE_EQ(g.t(g.mid()), 0.5);
  EXPECT_THROW(SpaceTimeGrid::make(1, 2, 0.5, 1, 21, 21, 10), ContractError);
  EXPECT_THROW(SpaceTimeGrid::make(2, 1, 0.5, 1, 21, 21, 11), ContractError);
  EXPECT_THROW(SpaceTimeGrid::with_steps(1, 2, 0.5, 1, 0.03, 0.1), ContractError);
}

TEST(Grid, FieldSizeMustMatchRank) {
  const auto g = unit_grid();
  EXPECT_THROW(Field(g, Rank::spatial, std::vector<double>(10)), ContractError);
  EXPECT_EQ(Field(g, Rank::boundary_trace).size(), 80u * 11u);
  EXPECT_EQ(Field(g, Rank::gamma_trace).size(), 21u * 11u);
}

TEST(Grid, BoundaryIndexEnumeratesPerimeter) {
  const auto g = unit_grid();
  const auto nodes = g.boundary_nodes();
  ASSERT_EQ(nodes.size(), g.boundary_size());
  for (std::size_t k = 0; k < nodes.size(); ++k)
    EXPECT_EQ(g.boundary_index(nodes[k][0], nodes[k][1]), k);
}

TEST(Grid, FirstDifferenceExactOnLinears) {
  const auto g = unit_grid();
  const Field f = sample_space_time(g, [](double x1, double, double) { return x1; });
  const Field d = ddx1(f);
  for (double v : d.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Grid, FirstDifferenceExactOnQuadratics) {
  const auto g = unit_grid();
  const Field f = sample_space_time(g, [](double x1, double, double) { return x1 * x1; });
  const Field d = ddx1(f);
  const Field ref = sample_space_time(g, [](double x1, double, double) { return 2 * x1; });
  // central at interior nodes; the 3-point one-sided ends are exact here too
  EXPECT_LT(max_error(d, ref), 1e-11);
}

TEST(Grid, TimeDerivativeOfSpatialFieldIsRejected) {
  const auto g = unit_grid();
  EXPECT_THROW(ddt(Field(g, Rank::spatial)), ContractError);
  EXPECT_THROW(diff(Field(g, Rank::gamma_trace), Axis::x1), ContractError);
}

TEST(Grid, FirstDifferenceSecondOrder) {
  auto err = [](double h) {
    const auto g = unit_grid(h);
    const Field f = sample_space_time(g, [](double x1, double, double) { return std::sin(kPi * x1); });
    const Field ref =
        sample_space_time(g, [](double x1, double, double) { return kPi * std::cos(kPi * x1); });
    return max_error(ddx1(f), ref);
  };
  const double ratio = err(1.0 / 20) / err(1.0 / 40);
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Grid, LaplacianAnnihilatesConstants) {
  const auto g = unit_grid();
  const Field f(g, Rank::space_time, 3.25);
  const Field lap = laplacian(f);
  for (double v : lap.values()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(Grid, LaplacianExactOnQuadratics) {
  const auto g = unit_grid();
  const Field f =
      sample_space_time(g, [](double x1, double x2, double) { return x1 * x1 + x2 * x2; });
  const Field lap = laplacian(f);
  for (double v : lap.values()) EXPECT_NEAR(v, 4.0, 1e-8);
}

TEST(Grid, LaplacianSecondOrderByRefinement) {
  auto err = [](double h) {
    const auto g = unit_grid(h);
    auto fn = [](double x1, double x2, double) { return std::sin(kPi * x1) * std::sin(kPi * x2); };
    const Field f = sample_space_time(g, fn);
    Field ref = sample_space_time(g, fn);
    ref *= -2 * kPi * kPi;
    return max_error_interior(laplacian(f), ref);
  };
  const double ratio = err(1.0 / 20) / err(1.0 / 40);
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Grid, DifferenceTransposesAreAdjoints) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 7, 6, 5);
  const Field a = random_field(g, Rank::space_time, 1), b = random_field(g, Rank::space_time, 2);
  for (Axis ax : {Axis::x1, Axis::x2, Axis::t}) {
    EXPECT_NEAR(dot(diff(a, ax), b), dot(a, diff(b, ax, true)), 1e-10);
    EXPECT_NEAR(dot(diff2(a, ax), b), dot(a, diff2(b, ax, true)), 1e-8);
  }
  EXPECT_NEAR(dot(laplacian(a), b), dot(a, laplacian(b, true)), 1e-8);
  EXPECT_NEAR(dot(volterra(a), b), dot(a, volterra_transpose(b)), 1e-12);
}

TEST(Grid, VolterraMidSliceIsZero) {
  const auto g = unit_grid();
  const Field v = volterra(random_field(g, Rank::space_time, 3));
  for (std::size_t s = 0; s < g.spatial_size(); ++s) EXPECT_EQ(v[s * g.nt + g.mid()], 0.0);
}

TEST(Grid, VolterraExactOnConstantsAndLinears) {
  const auto g = unit_grid();
  const Field one(g, Rank::space_time, 1.0);
  const Field v1 = volterra(one);
  const Field lin = sample_space_time(g, [](double, double, double t) { return t; });
  const Field v2 = volterra(lin);
  for (std::size_t n = 0; n < g.nt; ++n) {
    const double t = g.t(n);
    EXPECT_NEAR(v1.at(3, 4, n), t - 0.5, 1e-14);
    EXPECT_NEAR(v2.at(3, 4, n), (t * t - 0.25) / 2, 1e-14);
  }
}

TEST(Grid, VolterraAdditivity) {
  const auto g = unit_grid();
  const Field f = random_field(g, Rank::space_time, 4);
  const Field v = volterra(f);
  const std::size_t s = g.sidx(5, 7);
  for (std::size_t n1 = 0; n1 < g.nt; ++n1)
    for (std::size_t n2 = n1; n2 < g.nt; ++n2) {
      double trap = 0.0;
      for (std::size_t k = n1; k < n2; ++k)
        trap += 0.5 * g.ht() * (f[s * g.nt + k] + f[s * g.nt + k + 1]);
      EXPECT_NEAR(v[s * g.nt + n2] - v[s * g.nt + n1], trap, 1e-14);
    }
}

TEST(Grid, IntegrateY2) {
  const auto g = unit_grid();
  std::vector<double> one(g.n2, 1.0), odd(g.n2);
  for (std::size_t j = 0; j < g.n2; ++j) odd[j] = g.x2(j);
  EXPECT_NEAR(integrate_y2(one, 0.5), 1.0, 1e-15);
  EXPECT_NEAR(integrate_y2(odd, 0.5), 0.0, 1e-15);
  EXPECT_THROW(integrate_y2(std::vector<double>{1.0}, 0.5), ContractError);
}

TEST(Grid, QuadratureWeightsSumToVolume) {
  const auto g = SpaceTimeGrid::make(1, 2.5, 0.75, 2, 13, 9, 7);
  const Field w = quadrature_weights(g, Rank::space_time);
  double s = 0.0;
  for (double v : w.values()) s += v;
  EXPECT_NEAR(s, 1.5 * 1.5 * 2.0, 1e-13);
}

TEST(Grid, H2NormOfZeroAndConstant) {
  const auto g = unit_grid();
  EXPECT_EQ(h2_norm_sq(Field(g, Rank::space_time)), 0.0);
  const double c = 1.7;
  EXPECT_NEAR(h2_norm_sq(Field(g, Rank::space_time, c)), c * c * 1.0 * 1.0 * 1.0, 1e-9);
}

TEST(Grid, H2NormOfX1MatchesClosedFormNodeSum) {
  const auto g = unit_grid();
  const Field f = sample_space_time(g, [](double x1, double, double) { return x1; });
  // trapezoid weights: w1_i x1_i^2 summed over x1 times the x2 and t lengths,
  // plus the unit first difference over the whole volume
  double s1 = 0.0;
  for (std::size_t i = 0; i < g.n1; ++i) {
    const double w = (i == 0 || i + 1 == g.n1 ? 0.5 : 1.0) * g.h1();
    s1 += w * g.x1(i) * g.x1(i);
  }
  const double expected = s1 * 1.0 * 1.0 + 1.0;
  EXPECT_NEAR(h2_norm_sq(f), expected, 1e-10);
  // trapezoid error term for x^2 on [1, 2]: h^2 / 6
  EXPECT_NEAR(s1, 7.0 / 3.0 + g.h1() * g.h1() / 6.0, 1e-13);
}

TEST(Grid, H2NormHomogeneousOfDegreeTwo) {
  const auto g = unit_grid();
  const Field f = random_field(g, Rank::space_time, 5);
  const double c = -3.3;
  const double a = h2_norm_sq(f), b = h2_norm_sq(c * f);
  EXPECT_NEAR(b / (c * c * a), 1.0, 1e-12);
}

TEST(Grid, H2NormGradientMatchesFiniteDifferences) {
  const auto g = SpaceTimeGrid::make(1, 2, 0.5, 1, 6, 5, 5);
  const Field f = random_field(g, Rank::space_time, 6);
  const Field gr = h2_norm_sq_gradient(f);
  const Field w = random_field(g, Rank::space_time, 7);
  const double eps = 1e-6;
  Field fp = f, fm = f;
  for (std::size_t k = 0; k < f.size(); ++k) {
    fp[k] += eps * w[k];
    fm[k] -= eps * w[k];
  }
  const double fd = (h2_norm_sq(fp) - h2_norm_sq(fm)) / (2 * eps);
  EXPECT_NEAR(fd / dot(gr, w), 1.0, 1e-7);
}

TEST(Grid, RestrictionRequiresAlignedGrids) {
  const auto fine = unit_grid(1.0 / 80, 1.0 / 320);
  const auto coarse = unit_grid();
  const Field f = sample_space_time(fine, [](double x1, double x2, double t) { return x1 + 2 * x2 + 3 * t; });
  const Field c = restrict_to(f, coarse);
  EXPECT_DOUBLE_EQ(c.at(3, 4, 5), coarse.x1(3) + 2 * coarse.x2(4) + 3 * coarse.t(5));
  EXPECT_THROW(restrict_to(f, SpaceTimeGrid::make(1, 2, 0.5, 1, 22, 21, 11)), ContractError);
}
