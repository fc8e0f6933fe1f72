#pragma once

// Data generation: pick v**, solve the density equation
//
//   p_t - lap p - div(r p grad v**) = 0,  p(.,0) = p0**,  p|S_T = g02**
//
// by backward Euler with a conservative (half-node flux) divergence, build
// the local interaction coefficient s(x,t) so that (v**, p**) solves the
// first MFG equation exactly at the chosen k, and restrict everything to the
// coarse inverse-problem grid.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cstdio>
#include <array>
#include <functional>
#include <limits>
#include <string>

#include "mfgcvx/grid.hpp"
#include "mfgcvx/kernels.hpp"

namespace mfgcvx {

using SpatialFn = std::function<double(double, double)>;
using SpaceTimeFn = std::function<double(double, double, double)>;

struct ForwardSpec {
  SpaceTimeGrid grid;             // fine generation grid
  SpaceTimeFn value;              // v**
  SpatialFn initial_density;      // p0**, imposed at t = 0
  SpaceTimeFn boundary_density;   // g02** on S_T
  SpatialFn r = [](double, double) { return 1.0; };
  Field k_true;                   // spatial, on grid
  KernelSpec kernel = GaussianDelta{};
  SpaceTimeFn source;             // optional right-hand side (manufactured solutions)
};

struct DensitySolution {
  Field p;
  double min_abs = 0.0;  // min |p| over the closed grid
};

inline constexpr double kDensityFloor = 1e-8;

namespace detail {

inline double min_abs_value(const Field& f) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : f.values()) m = std::min(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Backward-Euler solve of the density equation; one sparse LU per step.
inline DensitySolution solve_density(const ForwardSpec& spec) {
  const SpaceTimeGrid& g = spec.grid;
  require(g.n1 >= 3 && g.n2 >= 3, "solve_density: need at least 3 nodes per spatial axis");
  require(static_cast<bool>(spec.value) && static_cast<bool>(spec.initial_density) &&
              static_cast<bool>(spec.boundary_density),
          "solve_density: v**, p0** and g02** must all be given");
  const std::size_t n1 = g.n1, n2 = g.n2;
  const std::size_t m1 = n1 - 2, m2 = n2 - 2;
  const double h1 = g.h1(), h2 = g.h2(), ht = g.ht();
  const Field r = sample_spatial(g, spec.r);

  Field p(g, Rank::space_time);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) p.at(i, j, 0) = spec.initial_density(g.x1(i), g.x2(j));

  auto unknown = [&](std::size_t i, std::size_t j) { return (i - 1) * m2 + (j - 1); };
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  std::vector<double> v(n1 * n2), prev(n1 * n2), bc(n1 * n2);
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(m1 * m2));

  for (std::size_t n = 0; n + 1 < g.nt; ++n) {
    const double t = g.t(n + 1);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        v[g.sidx(i, j)] = spec.value(g.x1(i), g.x2(j), t);
        prev[g.sidx(i, j)] = p.at(i, j, n);
        bc[g.sidx(i, j)] =
            g.is_boundary(i, j) ? spec.boundary_density(g.x1(i), g.x2(j), t) : 0.0;
      }
    triplets.clear();
    for (std::size_t i = 1; i + 1 < n1; ++i)
      for (std::size_t j = 1; j + 1 < n2; ++j) {
        const std::size_t row = unknown(i, j);
        const std::size_t c = g.sidx(i, j);
        double diag = 1.0 / ht;
        double b = prev[c] / ht;
        if (spec.source) b += spec.source(g.x1(i), g.x2(j), t);
        // neighbours along x1 and x2: (offset node, spacing)
        const std::array<std::array<std::size_t, 2>, 2> nb{{{g.sidx(i - 1, j), g.sidx(i + 1, j)},
                                                            {g.sidx(i, j - 1), g.sidx(i, j + 1)}}};
        const std::array<double, 2> hs{h1, h2};
        for (int ax = 0; ax < 2; ++ax) {
          const double h = hs[ax];
          const std::size_t lo = nb[ax][0], hi = nb[ax][1];
          const double r_hi = 0.5 * (r[c] + r[hi]), r_lo = 0.5 * (r[c] + r[lo]);
          const double dv_hi = (v[hi] - v[c]) / h, dv_lo = (v[c] - v[lo]) / h;
          // -lap p - div(r p grad v), fluxes at half nodes with averaged p
          diag += 2.0 / (h * h) - (r_hi * dv_hi - r_lo * dv_lo) / (2.0 * h);
          const double c_hi = -1.0 / (h * h) - r_hi * dv_hi / (2.0 * h);
          const double c_lo = -1.0 / (h * h) + r_lo * dv_lo / (2.0 * h);
          auto couple = [&](std::size_t node, double coef) {
            const std::size_t ni = node / n2, nj = node % n2;
            if (g.is_boundary(ni, nj)) {
              b -= coef * bc[node];
            } else {
              triplets.emplace_back(static_cast<int>(row), static_cast<int>(unknown(ni, nj)), coef);
            }
          };
          couple(hi, c_hi);
          couple(lo, c_lo);
        }
        triplets.emplace_back(static_cast<int>(row), static_cast<int>(row), diag);
        rhs[static_cast<Eigen::Index>(row)] = b;
      }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(m1 * m2),
                                  static_cast<Eigen::Index>(m1 * m2));
    A.setFromTriplets(triplets.begin(), triplets.end());
    if (!analyzed) {
      lu.analyzePattern(A);
      analyzed = true;
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success)
      throw NumericalError("solve_density: singular linear system at step " + std::to_string(n + 1));
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
      throw NumericalError("solve_density: linear solve failed at step " + std::to_string(n + 1));
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        p.at(i, j, n + 1) = g.is_boundary(i, j)
                                ? bc[g.sidx(i, j)]
                                : sol[static_cast<Eigen::Index>(unknown(i, j))];
  }
  if (!p.all_finite()) throw NumericalError("solve_density: non-finite density");
  const double min_abs = detail::min_abs_value(p);
  return {std::move(p), min_abs};
}

struct LocalInteraction {
  Field s;
  Field s_t;
};

/// s = [v_t + lap v - r |grad v|^2 / 2 - k * I[p]] / p, nodewise with grid
/// stencils; s_t by time differences of s.
inline LocalInteraction make_s(const Field& p, const Field& v, const Field& k_true, const Field& r,
                               const KernelSpec& kernel) {
  require(p.rank() == Rank::space_time && v.rank() == Rank::space_time,
          "make_s: p and v must be space-time fields");
  p.check_same(v);
  require(k_true.rank() == Rank::spatial && r.rank() == Rank::spatial,
          "make_s: k and r must be spatial fields");
  const auto& g = p.grid();
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j)
      for (std::size_t n = 0; n < g.nt; ++n)
        if (std::abs(p.at(i, j, n)) < kDensityFloor) {
          char buf[160];
          std::snprintf(buf, sizeof buf,
                        "make_s: |p| < 1e-8 at node (i=%zu, j=%zu, n=%zu), x=(%g, %g), t=%g", i, j,
                        n, g.x1(i), g.x2(j), g.t(n));
          throw NumericalError(buf);
        }
  const Field vt = ddt(v), lap = laplacian(v), v1 = ddx1(v), v2 = ddx2(v);
  const Field ip = interaction_integral(p, kernel);
  Field s(g, Rank::space_time);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      const double kk = k_true.at(i, j), rr = r.at(i, j);
      for (std::size_t n = 0; n < g.nt; ++n) {
        const std::size_t q = g.idx(i, j, n);
        const double num =
            vt[q] + lap[q] - 0.5 * rr * (v1[q] * v1[q] + v2[q] * v2[q]) - kk * ip[q];
        s[q] = num / p[q];
      }
    }
  Field st = ddt(s);
  return {std::move(s), std::move(st)};
}

/// The coefficient inverse problem's input data on the inverse grid.
struct ObservationData {
  Field v0, p0;          // spatial, at t = T/2
  Field g01, g02;        // Dirichlet traces of v, p on S_T
  Field g11, g12;        // d/dx1 of v, p on Gamma_T
  Field dt_g01, dt_g02;  // their time derivatives (noiseless path: grid stencils)
  Field dt_g11, dt_g12;

  const SpaceTimeGrid& grid() const { return v0.grid(); }
};

/// Time derivative of a trace by the grid's first-difference stencil.
inline Field trace_ddt(const Field& trace) {
  require(trace.rank() == Rank::boundary_trace || trace.rank() == Rank::gamma_trace,
          "trace_ddt: need a boundary or gamma trace");
  return diff(trace, Axis::t);
}

/// Restriction of fine-grid (p**, v**) to the coarse grid's observation data.
/// Neumann traces use the second-order one-sided x1 difference at x1 = b on
/// the fine grid.
inline ObservationData extract_observations(const Field& p, const Field& v,
                                            const SpaceTimeGrid& coarse) {
  p.check_same(v);
  require(p.rank() == Rank::space_time, "extract_observations: need space-time fields");
  const auto& g = p.grid();
  const Field pc = restrict_to(p, coarse), vc = restrict_to(v, coarse);
  ObservationData obs;
  obs.v0 = time_slice(vc, coarse.mid());
  obs.p0 = time_slice(pc, coarse.mid());
  obs.g01 = boundary_trace(vc);
  obs.g02 = boundary_trace(pc);

  const std::size_t r2 = subsample_ratio(g.n2, coarse.n2);
  const std::size_t rt = subsample_ratio(g.nt, coarse.nt);
  const std::size_t last = g.n1 - 1;
  const double h = g.h1();
  auto neumann = [&](const Field& f) {
    Field out(coarse, Rank::gamma_trace);
    for (std::size_t j = 0; j < coarse.n2; ++j)
      for (std::size_t n = 0; n < coarse.nt; ++n) {
        const std::size_t jf = j * r2, nf = n * rt;
        out[j * coarse.nt + n] = (3.0 * f.at(last, jf, nf) - 4.0 * f.at(last - 1, jf, nf) +
                                  f.at(last - 2, jf, nf)) /
                                 (2.0 * h);
      }
    return out;
  };
  obs.g11 = neumann(v);
  obs.g12 = neumann(p);
  obs.dt_g01 = trace_ddt(obs.g01);
  obs.dt_g02 = trace_ddt(obs.g02);
  obs.dt_g11 = trace_ddt(obs.g11);
  obs.dt_g12 = trace_ddt(obs.g12);
  return obs;
}

/// Derivatives of the observation data consumed by the objective: spatial
/// derivatives of v0 and time derivatives of the four boundary traces. The
/// noiseless path takes them from grid stencils, the noisy path from splines.
struct DataDerivatives {
  Field v0_x1, v0_x2, v0_lap;  // spatial
  Field dt_g01, dt_g02;        // boundary traces
  Field dt_g11, dt_g12;        // gamma traces
};

inline DataDerivatives stencil_derivatives(const ObservationData& obs) {
  return {ddx1(obs.v0),  ddx2(obs.v0),  laplacian(obs.v0), obs.dt_g01,
          obs.dt_g02,    obs.dt_g11,    obs.dt_g12};
}

struct GeneratedData {
  Field p;          // p** on the fine grid
  Field s, s_t;     // on the fine grid
  Field s_coarse, s_t_coarse;
  Field k_true_coarse;
  ObservationData observations;
  double min_abs_p = 0.0;
};

/// Full generation pipeline: solve_density -> make_s -> extract_observations.
inline GeneratedData generate(const ForwardSpec& spec, const SpaceTimeGrid& coarse) {
  require(spec.k_true.rank() == Rank::spatial && spec.k_true.grid() == spec.grid,
          "generate: k_true must be a spatial field on the fine grid");
  DensitySolution density = solve_density(spec);
  const Field v = sample_space_time(spec.grid, spec.value);
  const Field r = sample_spatial(spec.grid, spec.r);
  LocalInteraction li = make_s(density.p, v, spec.k_true, r, spec.kernel);
  GeneratedData out;
  out.observations = extract_observations(density.p, v, coarse);
  out.s_coarse = restrict_to(li.s, coarse);
  out.s_t_coarse = restrict_to(li.s_t, coarse);
  out.k_true_coarse = restrict_to(spec.k_true, coarse);
  out.min_abs_p = density.min_abs;
  out.p = std::move(density.p);
  out.s = std::move(li.s);
  out.s_t = std::move(li.s_t);
  return out;
}

}  // namespace mfgcvx
