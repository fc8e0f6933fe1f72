#pragma once

// The Carleman-weighted Tikhonov functional
//
//   J(u,m) = e^{-2 lambda b^2} lambda^{3/2} sum W L1^2
//          + e^{-2 lambda b^2}             sum W L2^2
//          + beta (|u|_{H^2}^2 + |m|_{H^2}^2)
//
// over (u, m) = (v_t, p_t), where L1, L2 are the time-differentiated MFG
// equations after eliminating v, p and k through
//
//   v = V[u] + v0,  p = V[m] + p0,  k = f u(., T/2) + F,  V = int_{T/2}^t.
//
// W is the trapezoid weight times the Carleman weight function. Residuals are
// collected on spatially interior nodes at every time slice; rows on the
// lateral boundary carry the Dirichlet data and are not part of the sum.
// gradient_J is the exact transpose of the discrete forward map.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

#include "mfgcvx/carleman.hpp"
#include "mfgcvx/forward.hpp"
#include "mfgcvx/grid.hpp"
#include "mfgcvx/kernels.hpp"

namespace mfgcvx {

/// (u, m) = (v_t, p_t) sampled on the inverse grid.
struct Iterate {
  Field u, m;

  static Iterate zeros(const SpaceTimeGrid& g) {
    return {Field(g, Rank::space_time), Field(g, Rank::space_time)};
  }
  const SpaceTimeGrid& grid() const { return u.grid(); }

  Iterate& axpy(double c, const Iterate& o) {
    for (std::size_t k = 0; k < u.size(); ++k) {
      u[k] += c * o.u[k];
      m[k] += c * o.m[k];
    }
    return *this;
  }
};

inline double dot(const Iterate& a, const Iterate& b) { return dot(a.u, b.u) + dot(a.m, b.m); }

inline Iterate operator-(const Iterate& a, const Iterate& b) { return {a.u - b.u, a.m - b.m}; }

/// Squared discrete H-tilde norm |u|_{H^2}^2 + |m|_{H^2}^2.
inline double h_tilde_norm_sq(const Iterate& z) { return h2_norm_sq(z.u) + h2_norm_sq(z.m); }

inline constexpr double kDenominatorFloor = 1e-8;

/// f(x) = 1 / denominator_field(p0); zero where the Heaviside cutoff vanishes.
inline Field compute_f(const Field& p0, const KernelSpec& kernel) {
  const Denominator den = denominator_field(p0, kernel);
  const auto& g = p0.grid();
  const auto* cut = std::get_if<HeavisideCutoff>(&kernel);
  Field f(g, Rank::spatial);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      if (cut && cutoff(g.x1(i), g.b, cut->eta) == 0.0) continue;
      const double d = den.value.at(i, j);
      if (std::abs(d) < kDenominatorFloor) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "compute_f: |denominator| = %.3g < 1e-8 at node (i=%zu, j=%zu), x=(%g, %g)",
                      std::abs(d), i, j, g.x1(i), g.x2(j));
        throw NumericalError(buf);
      }
      f.at(i, j) = 1.0 / d;
    }
  return f;
}

/// F = (lap v0 - r |grad v0|^2 / 2 - s(., T/2) p0) f from precomputed derivatives.
inline Field compute_F(const Field& v0_lap, const Field& v0_x1, const Field& v0_x2,
                       const Field& p0, const Field& r, const Field& s, const Field& f) {
  require(s.rank() == Rank::space_time, "compute_F: s must be a space-time field");
  const auto& g = p0.grid();
  const Field s_mid = time_slice(s, g.mid());
  Field F(g, Rank::spatial);
  for (std::size_t q = 0; q < g.spatial_size(); ++q) {
    const double grad_sq = v0_x1[q] * v0_x1[q] + v0_x2[q] * v0_x2[q];
    F[q] = (v0_lap[q] - 0.5 * r[q] * grad_sq - s_mid[q] * p0[q]) * f[q];
  }
  return F;
}

/// compute_F with the grid's stencils for the derivatives of v0.
inline Field compute_F(const Field& v0, const Field& p0, const Field& r, const Field& s,
                       const Field& f) {
  return compute_F(laplacian(v0), ddx1(v0), ddx2(v0), p0, r, s, f);
}

/// Switches used by verification tests.
struct ObjectiveTerms {
  bool nonlinear = true;        // false drops the interaction and bilinear terms
  double residual_scale = 1.0;  // multiplies both weighted residual sums
};

class ObjectiveContext {
 public:
  ObjectiveContext(const ObservationData& obs, const DataDerivatives& der, const Field& s,
                   const Field& s_t, const Field& r, const KernelSpec& kernel,
                   const CarlemanParams& carleman, double beta, ObjectiveTerms terms = {})
      : grid_(obs.grid()),
        carleman_(carleman),
        beta_(beta),
        terms_(terms),
        interaction_(obs.grid(), kernel),
        v0_(obs.v0),
        p0_(obs.p0),
        v0_x1_(der.v0_x1),
        v0_x2_(der.v0_x2),
        r_(r),
        s_(s),
        s_t_(s_t) {
    require(beta >= 0.0, "objective: beta must be non-negative");
    require(s.rank() == Rank::space_time && s.grid() == grid_, "objective: s grid mismatch");
    require(s_t.rank() == Rank::space_time && s_t.grid() == grid_, "objective: s_t grid mismatch");
    require(r.rank() == Rank::spatial && r.grid() == grid_, "objective: r grid mismatch");
    require(grid_.n1 >= 4 && grid_.n2 >= 4, "objective: need at least 4 nodes per spatial axis");
    const Denominator den = denominator_field(p0_, kernel);
    denominator_min_ = den.min_abs;
    f_ = compute_f(p0_, kernel);
    F_ = compute_F(der.v0_lap, der.v0_x1, der.v0_x2, p0_, r_, s_, f_);
    build_weights();
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  const CarlemanParams& carleman() const { return carleman_; }
  double beta() const { return beta_; }
  const ObjectiveTerms& terms() const { return terms_; }
  const Field& f() const { return f_; }
  const Field& F() const { return F_; }
  const Field& weights() const { return weights_; }
  double denominator_min() const { return denominator_min_; }
  double l1_factor() const { return std::pow(carleman_.lambda(), 1.5); }

  struct Evaluation {
    double value = 0.0;
    double residual_part = 0.0;
    double regularization = 0.0;
    std::optional<Iterate> gradient;
  };

  Field residual_L1(const Iterate& z) const { return forward(z).l1; }
  Field residual_L2(const Iterate& z) const { return forward(z).l2; }

  Evaluation evaluate(const Iterate& z, bool with_gradient) const {
    check(z);
    const Tape tp = forward(z);
    Evaluation ev;
    const double c1 = l1_factor() * terms_.residual_scale, c2 = terms_.residual_scale;
    double acc = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k)
      acc += weights_[k] * (c1 * tp.l1[k] * tp.l1[k] + c2 * tp.l2[k] * tp.l2[k]);
    ev.residual_part = acc;
    ev.regularization = beta_ > 0.0 ? beta_ * h_tilde_norm_sq(z) : 0.0;
    ev.value = ev.residual_part + ev.regularization;
    if (with_gradient) ev.gradient = backward(z, tp, c1, c2);
    return ev;
  }

  double value(const Iterate& z) const { return evaluate(z, false).value; }
  Iterate gradient(const Iterate& z) const { return *evaluate(z, true).gradient; }

 private:
  struct Tape {
    Field vu, vm;      // V[u], V[m]
    Field u1, u2;      // grad u
    Field g1, g2;      // grad v = grad V[u] + grad v0
    Field pm;          // p = V[m] + p0
    Field im;          // interaction integral of m
    Field ksub;        // spatial: f u(., T/2) + F
    Field l1, l2;      // masked residuals
  };

  void check(const Iterate& z) const {
    require(z.u.rank() == Rank::space_time && z.m.rank() == Rank::space_time,
            "objective: iterate must hold space-time fields");
    require(z.u.grid() == grid_ && z.m.grid() == grid_, "objective: iterate grid mismatch");
  }

  void build_weights() {
    const Field w = quadrature_weights(grid_, Rank::space_time);
    weights_ = Field(grid_, Rank::space_time);
    for (std::size_t i = 1; i + 1 < grid_.n1; ++i)
      for (std::size_t j = 1; j + 1 < grid_.n2; ++j)
        for (std::size_t n = 0; n < grid_.nt; ++n) {
          const double lw = carleman_.balanced_log_weight(grid_.x1(i), grid_.t(n));
          weights_.at(i, j, n) = w.at(i, j, n) * std::exp(lw);
        }
  }

  static void mask_boundary(Field& f) {
    const auto& g = f.grid();
    for (std::size_t i = 0; i < g.n1; ++i)
      for (std::size_t j = 0; j < g.n2; ++j)
        if (g.is_boundary(i, j))
          for (std::size_t n = 0; n < g.nt; ++n) f.at(i, j, n) = 0.0;
  }

  // Node offset of the neighbour along axis (0: x1, 1: x2) and spacing.
  std::size_t axis_stride(int axis) const { return axis == 0 ? grid_.n2 * grid_.nt : grid_.nt; }
  double axis_step(int axis) const { return axis == 0 ? grid_.h1() : grid_.h2(); }
  const Field& v0_grad(int axis) const { return axis == 0 ? v0_x1_ : v0_x2_; }

  // Visit every half-node edge (lo node, hi node, spatial lo, spatial hi) used
  // by the flux divergence at interior nodes.
  template <class Visit>
  void for_each_edge(int axis, Visit&& visit) const {
    const std::size_t n1 = grid_.n1, n2 = grid_.n2;
    if (axis == 0) {
      for (std::size_t i = 0; i + 1 < n1; ++i)
        for (std::size_t j = 1; j + 1 < n2; ++j) visit(grid_.sidx(i, j), grid_.sidx(i + 1, j));
    } else {
      for (std::size_t i = 1; i + 1 < n1; ++i)
        for (std::size_t j = 0; j + 1 < n2; ++j) visit(grid_.sidx(i, j), grid_.sidx(i, j + 1));
    }
  }

  // out += div(r q grad w) with half-node fluxes r_e avg(q) (dw/dh + background),
  // where background is the edge average of a spatial gradient field (may be null).
  void add_flux_divergence(Field& out, double sign, const Field& q, const Field& w,
                           const Field* background, int axis) const {
    const std::size_t nt = grid_.nt;
    const double h = axis_step(axis);
    for_each_edge(axis, [&](std::size_t lo, std::size_t hi) {
      const double re = 0.5 * (r_[lo] + r_[hi]);
      const double bg = background ? 0.5 * ((*background)[lo] + (*background)[hi]) : 0.0;
      for (std::size_t n = 0; n < nt; ++n) {
        const std::size_t a = lo * nt + n, b = hi * nt + n;
        const double flux = re * 0.5 * (q[a] + q[b]) * ((w[b] - w[a]) / h + bg);
        out[a] += sign * flux / h;
        out[b] -= sign * flux / h;
      }
    });
  }

  // Adjoint of add_flux_divergence against multiplier rho: accumulates into gq, gw.
  void flux_divergence_adjoint(const Field& rho, double sign, const Field& q, const Field& w,
                               const Field* background, int axis, Field& gq, Field& gw) const {
    const std::size_t nt = grid_.nt;
    const double h = axis_step(axis);
    for_each_edge(axis, [&](std::size_t lo, std::size_t hi) {
      const double re = 0.5 * (r_[lo] + r_[hi]);
      const double bg = background ? 0.5 * ((*background)[lo] + (*background)[hi]) : 0.0;
      for (std::size_t n = 0; n < nt; ++n) {
        const std::size_t a = lo * nt + n, b = hi * nt + n;
        const double sigma = sign * (rho[a] - rho[b]) / h;
        const double grad = (w[b] - w[a]) / h + bg;
        const double qbar = 0.5 * (q[a] + q[b]);
        gq[a] += sigma * re * 0.5 * grad;
        gq[b] += sigma * re * 0.5 * grad;
        gw[b] += sigma * re * qbar / h;
        gw[a] -= sigma * re * qbar / h;
      }
    });
  }

  Tape forward(const Iterate& z) const {
    check(z);
    const auto& g = grid_;
    const std::size_t nt = g.nt, mid = g.mid();
    const bool nl = terms_.nonlinear;
    Tape tp;
    tp.vu = volterra(z.u);
    tp.vm = volterra(z.m);
    tp.u1 = diff(z.u, Axis::x1);
    tp.u2 = diff(z.u, Axis::x2);
    tp.g1 = nl ? diff(tp.vu, Axis::x1) : Field(g, Rank::space_time);
    tp.g2 = nl ? diff(tp.vu, Axis::x2) : Field(g, Rank::space_time);
    tp.pm = tp.vm;
    for (std::size_t s = 0; s < g.spatial_size(); ++s)
      for (std::size_t n = 0; n < nt; ++n) {
        const std::size_t q = s * nt + n;
        tp.g1[q] += v0_x1_[s];
        tp.g2[q] += v0_x2_[s];
        tp.pm[q] += p0_[s];
      }
    tp.im = interaction_.apply(z.m);
    tp.ksub = Field(g, Rank::spatial);
    for (std::size_t s = 0; s < g.spatial_size(); ++s)
      tp.ksub[s] = f_[s] * z.u[s * nt + mid] + F_[s];

    Field l1 = diff(z.u, Axis::t) + laplacian(z.u);
    for (std::size_t s = 0; s < g.spatial_size(); ++s)
      for (std::size_t n = 0; n < nt; ++n) {
        const std::size_t q = s * nt + n;
        l1[q] -= r_[s] * (tp.u1[q] * tp.g1[q] + tp.u2[q] * tp.g2[q]);
        if (nl) l1[q] -= tp.ksub[s] * tp.im[q];
        l1[q] -= s_[q] * z.m[q] + s_t_[q] * tp.pm[q];
      }

    Field l2 = diff(z.m, Axis::t) - laplacian(z.m);
    const Field zero(g, Rank::space_time);
    const Field& vu_part = nl ? tp.vu : zero;
    for (int axis = 0; axis < 2; ++axis) {
      // div[r m grad(V[u] + v0)] and div[r grad u (V[m] + p0)]
      add_flux_divergence(l2, -1.0, z.m, vu_part, &v0_grad(axis), axis);
      add_flux_divergence(l2, -1.0, nl ? tp.pm : broadcast_time(p0_), z.u, nullptr, axis);
    }
    mask_boundary(l1);
    mask_boundary(l2);
    tp.l1 = std::move(l1);
    tp.l2 = std::move(l2);
    return tp;
  }

  Iterate backward(const Iterate& z, const Tape& tp, double c1, double c2) const {
    const auto& g = grid_;
    const std::size_t nt = g.nt, mid = g.mid();
    const bool nl = terms_.nonlinear;
    Field rho1(g, Rank::space_time), rho2(g, Rank::space_time);
    for (std::size_t k = 0; k < rho1.size(); ++k) {
      rho1[k] = 2.0 * c1 * weights_[k] * tp.l1[k];
      rho2[k] = 2.0 * c2 * weights_[k] * tp.l2[k];
    }
    Field gu = diff(rho1, Axis::t, true) + laplacian(rho1, true);
    Field gm = diff(rho2, Axis::t, true) - laplacian(rho2, true);
    Field gvu(g, Rank::space_time), gpm(g, Rank::space_time);

    // L1: -r grad u . grad v, -k I[m], -s m, -s_t p
    Field a1(g, Rank::space_time), a2(g, Rank::space_time), b1(g, Rank::space_time),
        b2(g, Rank::space_time), c(g, Rank::space_time);
    for (std::size_t s = 0; s < g.spatial_size(); ++s)
      for (std::size_t n = 0; n < nt; ++n) {
        const std::size_t q = s * nt + n;
        const double ar = -r_[s] * rho1[q];
        a1[q] = ar * tp.g1[q];
        a2[q] = ar * tp.g2[q];
        b1[q] = ar * tp.u1[q];
        b2[q] = ar * tp.u2[q];
        gm[q] -= s_[q] * rho1[q];
        gpm[q] -= s_t_[q] * rho1[q];
        c[q] = nl ? -rho1[q] * tp.ksub[s] : 0.0;
      }
    gu += diff(a1, Axis::x1, true);
    gu += diff(a2, Axis::x2, true);
    if (nl) {
      gvu += diff(b1, Axis::x1, true);
      gvu += diff(b2, Axis::x2, true);
      gm += interaction_.apply_transpose(c);
      for (std::size_t s = 0; s < g.spatial_size(); ++s) {
        double acc = 0.0;
        for (std::size_t n = 0; n < nt; ++n) acc -= rho1[s * nt + n] * tp.im[s * nt + n];
        gu[s * nt + mid] += f_[s] * acc;
      }
    }

    // L2 flux terms
    const Field zero(g, Rank::space_time);
    const Field p_const = nl ? Field() : broadcast_time(p0_);
    Field discard(g, Rank::space_time);
    for (int axis = 0; axis < 2; ++axis) {
      flux_divergence_adjoint(rho2, -1.0, z.m, nl ? tp.vu : zero, &v0_grad(axis), axis, gm,
                              nl ? gvu : discard);
      flux_divergence_adjoint(rho2, -1.0, nl ? tp.pm : p_const, z.u, nullptr, axis,
                              nl ? gpm : discard, gu);
    }
    gu += volterra_transpose(gvu);
    gm += volterra_transpose(gpm);
    if (beta_ > 0.0) {
      Field ru = h2_norm_sq_gradient(z.u), rm = h2_norm_sq_gradient(z.m);
      gu += beta_ * ru;
      gm += beta_ * rm;
    }
    return {std::move(gu), std::move(gm)};
  }

  SpaceTimeGrid grid_;
  CarlemanParams carleman_;
  double beta_;
  ObjectiveTerms terms_;
  InteractionOperator interaction_;
  Field v0_, p0_, v0_x1_, v0_x2_, r_, s_, s_t_;
  Field f_, F_, weights_;
  double denominator_min_ = 0.0;
};

inline Field residual_L1(const Iterate& z, const ObjectiveContext& ctx) {
  return ctx.residual_L1(z);
}
inline Field residual_L2(const Iterate& z, const ObjectiveContext& ctx) {
  return ctx.residual_L2(z);
}
inline double assemble_J(const Iterate& z, const ObjectiveContext& ctx) { return ctx.value(z); }
inline Iterate gradient_J(const Iterate& z, const ObjectiveContext& ctx) {
  return ctx.gradient(z);
}

/// J(z2) - J(z1) - <grad J(z1), z2 - z1>. Both iterates must carry the same
/// lateral boundary values.
inline double convexity_gap(const Iterate& z1, const Iterate& z2, const ObjectiveContext& ctx) {
  const auto& g = ctx.grid();
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      if (!g.is_boundary(i, j)) continue;
      for (std::size_t n = 0; n < g.nt; ++n) {
        const double du = std::abs(z1.u.at(i, j, n) - z2.u.at(i, j, n));
        const double dm = std::abs(z1.m.at(i, j, n) - z2.m.at(i, j, n));
        const double scale = 1.0 + std::abs(z1.u.at(i, j, n)) + std::abs(z1.m.at(i, j, n));
        if (du > 1e-12 * scale || dm > 1e-12 * scale)
          throw ContractError("convexity_gap: iterates carry different boundary data");
      }
    }
  const auto e1 = ctx.evaluate(z1, true);
  const double j2 = ctx.value(z2);
  return j2 - e1.value - dot(*e1.gradient, z2 - z1);
}

}  // namespace mfgcvx
