#pragma once

// Projected gradient descent for J over the affine set of iterates that
// carry the lateral Cauchy data, and the final k = u(., T/2) f + F.
//
// Constrained nodes: every lateral-boundary node (Dirichlet data) and the
// layer x1 = b - h1 at interior x2 (one-sided Neumann relation, solved for
// that layer in terms of the layer x1 = b - 2 h1). Everything else is free.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mfgcvx/forward.hpp"
#include "mfgcvx/objective.hpp"

namespace mfgcvx {

/// Which one-sided relation ties the x1 = b - h1 layer to the Neumann data.
///   printed:  -4 w_{N-1} + w_{N-2} = 2 h1 dt g0(b) - 3 dt g1(b)
///   standard: -4 w_{N-1} + w_{N-2} = 2 h1 dt g1(b) - 3 dt g0(b)
/// The standard form is (3 w_N - 4 w_{N-1} + w_{N-2}) / (2 h1) = dt g1 with
/// w_N = dt g0(b).
enum class NeumannVariant { printed, standard };

inline std::string_view to_string(NeumannVariant v) {
  return v == NeumannVariant::printed ? "printed" : "standard";
}

inline NeumannVariant neumann_variant_from_string(std::string_view s) {
  if (s == "printed") return NeumannVariant::printed;
  if (s == "standard") return NeumannVariant::standard;
  throw ContractError("unknown neumann variant '" + std::string(s) +
                      "' (expected printed or standard)");
}

/// Trial step for each line search: the last accepted mu (times growth) or
/// the Barzilai-Borwein quotient |s|^2 / <s, y> of the previous step.
enum class StepRule { carry, barzilai_borwein };

inline std::string_view to_string(StepRule r) {
  return r == StepRule::carry ? "carry" : "barzilai-borwein";
}

inline StepRule step_rule_from_string(std::string_view s) {
  if (s == "carry") return StepRule::carry;
  if (s == "barzilai-borwein" || s == "bb") return StepRule::barzilai_borwein;
  throw ContractError("unknown step rule '" + std::string(s) + "' (expected carry or barzilai-borwein)");
}

struct SolverConfig {
  double lambda = 3.0;
  double beta = 0.001;
  double step = 0.1;            // initial mu
  double backtrack = 0.5;       // mu <- backtrack * mu on rejection
  double growth = 1.0;          // mu <- growth * mu after an accepted step
  std::size_t max_iterations = 100000;
  double tolerance = 1e-2;      // stop when max |reduced gradient| < tolerance
  NeumannVariant neumann = NeumannVariant::standard;
  StepRule step_rule = StepRule::barzilai_borwein;

  void validate() const {
    require(step > 0.0, "solver: step must be positive");
    require(backtrack > 0.0 && backtrack < 1.0, "solver: backtracking factor must lie in (0, 1)");
    require(growth >= 1.0, "solver: growth factor must be at least 1");
    require(tolerance > 0.0, "solver: gradient threshold must be positive");
    require(lambda >= 0.0, "solver: lambda must be non-negative");
    require(beta >= 0.0, "solver: beta must be non-negative");
  }
};

/// Boundary-trace value at spatial boundary node (i, j), time n.
inline double trace_at(const Field& trace, std::size_t i, std::size_t j, std::size_t n) {
  const auto& g = trace.grid();
  return trace[g.boundary_index(i, j) * g.nt + n];
}

/// Start point: at every interior node the average of the x1-direction and
/// x2-direction linear blends of the Dirichlet data dt g0 on the opposite
/// faces; on S_T the data itself.
inline Iterate initial_guess(const Field& dt_g01, const Field& dt_g02) {
  require(dt_g01.rank() == Rank::boundary_trace && dt_g02.rank() == Rank::boundary_trace,
          "initial_guess: need boundary traces");
  const auto& g = dt_g01.grid();
  Iterate z = Iterate::zeros(g);
  const double a = g.a, b = g.b, A = g.half_width;
  const std::size_t last1 = g.n1 - 1, last2 = g.n2 - 1;
  auto blend = [&](const Field& tr, Field& out) {
    for (std::size_t i = 0; i < g.n1; ++i)
      for (std::size_t j = 0; j < g.n2; ++j)
        for (std::size_t n = 0; n < g.nt; ++n) {
          if (g.is_boundary(i, j)) {
            out.at(i, j, n) = trace_at(tr, i, j, n);
            continue;
          }
          const double x1 = g.x1(i), x2 = g.x2(j);
          const double along1 = (b - x1) / (b - a) * trace_at(tr, 0, j, n) +
                                (x1 - a) / (b - a) * trace_at(tr, last1, j, n);
          const double along2 = (A - x2) / (2 * A) * trace_at(tr, i, 0, n) +
                                (x2 + A) / (2 * A) * trace_at(tr, i, last2, n);
          out.at(i, j, n) = 0.5 * along1 + 0.5 * along2;
        }
  };
  blend(dt_g01, z.u);
  blend(dt_g02, z.m);
  return z;
}

inline Iterate initial_guess(const ObservationData& obs) {
  return initial_guess(obs.dt_g01, obs.dt_g02);
}

/// Time derivatives of the lateral data that define the constraint set.
struct ConstraintData {
  Field dt_g01, dt_g02;  // boundary traces
  Field dt_g11, dt_g12;  // gamma traces
  NeumannVariant neumann = NeumannVariant::standard;

  static ConstraintData from(const DataDerivatives& d, NeumannVariant v) {
    return {d.dt_g01, d.dt_g02, d.dt_g11, d.dt_g12, v};
  }
};

inline Iterate project_constraints(Iterate z, const ConstraintData& c) {
  const auto& g = z.grid();
  require(g.n1 >= 4, "project_constraints: need at least 4 nodes along x1");
  const std::size_t nt = g.nt, N = g.n1 - 1;
  const double h = g.h1();
  auto apply = [&](Field& w, const Field& d0, const Field& d1) {
    for (std::size_t i = 0; i < g.n1; ++i)
      for (std::size_t j = 0; j < g.n2; ++j)
        if (g.is_boundary(i, j))
          for (std::size_t n = 0; n < nt; ++n) w.at(i, j, n) = trace_at(d0, i, j, n);
    for (std::size_t j = 1; j + 1 < g.n2; ++j)
      for (std::size_t n = 0; n < nt; ++n) {
        const double g0b = trace_at(d0, N, j, n), g1b = d1[j * nt + n];
        const double rhs = c.neumann == NeumannVariant::printed ? 2 * h * g0b - 3 * g1b
                                                                : 2 * h * g1b - 3 * g0b;
        w.at(N - 1, j, n) = (w.at(N - 2, j, n) - rhs) / 4.0;
      }
  };
  apply(z.u, c.dt_g01, c.dt_g11);
  apply(z.m, c.dt_g02, c.dt_g12);
  return z;
}

/// True for nodes whose values are set by project_constraints.
inline bool is_constrained(const SpaceTimeGrid& g, std::size_t i, std::size_t j) {
  return g.is_boundary(i, j) || i == g.n1 - 2;
}

/// Gradient with respect to the free nodes of the composition J(P(z)):
/// constrained entries are zero and the x1 = b - 2 h1 layer picks up 1/4
/// of the x1 = b - h1 layer's gradient.
inline Iterate reduce_gradient(Iterate grad) {
  const auto& g = grad.grid();
  const std::size_t nt = g.nt, N = g.n1 - 1;
  auto apply = [&](Field& w) {
    for (std::size_t j = 1; j + 1 < g.n2; ++j)
      for (std::size_t n = 0; n < nt; ++n) w.at(N - 2, j, n) += 0.25 * w.at(N - 1, j, n);
    for (std::size_t i = 0; i < g.n1; ++i)
      for (std::size_t j = 0; j < g.n2; ++j)
        if (is_constrained(g, i, j))
          for (std::size_t n = 0; n < nt; ++n) w.at(i, j, n) = 0.0;
  };
  apply(grad.u);
  apply(grad.m);
  return grad;
}

inline double max_norm(const Iterate& z) {
  return std::max(max_abs(z.u.values()), max_abs(z.m.values()));
}

/// k = u(., T/2) f + F.
inline Field recover_k(const Field& u, const ObjectiveContext& ctx) {
  require(u.rank() == Rank::space_time && u.grid() == ctx.grid(), "recover_k: grid mismatch");
  const auto& g = ctx.grid();
  Field k(g, Rank::spatial);
  for (std::size_t s = 0; s < g.spatial_size(); ++s)
    k[s] = u[s * g.nt + g.mid()] * ctx.f()[s] + ctx.F()[s];
  return k;
}

struct ReconstructionResult {
  Field k_comp;
  Iterate final_iterate;
  std::vector<double> J_history;          // J at each accepted iterate, starting point first
  std::vector<double> grad_norm_history;  // max-norm of the reduced gradient, same indexing
  std::vector<double> step_history;       // mu used for each accepted step
  std::size_t iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
};

inline ReconstructionResult descend(const SolverConfig& cfg, const ObjectiveContext& ctx,
                                    const ConstraintData& cons, Iterate start) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ReconstructionResult res;
  Iterate z = project_constraints(std::move(start), cons);
  auto ev = ctx.evaluate(z, true);
  if (!std::isfinite(ev.value)) throw NumericalError("descend: non-finite J at the start point");
  double mu = cfg.step;
  Iterate gr = reduce_gradient(std::move(*ev.gradient));
  double gnorm = max_norm(gr);
  res.J_history.push_back(ev.value);
  res.grad_norm_history.push_back(gnorm);
  while (gnorm >= cfg.tolerance && res.iterations < cfg.max_iterations) {
    double jc = 0.0;
    Iterate cand;
    for (;;) {
      cand = z;
      cand.axpy(-mu, gr);
      cand = project_constraints(std::move(cand), cons);
      jc = ctx.value(cand);
      if (!std::isfinite(jc)) throw NumericalError("descend: non-finite J at a trial point");
      if (jc < ev.value) break;
      mu *= cfg.backtrack;
      if (mu < 1e-14) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "descend: line search stalled at iteration %zu (J = %.6e, |grad| = %.3e)",
                      res.iterations, ev.value, gnorm);
        throw NumericalError(buf);
      }
    }
    Iterate step_vec = cand - z;
    z = std::move(cand);
    ev = ctx.evaluate(z, true);
    Iterate g_new = reduce_gradient(std::move(*ev.gradient));
    res.step_history.push_back(mu);
    if (cfg.step_rule == StepRule::barzilai_borwein) {
      const double sy = dot(step_vec, g_new - gr);
      const double ss = dot(step_vec, step_vec);
      mu = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : cfg.step;
    } else {
      mu *= cfg.growth;
    }
    gr = std::move(g_new);
    gnorm = max_norm(gr);
    res.J_history.push_back(ev.value);
    res.grad_norm_history.push_back(gnorm);
    ++res.iterations;
  }
  res.converged = gnorm < cfg.tolerance;
  res.k_comp = recover_k(z.u, ctx);
  res.final_iterate = std::move(z);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace mfgcvx
