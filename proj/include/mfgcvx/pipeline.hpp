#pragma once

// End-to-end runners shared by the command-line tool and the acceptance
// suite: generate a dataset from a config, invert it, sweep lambda.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mfgcvx/config.hpp"
#include "mfgcvx/forward.hpp"
#include "mfgcvx/inverse.hpp"
#include "mfgcvx/noise.hpp"
#include "mfgcvx/objective.hpp"
#include "mfgcvx/phantoms.hpp"

namespace mfgcvx {

inline double preset_value(double x1, double x2, double t) {
  return 0.1 * std::cos(std::numbers::pi * x1) * std::sin(std::numbers::pi * x2) * (t * t + 1.0);
}

inline ForwardSpec make_forward_spec(const ExperimentConfig& cfg) {
  cfg.validate();
  ForwardSpec spec;
  spec.grid = cfg.fine_grid();
  spec.value = preset_value;
  const double shift = cfg.preset == DataPreset::shifted ? 2.0 : 0.0;
  spec.initial_density = [shift](double x1, double x2) { return x1 * x2 + shift; };
  spec.boundary_density = [shift](double x1, double x2, double t) {
    return (t + 1.0) * (x1 * x2 + shift);
  };
  spec.k_true = make_k(cfg.phantom, spec.grid);
  spec.kernel = GaussianDelta{cfg.sigma};
  return spec;
}

/// Inputs of one inversion on the coarse grid.
struct Dataset {
  ObservationData observations;
  Field s, s_t;   // local interaction coefficient and its time derivative
  Field k_true;   // for scoring only
  Field mask;     // inclusion mask, for scoring only
};

inline Dataset generate_dataset(const ExperimentConfig& cfg, GeneratedData* full = nullptr) {
  const ForwardSpec spec = make_forward_spec(cfg);
  GeneratedData gen = generate(spec, cfg.coarse_grid());
  Dataset d;
  d.observations = gen.observations;
  d.s = gen.s_coarse;
  d.s_t = gen.s_t_coarse;
  d.k_true = gen.k_true_coarse;
  d.mask = restrict_to(raster_letter(cfg.phantom.letter, spec.grid), cfg.coarse_grid());
  if (full) *full = std::move(gen);
  return d;
}

struct InversionOutcome {
  ReconstructionResult result;
  Metrics metrics;
  double denominator_min = 0.0;
  bool noisy = false;
  ObservationData used;  // observations after noise injection
};

/// Noise (if delta > 0) -> derivatives (splines if noisy, stencils otherwise)
/// -> objective -> descent -> k -> metrics.
inline InversionOutcome invert_dataset(const ExperimentConfig& cfg, const Dataset& data) {
  cfg.validate();
  InversionOutcome out;
  out.noisy = cfg.noise.delta > 0.0;
  out.used = out.noisy ? inject(data.observations, cfg.noise) : data.observations;
  const DataDerivatives der =
      out.noisy ? smooth_observations(out.used) : stencil_derivatives(out.used);
  const auto& g = out.used.grid();
  const Field r(g, Rank::spatial, 1.0);
  const ObjectiveContext ctx(out.used, der, data.s, data.s_t, r, GaussianDelta{cfg.sigma},
                             cfg.carleman(), cfg.solver.beta);
  out.denominator_min = ctx.denominator_min();
  const ConstraintData cons = ConstraintData::from(der, cfg.solver.neumann);
  out.result = descend(cfg.solver, ctx, cons, initial_guess(der.dt_g01, der.dt_g02));
  out.metrics = score(out.result.k_comp, data.k_true, data.mask);
  return out;
}

struct SweepPoint {
  double lambda = 0.0;
  std::optional<InversionOutcome> outcome;
  std::string error;  // set when the inversion failed
};

inline std::vector<SweepPoint> sweep_lambda(const ExperimentConfig& cfg, const Dataset& data,
                                            const std::vector<double>& lambdas) {
  require(!lambdas.empty(), "sweep-lambda: empty lambda list");
  std::vector<SweepPoint> out;
  for (double lambda : lambdas) {
    ExperimentConfig c = cfg;
    c.solver.lambda = lambda;
    SweepPoint p;
    p.lambda = lambda;
    try {
      p.outcome = invert_dataset(c, data);
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mfgcvx
