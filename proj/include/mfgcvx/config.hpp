#pragma once

// Experiment configuration as nested JSON sections. Every key is optional;
// missing keys keep the defaults below, unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "mfgcvx/carleman.hpp"
#include "mfgcvx/grid.hpp"
#include "mfgcvx/inverse.hpp"
#include "mfgcvx/noise.hpp"
#include "mfgcvx/phantoms.hpp"

namespace mfgcvx {

/// Choice of (v**, p0**, g02**) for data generation.
///   odd:     p0** = x1 x2,      g02** = (t + 1) x1 x2
///   shifted: p0** = x1 x2 + 2,  g02** = (t + 1)(x1 x2 + 2)
/// Both use v** = 0.1 cos(pi x1) sin(pi x2)(t^2 + 1).
enum class DataPreset { shifted, odd };

inline std::string_view to_string(DataPreset p) {
  return p == DataPreset::odd ? "odd" : "shifted";
}

inline DataPreset data_preset_from_string(std::string_view s) {
  if (s == "odd") return DataPreset::odd;
  if (s == "shifted") return DataPreset::shifted;
  throw ContractError("unknown data preset '" + std::string(s) + "' (expected shifted or odd)");
}

struct ExperimentConfig {
  double a = 1.0, b = 2.0, half_width = 0.5, final_time = 1.0;
  double fine_space = 1.0 / 80, fine_time = 1.0 / 320;
  double coarse_space = 1.0 / 20, coarse_time = 1.0 / 10;
  DataPreset preset = DataPreset::shifted;
  double alpha = 0.2;
  double sigma = 0.2;  // +inf selects the constant kernel
  Phantom phantom;
  NoiseSpec noise;
  SolverConfig solver;
  std::string output;

  SpaceTimeGrid fine_grid() const {
    return SpaceTimeGrid::with_steps(a, b, half_width, final_time, fine_space, fine_time);
  }
  SpaceTimeGrid coarse_grid() const {
    return SpaceTimeGrid::with_steps(a, b, half_width, final_time, coarse_space, coarse_time);
  }
  CarlemanParams carleman() const {
    return CarlemanParams::from_alpha(solver.lambda, alpha, b, final_time);
  }

  void validate() const {
    const SpaceTimeGrid f = fine_grid(), c = coarse_grid();
    require(subsample_ratio(f.n1, c.n1) && subsample_ratio(f.n2, c.n2) &&
                subsample_ratio(f.nt, c.nt),
            "config: coarse grid is not a divisor-aligned subsample of the fine grid");
    require(c.n1 >= 21 && c.n2 >= 21, "config: letter phantoms need at least 21 x 21 coarse nodes");
    require(sigma > 0.0, "config: kernel sigma must be positive");
    require(phantom.contrast > 0.0, "config: contrast must be positive");
    require(noise.delta >= 0.0, "config: noise delta must be non-negative");
    solver.validate();
    (void)carleman();
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where,
                           std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ContractError("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ContractError("config: unknown key '" + where + "." + k + "'");
}

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline double get_number_or_inf(const nlohmann::json& j) {
  if (j.is_string() && (j == "inf" || j == "infinity"))
    return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::get_to;
  ExperimentConfig c;
  detail::reject_unknown(j, "", {"geometry", "grids", "data", "carleman", "kernel", "phantom",
                                 "noise", "solver", "output"});
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    detail::reject_unknown(g, "geometry", {"a", "b", "half_width", "final_time"});
    get_to(g, "a", c.a);
    get_to(g, "b", c.b);
    get_to(g, "half_width", c.half_width);
    get_to(g, "final_time", c.final_time);
  }
  if (j.contains("grids")) {
    const auto& g = j["grids"];
    detail::reject_unknown(g, "grids", {"fine_space", "fine_time", "coarse_space", "coarse_time"});
    get_to(g, "fine_space", c.fine_space);
    get_to(g, "fine_time", c.fine_time);
    get_to(g, "coarse_space", c.coarse_space);
    get_to(g, "coarse_time", c.coarse_time);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::reject_unknown(d, "data", {"preset"});
    if (d.contains("preset")) c.preset = data_preset_from_string(d["preset"].get<std::string>());
  }
  if (j.contains("carleman")) {
    const auto& d = j["carleman"];
    detail::reject_unknown(d, "carleman", {"lambda", "alpha", "beta"});
    get_to(d, "lambda", c.solver.lambda);
    get_to(d, "alpha", c.alpha);
    get_to(d, "beta", c.solver.beta);
  }
  if (j.contains("kernel")) {
    const auto& d = j["kernel"];
    detail::reject_unknown(d, "kernel", {"type", "sigma"});
    if (d.contains("type") && d["type"] != "gaussian")
      throw ContractError("config: only the gaussian kernel is supported by experiments");
    if (d.contains("sigma")) c.sigma = detail::get_number_or_inf(d["sigma"]);
  }
  if (j.contains("phantom")) {
    const auto& d = j["phantom"];
    detail::reject_unknown(d, "phantom", {"letter", "contrast"});
    if (d.contains("letter")) c.phantom.letter = letter_from_string(d["letter"].get<std::string>());
    get_to(d, "contrast", c.phantom.contrast);
  }
  if (j.contains("noise")) {
    const auto& d = j["noise"];
    detail::reject_unknown(d, "noise", {"delta", "seed"});
    get_to(d, "delta", c.noise.delta);
    get_to(d, "seed", c.noise.seed);
  }
  if (j.contains("solver")) {
    const auto& d = j["solver"];
    detail::reject_unknown(d, "solver", {"step", "backtrack", "growth", "step_rule",
                                         "max_iterations", "tolerance", "neumann"});
    get_to(d, "step", c.solver.step);
    get_to(d, "backtrack", c.solver.backtrack);
    get_to(d, "growth", c.solver.growth);
    get_to(d, "max_iterations", c.solver.max_iterations);
    get_to(d, "tolerance", c.solver.tolerance);
    if (d.contains("step_rule"))
      c.solver.step_rule = step_rule_from_string(d["step_rule"].get<std::string>());
    if (d.contains("neumann"))
      c.solver.neumann = neumann_variant_from_string(d["neumann"].get<std::string>());
  }
  get_to(j, "output", c.output);
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["geometry"] = {{"a", c.a}, {"b", c.b}, {"half_width", c.half_width},
                   {"final_time", c.final_time}};
  j["grids"] = {{"fine_space", c.fine_space},
                {"fine_time", c.fine_time},
                {"coarse_space", c.coarse_space},
                {"coarse_time", c.coarse_time}};
  j["data"] = {{"preset", std::string(to_string(c.preset))}};
  j["carleman"] = {{"lambda", c.solver.lambda}, {"alpha", c.alpha}, {"beta", c.solver.beta}};
  j["kernel"] = {{"type", "gaussian"}};
  if (std::isinf(c.sigma))
    j["kernel"]["sigma"] = "inf";
  else
    j["kernel"]["sigma"] = c.sigma;
  j["phantom"] = {{"letter", std::string(to_string(c.phantom.letter))},
                  {"contrast", c.phantom.contrast}};
  j["noise"] = {{"delta", c.noise.delta}, {"seed", c.noise.seed}};
  j["solver"] = {{"step", c.solver.step},
                 {"backtrack", c.solver.backtrack},
                 {"growth", c.solver.growth},
                 {"step_rule", std::string(to_string(c.solver.step_rule))},
                 {"max_iterations", c.solver.max_iterations},
                 {"tolerance", c.solver.tolerance},
                 {"neumann", std::string(to_string(c.solver.neumann))}};
  j["output"] = c.output;
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config '" + path.string() + "': " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config '" + path.string() + "': " + e.what());
  }
}

}  // namespace mfgcvx
