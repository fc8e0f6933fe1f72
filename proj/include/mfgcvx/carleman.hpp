#pragma once

// Carleman weight phi(x,t) = exp[2 lambda (x1^2 - |t - T/2|^(1+alpha))] and a
// numerical certifier for the weighted Volterra estimate
//
//   int_{-d}^{d} e^{-2 lambda |t|^{1+alpha}} (int_0^t f)^2 dt
//       <= lambda^{-3/2} C(d, alpha) int_{-d}^{d} f^2 e^{-2 lambda |t|^{1+alpha}} dt,
//   C(d, alpha) = d^{(1 - 3 alpha)/2} / (sqrt(2) (1 + alpha)^{3/2}).

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "mfgcvx/error.hpp"

namespace mfgcvx {

class CarlemanParams {
 public:
  /// alpha = num / den with both odd, alpha in (0, 1/3).
  CarlemanParams(double lambda, long num, long den, double b, double final_time)
      : lambda_(lambda), num_(num), den_(den), b_(b), final_time_(final_time) {
    require(num > 0 && den > 0 && num % 2 == 1 && den % 2 == 1,
            "carleman: alpha must be a ratio of two positive odd integers");
    const double alpha = static_cast<double>(num) / static_cast<double>(den);
    require(alpha > 0.0 && alpha < 1.0 / 3.0, "carleman: alpha must lie in (0, 1/3)");
    require(lambda >= 0.0, "carleman: lambda must be non-negative");
  }

  /// Finds the odd/odd representation of alpha with denominator below 1000.
  static CarlemanParams from_alpha(double lambda, double alpha, double b, double final_time) {
    for (long den = 1; den < 1000; den += 2) {
      const long num = std::lround(alpha * static_cast<double>(den));
      if (num % 2 == 1 &&
          std::abs(static_cast<double>(num) / static_cast<double>(den) - alpha) < 1e-12)
        return CarlemanParams(lambda, num, den, b, final_time);
    }
    throw ContractError("carleman: alpha is not a ratio of two small odd integers");
  }

  double lambda() const { return lambda_; }
  double alpha() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  long alpha_num() const { return num_; }
  long alpha_den() const { return den_; }
  double b() const { return b_; }
  double final_time() const { return final_time_; }

  /// |t - T/2|^{1+alpha}; the odd-root power is even in (t - T/2).
  double time_power(double t) const {
    return std::pow(std::abs(t - 0.5 * final_time_), 1.0 + alpha());
  }

  /// log of phi(x1,t) * e^{-2 lambda b^2}; never positive on [a,b] x [0,T].
  double balanced_log_weight(double x1, double t) const {
    return 2.0 * lambda_ * (x1 * x1 - b_ * b_) - 2.0 * lambda_ * time_power(t);
  }

 private:
  double lambda_;
  long num_, den_;
  double b_, final_time_;
};

inline double cwf_eval(double x1, double t, const CarlemanParams& p) {
  return std::exp(2.0 * p.lambda() * (x1 * x1 - p.time_power(t)));
}

/// d^{(1-3 alpha)/2} / (sqrt 2 (1+alpha)^{3/2})
inline double volterra_estimate_constant(double d, double alpha) {
  return std::pow(d, 0.5 * (1.0 - 3.0 * alpha)) / (std::sqrt(2.0) * std::pow(1.0 + alpha, 1.5));
}

/// Continuous piecewise-linear function on [-d, d] with uniform knots.
class PiecewiseLinear {
 public:
  PiecewiseLinear(std::vector<double> knot_values, double d)
      : values_(std::move(knot_values)), d_(d) {
    require(values_.size() >= 2, "piecewise-linear: need at least 2 knots");
    require(d > 0.0, "piecewise-linear: need d > 0");
    h_ = 2.0 * d_ / static_cast<double>(values_.size() - 1);
    // cumulative integral from -d at each knot
    cumulative_.assign(values_.size(), 0.0);
    for (std::size_t k = 1; k < values_.size(); ++k)
      cumulative_[k] = cumulative_[k - 1] + 0.5 * h_ * (values_[k - 1] + values_[k]);
    zero_offset_ = integral_from_left(0.0);
  }

  double half_width() const { return d_; }

  double operator()(double t) const {
    const auto [k, s] = locate(t);
    return values_[k] + s * (values_[k + 1] - values_[k]);
  }

  /// int_0^t f, exact.
  double primitive(double t) const { return integral_from_left(t) - zero_offset_; }

 private:
  std::pair<std::size_t, double> locate(double t) const {
    double pos = (t + d_) / h_;
    pos = std::clamp(pos, 0.0, static_cast<double>(values_.size() - 1));
    std::size_t k = static_cast<std::size_t>(pos);
    if (k + 1 >= values_.size()) k = values_.size() - 2;
    return {k, pos - static_cast<double>(k)};
  }

  double integral_from_left(double t) const {
    const auto [k, s] = locate(t);
    const double f0 = values_[k], f1 = values_[k + 1];
    return cumulative_[k] + h_ * s * (f0 + 0.5 * s * (f1 - f0));
  }

  std::vector<double> values_, cumulative_;
  double d_, h_ = 0.0, zero_offset_ = 0.0;
};

enum class CertificationStatus { converged, inconclusive };

struct CarlemanReport {
  double lambda = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // 1 - lhs/rhs (0 when both vanish)
  bool holds = false;
  CertificationStatus status = CertificationStatus::inconclusive;
};

inline constexpr double kCarlemanSlack = 1e-10;

namespace detail {

// Trapezoid rule on [lo, hi] doubled until two successive refinements agree
// to rel_tol, evaluating only new midpoints at each level.
template <class Fn>
bool refined_trapezoid(Fn&& fn, double lo, double hi, double rel_tol, int max_levels,
                       std::size_t start_panels, double& result) {
  std::size_t panels = start_panels;
  double h = (hi - lo) / static_cast<double>(panels);
  double sum = 0.5 * (fn(lo) + fn(hi));
  for (std::size_t k = 1; k < panels; ++k) sum += fn(lo + static_cast<double>(k) * h);
  double prev = sum * h;
  for (int level = 0; level < max_levels; ++level) {
    double mids = 0.0;
    for (std::size_t k = 0; k < panels; ++k) mids += fn(lo + (static_cast<double>(k) + 0.5) * h);
    sum += mids;
    panels *= 2;
    h *= 0.5;
    const double cur = sum * h;
    const double scale = std::max(std::abs(cur), std::abs(prev));
    if (std::abs(cur - prev) <= rel_tol * scale || scale == 0.0) {
      result = cur;
      return true;
    }
    prev = cur;
  }
  result = prev;
  return false;
}

}  // namespace detail

/// Evaluates both sides of the weighted Volterra estimate for f on [-d, d].
/// The integrals are split at t = 0, where the weight has a cusp.
inline CarlemanReport volterra_carleman_check(const PiecewiseLinear& f, double lambda,
                                              double alpha, int max_levels = 22) {
  require(lambda > 0.0, "volterra_carleman_check: lambda must be positive");
  require(alpha > 0.0 && alpha < 1.0 / 3.0, "volterra_carleman_check: alpha must lie in (0, 1/3)");
  const double d = f.half_width();
  auto weight = [&](double t) { return std::exp(-2.0 * lambda * std::pow(std::abs(t), 1.0 + alpha)); };
  auto lhs_integrand = [&](double t) {
    const double w = f.primitive(t);
    return weight(t) * w * w;
  };
  auto rhs_integrand = [&](double t) {
    const double v = f(t);
    return weight(t) * v * v;
  };
  const double tol = 1e-8;
  double l1 = 0, l2 = 0, r1 = 0, r2 = 0;
  bool ok = detail::refined_trapezoid(lhs_integrand, -d, 0.0, tol, max_levels, 64, l1);
  ok &= detail::refined_trapezoid(lhs_integrand, 0.0, d, tol, max_levels, 64, l2);
  ok &= detail::refined_trapezoid(rhs_integrand, -d, 0.0, tol, max_levels, 64, r1);
  ok &= detail::refined_trapezoid(rhs_integrand, 0.0, d, tol, max_levels, 64, r2);

  CarlemanReport rep;
  rep.lambda = lambda;
  rep.d = d;
  rep.alpha = alpha;
  rep.lhs = l1 + l2;
  rep.rhs = std::pow(lambda, -1.5) * volterra_estimate_constant(d, alpha) * (r1 + r2);
  rep.margin = rep.rhs > 0.0 ? 1.0 - rep.lhs / rep.rhs : 0.0;
  rep.status = ok ? CertificationStatus::converged : CertificationStatus::inconclusive;
  rep.holds = ok && rep.lhs <= rep.rhs * (1.0 + kCarlemanSlack);
  return rep;
}

/// Ratio of the sharpened bound to the conventional lambda^{-1} bound with the
/// same integral factor; the factor cancels, leaving lambda^{-1/2} C(d, alpha).
inline double conventional_vs_new_ratio(double d, double lambda, double alpha) {
  require(lambda > 0.0, "conventional_vs_new_ratio: lambda must be positive");
  return std::pow(lambda, -0.5) * volterra_estimate_constant(d, alpha);
}

/// Seeded random piecewise-linear function: 2..21 knots, values in [-1, 1].
inline PiecewiseLinear random_piecewise_linear(std::mt19937_64& rng, double d) {
  std::uniform_int_distribution<int> knots(2, 21);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(knots(rng)));
  for (double& x : v) x = value(rng);
  return PiecewiseLinear(std::move(v), d);
}

/// The randomized certification suite: `trials` functions per lambda.
inline std::vector<CarlemanReport> certify_volterra_estimate(std::uint64_t seed, int trials,
                                                             const std::vector<double>& lambdas,
                                                             double d, double alpha) {
  require(trials > 0, "certify: need at least one trial");
  std::mt19937_64 rng(seed);
  std::vector<CarlemanReport> out;
  for (double lambda : lambdas)
    for (int k = 0; k < trials; ++k)
      out.push_back(volterra_carleman_check(random_piecewise_linear(rng, d), lambda, alpha));
  return out;
}

}  // namespace mfgcvx
