#pragma once

// Uniform space-time grids over the prism (a,b) x (-A2,A2) x (0,T), scalar
// fields sampled on them, and the finite-difference / quadrature primitives
// the rest of the library is built from.
//
// Layout is row-major in (x1, x2[, t]); time is the fastest axis. Every
// derivative operator is second order: central at interior nodes and
// one-sided (3-point for first, 4-point for second derivatives) at the ends
// of the differentiated axis. Every operator also has an exact transpose,
// which the objective's reverse accumulation relies on.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfgcvx/error.hpp"

namespace mfgcvx {

struct SpaceTimeGrid {
  double a = 1.0;
  double b = 2.0;
  double half_width = 0.5;  // x2 ranges over (-half_width, half_width)
  double final_time = 1.0;
  std::size_t n1 = 21;
  std::size_t n2 = 21;
  std::size_t nt = 11;

  /// Validating constructor. (nt - 1) must be even so that t = T/2 is a slice.
  static SpaceTimeGrid make(double a, double b, double half_width, double final_time,
                            std::size_t n1, std::size_t n2, std::size_t nt) {
    require(a < b, "grid: need a < b");
    require(half_width > 0.0, "grid: need A2 > 0");
    require(final_time > 0.0, "grid: need T > 0");
    require(n1 >= 2 && n2 >= 2 && nt >= 3, "grid: too few nodes");
    require((nt - 1) % 2 == 0, "grid: (nt - 1) must be even so t = T/2 is a grid slice");
    return SpaceTimeGrid{a, b, half_width, final_time, n1, n2, nt};
  }

  /// Grid from step sizes; the extents must be integer multiples of the steps.
  static SpaceTimeGrid with_steps(double a, double b, double half_width, double final_time,
                                  double h_space, double h_time) {
    auto count = [](double len, double h, const char* what) {
      require(h > 0.0, std::string("grid: non-positive step for ") + what);
      const double cells = len / h;
      const double rounded = std::round(cells);
      require(std::abs(cells - rounded) < 1e-9 * std::max(1.0, cells),
              std::string("grid: extent not a multiple of the step along ") + what);
      return static_cast<std::size_t>(rounded) + 1;
    };
    return make(a, b, half_width, final_time, count(b - a, h_space, "x1"),
                count(2.0 * half_width, h_space, "x2"), count(final_time, h_time, "t"));
  }

  double h1() const { return (b - a) / static_cast<double>(n1 - 1); }
  double h2() const { return 2.0 * half_width / static_cast<double>(n2 - 1); }
  double ht() const { return final_time / static_cast<double>(nt - 1); }
  std::size_t mid() const { return (nt - 1) / 2; }

  double x1(std::size_t i) const { return a + static_cast<double>(i) * h1(); }
  double x2(std::size_t j) const { return -half_width + static_cast<double>(j) * h2(); }
  double t(std::size_t n) const { return static_cast<double>(n) * ht(); }

  std::size_t spatial_size() const { return n1 * n2; }
  std::size_t size() const { return n1 * n2 * nt; }
  std::size_t boundary_size() const { return 2 * n1 + 2 * n2 - 4; }

  std::size_t sidx(std::size_t i, std::size_t j) const { return i * n2 + j; }
  std::size_t idx(std::size_t i, std::size_t j, std::size_t n) const {
    return (i * n2 + j) * nt + n;
  }

  bool is_boundary(std::size_t i, std::size_t j) const {
    return i == 0 || j == 0 || i + 1 == n1 || j + 1 == n2;
  }

  /// Position of boundary node (i,j) in the row-major scan of the perimeter.
  std::size_t boundary_index(std::size_t i, std::size_t j) const {
    if (i == 0) return j;
    if (i + 1 == n1) return n2 + 2 * (n1 - 2) + j;
    return n2 + 2 * (i - 1) + (j == 0 ? 0 : 1);
  }

  /// Perimeter nodes in boundary_index order.
  std::vector<std::array<std::size_t, 2>> boundary_nodes() const {
    std::vector<std::array<std::size_t, 2>> out;
    out.reserve(boundary_size());
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        if (is_boundary(i, j)) out.push_back({i, j});
    return out;
  }

  bool operator==(const SpaceTimeGrid&) const = default;
};

/// What a Field is sampled on: Omega, Q_T, S_T (perimeter x time) or
/// Gamma_T (the face x1 = b, times time).
enum class Rank { spatial, space_time, boundary_trace, gamma_trace };

inline std::string_view to_string(Rank r) {
  switch (r) {
    case Rank::spatial: return "spatial";
    case Rank::space_time: return "space-time";
    case Rank::boundary_trace: return "boundary-trace";
    case Rank::gamma_trace: return "gamma-trace";
  }
  return "?";
}

inline Rank rank_from_string(std::string_view s) {
  if (s == "spatial") return Rank::spatial;
  if (s == "space-time") return Rank::space_time;
  if (s == "boundary-trace") return Rank::boundary_trace;
  if (s == "gamma-trace") return Rank::gamma_trace;
  throw ContractError("unknown field rank '" + std::string(s) + "'");
}

class Field {
 public:
  Field() = default;
  Field(const SpaceTimeGrid& grid, Rank rank, double fill = 0.0)
      : grid_(grid), rank_(rank), values_(expected_size(grid, rank), fill) {}
  Field(const SpaceTimeGrid& grid, Rank rank, std::vector<double> values)
      : grid_(grid), rank_(rank), values_(std::move(values)) {
    require(values_.size() == expected_size(grid, rank),
            "field: value count does not match grid and rank");
  }

  static std::size_t expected_size(const SpaceTimeGrid& g, Rank r) {
    switch (r) {
      case Rank::spatial: return g.spatial_size();
      case Rank::space_time: return g.size();
      case Rank::boundary_trace: return g.boundary_size() * g.nt;
      case Rank::gamma_trace: return g.n2 * g.nt;
    }
    return 0;
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  Rank rank() const { return rank_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  double& at(std::size_t i, std::size_t j) { return values_[grid_.sidx(i, j)]; }
  double at(std::size_t i, std::size_t j) const { return values_[grid_.sidx(i, j)]; }
  double& at(std::size_t i, std::size_t j, std::size_t n) { return values_[grid_.idx(i, j, n)]; }
  double at(std::size_t i, std::size_t j, std::size_t n) const {
    return values_[grid_.idx(i, j, n)];
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  Field& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }

  void check_same(const Field& o) const {
    require(rank_ == o.rank_ && grid_ == o.grid_, "field: grid or rank mismatch");
  }

 private:
  SpaceTimeGrid grid_{};
  Rank rank_ = Rank::spatial;
  std::vector<double> values_;
};

inline Field operator+(Field a, const Field& b) { return a += b; }
inline Field operator-(Field a, const Field& b) { return a -= b; }
inline Field operator*(double c, Field a) { return a *= c; }

template <class Fn>
Field sample_spatial(const SpaceTimeGrid& g, Fn&& fn) {
  Field out(g, Rank::spatial);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) out.at(i, j) = fn(g.x1(i), g.x2(j));
  return out;
}

template <class Fn>
Field sample_space_time(const SpaceTimeGrid& g, Fn&& fn) {
  Field out(g, Rank::space_time);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j)
      for (std::size_t n = 0; n < g.nt; ++n) out.at(i, j, n) = fn(g.x1(i), g.x2(j), g.t(n));
  return out;
}

/// Spatial slice of a space-time field at time index n.
inline Field time_slice(const Field& f, std::size_t n) {
  require(f.rank() == Rank::space_time, "time_slice: need a space-time field");
  const auto& g = f.grid();
  require(n < g.nt, "time_slice: slice index out of range");
  Field out(g, Rank::spatial);
  for (std::size_t s = 0; s < g.spatial_size(); ++s) out[s] = f[s * g.nt + n];
  return out;
}

/// Space-time field constant in time.
inline Field broadcast_time(const Field& f) {
  require(f.rank() == Rank::spatial, "broadcast_time: need a spatial field");
  const auto& g = f.grid();
  Field out(g, Rank::space_time);
  for (std::size_t s = 0; s < g.spatial_size(); ++s)
    for (std::size_t n = 0; n < g.nt; ++n) out[s * g.nt + n] = f[s];
  return out;
}

/// Restriction of a space-time field to S_T.
inline Field boundary_trace(const Field& f) {
  require(f.rank() == Rank::space_time, "boundary_trace: need a space-time field");
  const auto& g = f.grid();
  Field out(g, Rank::boundary_trace);
  std::size_t k = 0;
  for (auto [i, j] : g.boundary_nodes()) {
    for (std::size_t n = 0; n < g.nt; ++n) out[k * g.nt + n] = f.at(i, j, n);
    ++k;
  }
  return out;
}

/// Restriction of a space-time field to Gamma_T (x1 = b).
inline Field gamma_trace(const Field& f) {
  require(f.rank() == Rank::space_time, "gamma_trace: need a space-time field");
  const auto& g = f.grid();
  Field out(g, Rank::gamma_trace);
  for (std::size_t j = 0; j < g.n2; ++j)
    for (std::size_t n = 0; n < g.nt; ++n) out[j * g.nt + n] = f.at(g.n1 - 1, j, n);
  return out;
}

enum class Axis { x1 = 0, x2 = 1, t = 2 };

namespace detail {

struct StencilRow {
  std::array<std::size_t, 4> col{};
  std::array<double, 4> coef{};
  int len = 0;
};

inline StencilRow first_difference_row(std::size_t i, std::size_t n, double h) {
  if (i == 0) return {{0, 1, 2, 0}, {-1.5 / h, 2.0 / h, -0.5 / h, 0.0}, 3};
  if (i + 1 == n) return {{n - 3, n - 2, n - 1, 0}, {0.5 / h, -2.0 / h, 1.5 / h, 0.0}, 3};
  return {{i - 1, i + 1, 0, 0}, {-0.5 / h, 0.5 / h, 0.0, 0.0}, 2};
}

inline StencilRow second_difference_row(std::size_t i, std::size_t n, double h) {
  const double q = 1.0 / (h * h);
  if (i > 0 && i + 1 < n) return {{i - 1, i, i + 1, 0}, {q, -2.0 * q, q, 0.0}, 3};
  if (n >= 4) {
    if (i == 0) return {{0, 1, 2, 3}, {2.0 * q, -5.0 * q, 4.0 * q, -q}, 4};
    return {{n - 4, n - 3, n - 2, n - 1}, {-q, 4.0 * q, -5.0 * q, 2.0 * q}, 4};
  }
  // three nodes: the only second difference there is (first order at the ends)
  return {{0, 1, 2, 0}, {q, -2.0 * q, q, 0.0}, 3};
}

struct AxisGeometry {
  std::size_t len = 0;
  std::size_t stride = 0;
  std::size_t outer = 0;
  double h = 0.0;
};

inline AxisGeometry axis_geometry(const Field& f, Axis axis) {
  const auto& g = f.grid();
  if (f.rank() == Rank::spatial) {
    require(axis != Axis::t, "difference: cannot differentiate a spatial field in t");
    if (axis == Axis::x1) return {g.n1, g.n2, 1, g.h1()};
    return {g.n2, 1, g.n1, g.h2()};
  }
  if (f.rank() == Rank::boundary_trace || f.rank() == Rank::gamma_trace) {
    require(axis == Axis::t, "difference: traces can only be differentiated in t");
    const std::size_t lines = f.size() / g.nt;
    return {g.nt, 1, lines, g.ht()};
  }
  switch (axis) {
    case Axis::x1: return {g.n1, g.n2 * g.nt, 1, g.h1()};
    case Axis::x2: return {g.n2, g.nt, g.n1, g.h2()};
    case Axis::t: return {g.nt, 1, g.n1 * g.n2, g.ht()};
  }
  return {};
}

template <class RowFn>
Field apply_axis(const Field& in, Axis axis, RowFn&& row_of, bool transpose) {
  const AxisGeometry ax = axis_geometry(in, axis);
  require(ax.len >= 3, "difference: need at least 3 nodes on the differentiated axis");
  std::vector<StencilRow> rows(ax.len);
  for (std::size_t i = 0; i < ax.len; ++i) rows[i] = row_of(i, ax.len, ax.h);
  Field out(in.grid(), in.rank());
  const auto src = in.values();
  auto dst = out.values();
  const std::size_t block = ax.len * ax.stride;
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t inner = 0; inner < ax.stride; ++inner) {
      const std::size_t base = o * block + inner;
      for (std::size_t i = 0; i < ax.len; ++i) {
        const StencilRow& r = rows[i];
        if (!transpose) {
          double acc = 0.0;
          for (int k = 0; k < r.len; ++k) acc += r.coef[k] * src[base + r.col[k] * ax.stride];
          dst[base + i * ax.stride] = acc;
        } else {
          const double v = src[base + i * ax.stride];
          for (int k = 0; k < r.len; ++k) dst[base + r.col[k] * ax.stride] += r.coef[k] * v;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// First derivative along an axis (or its transpose).
inline Field diff(const Field& f, Axis axis, bool transpose = false) {
  return detail::apply_axis(f, axis, detail::first_difference_row, transpose);
}

/// Second derivative along an axis (or its transpose).
inline Field diff2(const Field& f, Axis axis, bool transpose = false) {
  return detail::apply_axis(f, axis, detail::second_difference_row, transpose);
}

inline Field ddx1(const Field& f) { return diff(f, Axis::x1); }
inline Field ddx2(const Field& f) { return diff(f, Axis::x2); }
inline Field ddt(const Field& f) { return diff(f, Axis::t); }

inline Field laplacian(const Field& f, bool transpose = false) {
  const auto& g = f.grid();
  require(g.n1 >= 3 && g.n2 >= 3, "laplacian: need at least 3 nodes per spatial axis");
  return diff2(f, Axis::x1, transpose) + diff2(f, Axis::x2, transpose);
}

/// Signed cumulative trapezoid integral from T/2 along t; zero on the mid slice.
inline Field volterra(const Field& f) {
  require(f.rank() == Rank::space_time, "volterra: need a space-time field");
  const auto& g = f.grid();
  const std::size_t nt = g.nt, mid = g.mid();
  const double half = 0.5 * g.ht();
  Field out(g, Rank::space_time);
  for (std::size_t s = 0; s < g.spatial_size(); ++s) {
    const double* in = f.values().data() + s * nt;
    double* o = out.values().data() + s * nt;
    o[mid] = 0.0;
    for (std::size_t n = mid + 1; n < nt; ++n) o[n] = o[n - 1] + half * (in[n - 1] + in[n]);
    for (std::size_t n = mid; n-- > 0;) o[n] = o[n + 1] - half * (in[n + 1] + in[n]);
  }
  return out;
}

/// Transpose of volterra().
inline Field volterra_transpose(const Field& r) {
  require(r.rank() == Rank::space_time, "volterra: need a space-time field");
  const auto& g = r.grid();
  const std::size_t nt = g.nt, mid = g.mid();
  const double half = 0.5 * g.ht();
  Field out(g, Rank::space_time);
  for (std::size_t s = 0; s < g.spatial_size(); ++s) {
    const double* in = r.values().data() + s * nt;
    double* o = out.values().data() + s * nt;
    // forward branch: V[n] = half*(f[mid] + f[n]) + ht*sum_{mid<k<n} f[k]
    double tail = 0.0;  // sum_{n > k} r[n]
    for (std::size_t k = nt - 1; k > mid; --k) {
      o[k] += half * in[k] + 2.0 * half * tail;
      tail += in[k];
    }
    o[mid] += half * tail;
    double head = 0.0;  // sum_{n < k} r[n]
    for (std::size_t k = 0; k < mid; ++k) {
      o[k] -= half * in[k] + 2.0 * half * head;
      head += in[k];
    }
    o[mid] -= half * head;
  }
  return out;
}

/// 1D composite trapezoid weights for n uniform nodes with step h.
inline std::vector<double> trapezoid_weights(std::size_t n, double h) {
  std::vector<double> w(n, h);
  if (n > 0) {
    w.front() *= 0.5;
    w.back() *= 0.5;
  }
  return w;
}

/// Trapezoid rule over [-A2, A2] on uniform nodes.
inline double integrate_y2(std::span<const double> values, double half_width) {
  require(values.size() >= 2, "integrate_y2: need at least 2 nodes");
  const double h = 2.0 * half_width / static_cast<double>(values.size() - 1);
  double acc = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) acc += values[k];
  return acc * h;
}

/// Tensor-product trapezoid weights of every node of a spatial or space-time field.
inline Field quadrature_weights(const SpaceTimeGrid& g, Rank rank) {
  require(rank == Rank::spatial || rank == Rank::space_time,
          "quadrature_weights: need spatial or space-time rank");
  const auto w1 = trapezoid_weights(g.n1, g.h1());
  const auto w2 = trapezoid_weights(g.n2, g.h2());
  const auto wt = trapezoid_weights(g.nt, g.ht());
  Field out(g, rank);
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      if (rank == Rank::spatial) {
        out.at(i, j) = w1[i] * w2[j];
      } else {
        for (std::size_t n = 0; n < g.nt; ++n) out.at(i, j, n) = w1[i] * w2[j] * wt[n];
      }
    }
  return out;
}

namespace detail {

// The ten terms of the discrete H^2(Q_T) norm: identity, three first
// differences, three pure second differences, three nested mixed differences.
template <class Visit>
void for_each_h2_term(const Field& f, Visit&& visit) {
  visit(f);
  const Field d1 = diff(f, Axis::x1), d2 = diff(f, Axis::x2), dt = diff(f, Axis::t);
  visit(d1);
  visit(d2);
  visit(dt);
  visit(diff2(f, Axis::x1));
  visit(diff2(f, Axis::x2));
  visit(diff2(f, Axis::t));
  visit(diff(d2, Axis::x1));
  visit(diff(dt, Axis::x1));
  visit(diff(dt, Axis::x2));
}

}  // namespace detail

/// Squared discrete H^2(Q_T) norm with trapezoid weights.
inline double h2_norm_sq(const Field& f) {
  require(f.rank() == Rank::space_time, "h2_norm_sq: need a space-time field");
  const Field w = quadrature_weights(f.grid(), Rank::space_time);
  double total = 0.0;
  detail::for_each_h2_term(f, [&](const Field& term) {
    double acc = 0.0;
    for (std::size_t k = 0; k < term.size(); ++k) acc += w[k] * term[k] * term[k];
    total += acc;
  });
  return total;
}

/// Gradient of h2_norm_sq with respect to every node value.
inline Field h2_norm_sq_gradient(const Field& f) {
  require(f.rank() == Rank::space_time, "h2_norm_sq: need a space-time field");
  const Field w = quadrature_weights(f.grid(), Rank::space_time);
  auto weighted = [&](const Field& term) {
    Field r = term;
    for (std::size_t k = 0; k < r.size(); ++k) r[k] *= 2.0 * w[k];
    return r;
  };
  const Field d1 = diff(f, Axis::x1), d2 = diff(f, Axis::x2), dt = diff(f, Axis::t);
  Field g = weighted(f);
  g += diff(weighted(d1), Axis::x1, true);
  g += diff(weighted(d2), Axis::x2, true);
  g += diff(weighted(dt), Axis::t, true);
  g += diff2(weighted(diff2(f, Axis::x1)), Axis::x1, true);
  g += diff2(weighted(diff2(f, Axis::x2)), Axis::x2, true);
  g += diff2(weighted(diff2(f, Axis::t)), Axis::t, true);
  g += diff(diff(weighted(diff(d2, Axis::x1)), Axis::x1, true), Axis::x2, true);
  g += diff(diff(weighted(diff(dt, Axis::x1)), Axis::x1, true), Axis::t, true);
  g += diff(diff(weighted(diff(dt, Axis::x2)), Axis::x2, true), Axis::t, true);
  return g;
}

/// Euclidean inner product of node values.
inline double dot(const Field& a, const Field& b) {
  a.check_same(b);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Node ratio between a fine and a coarse grid along one axis, 0 if the
/// coarse nodes are not a subset of the fine ones.
inline std::size_t subsample_ratio(std::size_t fine, std::size_t coarse) {
  if (coarse < 2 || fine < coarse || (fine - 1) % (coarse - 1) != 0) return 0;
  return (fine - 1) / (coarse - 1);
}

/// Injection of a spatial or space-time field onto a coarser grid whose
/// nodes are a subset of the fine grid's nodes.
inline Field restrict_to(const Field& fine, const SpaceTimeGrid& coarse) {
  const auto& g = fine.grid();
  require(g.a == coarse.a && g.b == coarse.b && g.half_width == coarse.half_width &&
              g.final_time == coarse.final_time,
          "restrict_to: fine and coarse grids have different extents");
  const std::size_t r1 = subsample_ratio(g.n1, coarse.n1);
  const std::size_t r2 = subsample_ratio(g.n2, coarse.n2);
  const std::size_t rt = subsample_ratio(g.nt, coarse.nt);
  require(r1 && r2 && rt, "restrict_to: coarse grid is not a divisor-aligned subsample");
  Field out(coarse, fine.rank());
  for (std::size_t i = 0; i < coarse.n1; ++i)
    for (std::size_t j = 0; j < coarse.n2; ++j) {
      if (fine.rank() == Rank::spatial) {
        out.at(i, j) = fine.at(i * r1, j * r2);
      } else {
        require(fine.rank() == Rank::space_time, "restrict_to: need spatial or space-time field");
        for (std::size_t n = 0; n < coarse.nt; ++n)
          out.at(i, j, n) = fine.at(i * r1, j * r2, n * rt);
      }
    }
  return out;
}

}  // namespace mfgcvx
