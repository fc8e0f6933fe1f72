#pragma once

// Letter-shaped inclusions k = c_a inside, 1 outside, and reconstruction
// scores. The glyphs are small bitmaps (row 0 on top, i.e. at large x2)
// scaled bilinearly onto a box inside Omega and thresholded at 1/2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mfgcvx/grid.hpp"

namespace mfgcvx {

enum class Letter { A, Omega, SZ };

inline std::string_view to_string(Letter l) {
  switch (l) {
    case Letter::A: return "A";
    case Letter::Omega: return "Omega";
    case Letter::SZ: return "SZ";
  }
  return "?";
}

inline Letter letter_from_string(std::string_view s) {
  if (s == "A") return Letter::A;
  if (s == "Omega" || s == "O") return Letter::Omega;
  if (s == "SZ") return Letter::SZ;
  throw ContractError("unknown letter '" + std::string(s) + "' (expected A, Omega or SZ)");
}

namespace detail {

struct Glyph {
  std::vector<std::string_view> rows;
  // box in Omega-relative coordinates: fractions of (b - a) and 2 A2
  double x_lo, x_hi, y_lo, y_hi;
};

inline const Glyph& glyph(Letter l) {
  static const Glyph a{{"....##....",
                        "...####...",
                        "..##..##..",
                        "..##..##..",
                        ".##....##.",
                        ".########.",
                        ".########.",
                        "##......##",
                        "##......##",
                        "##......##"},
                       0.18, 0.82, 0.15, 0.85};
  static const Glyph omega{{"..######..",
                            ".##....##.",
                            "##......##",
                            "##......##",
                            "##......##",
                            ".##....##.",
                            "..##..##..",
                            "###....###",
                            "###....###"},
                           0.18, 0.82, 0.15, 0.85};
  static const Glyph sz{{"#####...#####",
                         "##.........##",
                         "##........##.",
                         "#####....##..",
                         "...##...##...",
                         "...##...##...",
                         "#####...#####"},
                        0.06, 0.94, 0.2, 0.8};
  switch (l) {
    case Letter::A: return a;
    case Letter::Omega: return omega;
    case Letter::SZ: return sz;
  }
  return a;
}

inline double glyph_pixel(const Glyph& g, long row, long col) {
  const long rows = static_cast<long>(g.rows.size());
  const long cols = static_cast<long>(g.rows.front().size());
  if (row < 0 || col < 0 || row >= rows || col >= cols) return 0.0;
  return g.rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] == '#' ? 1.0 : 0.0;
}

}  // namespace detail

/// Boolean mask (0/1 spatial field) of the letter on the grid's spatial nodes.
inline Field raster_letter(Letter which, const SpaceTimeGrid& grid) {
  require(grid.n1 >= 21 && grid.n2 >= 21, "raster_letter: need at least 21 x 21 spatial nodes");
  const auto& gl = detail::glyph(which);
  const double rows = static_cast<double>(gl.rows.size());
  const double cols = static_cast<double>(gl.rows.front().size());
  Field mask(grid, Rank::spatial);
  for (std::size_t i = 0; i < grid.n1; ++i)
    for (std::size_t j = 0; j < grid.n2; ++j) {
      const double fx = (grid.x1(i) - grid.a) / (grid.b - grid.a);
      const double fy = (grid.x2(j) + grid.half_width) / (2.0 * grid.half_width);
      // continuous pixel coordinates, pixel centres at integer + 1/2
      const double c = (fx - gl.x_lo) / (gl.x_hi - gl.x_lo) * cols - 0.5;
      const double r = (gl.y_hi - fy) / (gl.y_hi - gl.y_lo) * rows - 0.5;
      const long c0 = static_cast<long>(std::floor(c)), r0 = static_cast<long>(std::floor(r));
      const double sc = c - static_cast<double>(c0), sr = r - static_cast<double>(r0);
      const double v = (1 - sr) * ((1 - sc) * detail::glyph_pixel(gl, r0, c0) +
                                   sc * detail::glyph_pixel(gl, r0, c0 + 1)) +
                       sr * ((1 - sc) * detail::glyph_pixel(gl, r0 + 1, c0) +
                             sc * detail::glyph_pixel(gl, r0 + 1, c0 + 1));
      mask.at(i, j) = v >= 0.5 ? 1.0 : 0.0;
    }
  return mask;
}

struct Phantom {
  Letter letter = Letter::A;
  double contrast = 2.0;  // c_a
};

/// c_a on the mask, 1 elsewhere.
inline Field make_k(const Field& mask, double contrast) {
  require(contrast > 0.0, "make_k: inclusion value c_a must be positive");
  Field k(mask.grid(), Rank::spatial, 1.0);
  for (std::size_t q = 0; q < k.size(); ++q)
    if (mask[q] > 0.5) k[q] = contrast;
  return k;
}

inline Field make_k(const Phantom& ph, const SpaceTimeGrid& grid) {
  return make_k(raster_letter(ph.letter, grid), ph.contrast);
}

struct Metrics {
  double rel_l2 = 0.0;         // |k_comp - k_true| / |k_true| over all nodes
  double contrast = 0.0;       // median inside / median outside
  double mask_rel_l2 = 0.0;    // rel_l2 restricted to the mask
  double inside_median = 0.0;
  double outside_median = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  require(!v.empty(), "median: empty sample");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(h), v.end());
  const double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(h));
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline Metrics score(const Field& k_comp, const Field& k_true, const Field& mask) {
  k_comp.check_same(k_true);
  k_comp.check_same(mask);
  std::vector<double> in, out;
  double num = 0, den = 0, mnum = 0, mden = 0;
  for (std::size_t q = 0; q < k_comp.size(); ++q) {
    const double e = k_comp[q] - k_true[q];
    num += e * e;
    den += k_true[q] * k_true[q];
    if (mask[q] > 0.5) {
      in.push_back(k_comp[q]);
      mnum += e * e;
      mden += k_true[q] * k_true[q];
    } else {
      out.push_back(k_comp[q]);
    }
  }
  require(!in.empty() && !out.empty(), "score: mask must be neither empty nor everything");
  Metrics m;
  m.rel_l2 = std::sqrt(num / den);
  m.mask_rel_l2 = std::sqrt(mnum / mden);
  m.inside_median = detail::median(in);
  m.outside_median = detail::median(out);
  m.contrast = m.inside_median / m.outside_median;
  return m;
}

/// Number of 4-connected components of {value >= threshold}.
inline int connected_components(const Field& f, double threshold) {
  require(f.rank() == Rank::spatial, "connected_components: need a spatial field");
  const auto& g = f.grid();
  std::vector<int> label(g.spatial_size(), 0);
  std::vector<std::size_t> stack;
  int count = 0;
  for (std::size_t s = 0; s < g.spatial_size(); ++s) {
    if (label[s] || f[s] < threshold) continue;
    ++count;
    label[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const std::size_t i = c / g.n2, j = c % g.n2;
      const std::array<std::array<long, 2>, 4> nb{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
      for (auto [di, dj] : nb) {
        const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
        if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.n1) || jj >= static_cast<long>(g.n2))
          continue;
        const std::size_t n = g.sidx(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        if (!label[n] && f[n] >= threshold) {
          label[n] = count;
          stack.push_back(n);
        }
      }
    }
  }
  return count;
}

/// Area fraction of a 0/1 mask by node count.
inline double area_fraction(const Field& mask) {
  double c = 0.0;
  for (double v : mask.values()) c += v > 0.5 ? 1.0 : 0.0;
  return c / static_cast<double>(mask.size());
}

}  // namespace mfgcvx
