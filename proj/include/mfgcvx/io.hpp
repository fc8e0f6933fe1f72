#pragma once

// Field container: a short text header followed by the raw row-major
// little-endian float64 payload.
//
//   mfgcvx-field 1
//   rank space-time
//   axes x1 x2 t
//   nodes 21 21 11
//   extents 1 2 0.5 1
//   encoding f64le
//   payload 38808
//   end
//   <payload bytes>
//
// Node counts and extents always describe the full grid; the rank decides
// which of its nodes the payload holds. CSV and 8-bit PGM exports are also
// provided.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfgcvx/grid.hpp"

namespace mfgcvx {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kFieldMagic = "mfgcvx-field";
inline constexpr int kFieldVersion = 1;

namespace detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw IoError("field container: only little-endian hosts are supported");
}

inline const char* axes_for(Rank r) {
  switch (r) {
    case Rank::spatial: return "x1 x2";
    case Rank::space_time: return "x1 x2 t";
    case Rank::boundary_trace: return "perimeter t";
    case Rank::gamma_trace: return "x2 t";
  }
  return "";
}

}  // namespace detail

inline std::string field_header(const Field& f) {
  const auto& g = f.grid();
  std::ostringstream os;
  os << kFieldMagic << ' ' << kFieldVersion << '\n'
     << "rank " << to_string(f.rank()) << '\n'
     << "axes " << detail::axes_for(f.rank()) << '\n'
     << "nodes " << g.n1 << ' ' << g.n2 << ' ' << g.nt << '\n'
     << "extents " << detail::fmt17(g.a) << ' ' << detail::fmt17(g.b) << ' '
     << detail::fmt17(g.half_width) << ' ' << detail::fmt17(g.final_time) << '\n'
     << "encoding f64le\n"
     << "payload " << f.size() * sizeof(double) << '\n'
     << "end\n";
  return os.str();
}

inline void write_field(const std::filesystem::path& path, const Field& f) {
  detail::require_little_endian();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string header = field_header(f);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(f.values().data()),
            static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline Field read_field(const std::filesystem::path& path) {
  detail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto fail = [&](const std::string& why) -> IoError {
    return IoError("'" + path.string() + "': " + why);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty file");
  {
    std::istringstream is(line);
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != kFieldMagic) throw fail("not a field container");
    if (version != kFieldVersion) throw fail("unsupported version " + std::to_string(version));
  }
  std::string rank_s, encoding;
  std::size_t n1 = 0, n2 = 0, nt = 0, payload = 0;
  double a = 0, b = 0, A2 = 0, T = 0;
  bool have_nodes = false, have_extents = false, have_payload = false;
  for (;;) {
    if (!std::getline(in, line)) throw fail("truncated header");
    if (line == "end") break;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "rank") {
      is >> rank_s;
    } else if (key == "axes") {
      continue;
    } else if (key == "nodes") {
      is >> n1 >> n2 >> nt;
      have_nodes = static_cast<bool>(is);
    } else if (key == "extents") {
      is >> a >> b >> A2 >> T;
      have_extents = static_cast<bool>(is);
    } else if (key == "encoding") {
      is >> encoding;
    } else if (key == "payload") {
      is >> payload;
      have_payload = static_cast<bool>(is);
    } else {
      throw fail("unknown header key '" + key + "'");
    }
  }
  if (!have_nodes || !have_extents || !have_payload) throw fail("incomplete header");
  if (encoding != "f64le") throw fail("unsupported encoding '" + encoding + "'");
  const Rank rank = rank_from_string(rank_s);
  const SpaceTimeGrid g = SpaceTimeGrid::make(a, b, A2, T, n1, n2, nt);
  const std::size_t count = Field::expected_size(g, rank);
  if (payload != count * sizeof(double)) throw fail("payload length does not match the header");
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload) throw fail("truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes after payload");
  return Field(g, rank, std::move(values));
}

/// Spatial or space-time field as CSV: i,j[,n],x1,x2[,t],value.
inline void write_csv(const std::filesystem::path& path, const Field& f) {
  require(f.rank() == Rank::spatial || f.rank() == Rank::space_time,
          "write_csv: need a spatial or space-time field");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto& g = f.grid();
  const bool st = f.rank() == Rank::space_time;
  out << (st ? "i,j,n,x1,x2,t,value\n" : "i,j,x1,x2,value\n");
  for (std::size_t i = 0; i < g.n1; ++i)
    for (std::size_t j = 0; j < g.n2; ++j) {
      if (!st) {
        out << i << ',' << j << ',' << detail::fmt17(g.x1(i)) << ',' << detail::fmt17(g.x2(j))
            << ',' << detail::fmt17(f.at(i, j)) << '\n';
        continue;
      }
      for (std::size_t n = 0; n < g.nt; ++n)
        out << i << ',' << j << ',' << n << ',' << detail::fmt17(g.x1(i)) << ','
            << detail::fmt17(g.x2(j)) << ',' << detail::fmt17(g.t(n)) << ','
            << detail::fmt17(f.at(i, j, n)) << '\n';
    }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Reads a spatial CSV written by write_csv back onto `grid`.
inline Field read_csv_spatial(const std::filesystem::path& path, const SpaceTimeGrid& grid) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "i,j,x1,x2,value") throw IoError("'" + path.string() + "': not a spatial CSV");
  Field f(grid, Rank::spatial);
  std::vector<bool> seen(grid.spatial_size(), false);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t i = 0, j = 0;
    double x1 = 0, x2 = 0, v = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%lf", &i, &j, &x1, &x2, &v) != 5 ||
        i >= grid.n1 || j >= grid.n2)
      throw IoError("'" + path.string() + "': malformed row '" + line + "'");
    f.at(i, j) = v;
    seen[grid.sidx(i, j)] = true;
  }
  for (bool s : seen)
    if (!s) throw IoError("'" + path.string() + "': missing nodes");
  return f;
}

struct PgmScaling {
  double min = 0.0, max = 0.0;
  bool constant = false;
};

/// 8-bit grayscale image, x1 to the right and x2 upwards, linear min/max
/// scaling (mid-gray for a constant field).
inline PgmScaling write_pgm(const std::filesystem::path& path, const Field& f) {
  require(f.rank() == Rank::spatial, "write_pgm: need a spatial field");
  const auto& g = f.grid();
  PgmScaling sc;
  sc.min = sc.max = f[0];
  for (double v : f.values()) {
    sc.min = std::min(sc.min, v);
    sc.max = std::max(sc.max, v);
  }
  sc.constant = sc.max == sc.min;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << g.n1 << ' ' << g.n2 << "\n255\n";
  for (std::size_t jr = 0; jr < g.n2; ++jr) {
    const std::size_t j = g.n2 - 1 - jr;
    for (std::size_t i = 0; i < g.n1; ++i) {
      const double v = f.at(i, j);
      const double s = sc.constant ? 0.5 : (v - sc.min) / (sc.max - sc.min);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * s))));
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  return sc;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace mfgcvx
