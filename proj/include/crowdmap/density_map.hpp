#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/binio.hpp"
#include "crowdmap/errors.hpp"
#include "crowdmap/image.hpp"

namespace crowdmap {

/// Nonnegative 2-D grid in persons per pixel; its integral is the count.
struct DensityMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major

  DensityMap() = default;
  DensityMap(int r, int c)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}
  DensityMap(Shape s) : DensityMap(s.rows, s.cols) {}

  double& at(int r, int c) {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  const double& at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  Shape shape() const { return Shape{rows, cols}; }

  double sum() const {
    return std::accumulate(values.begin(), values.end(), 0.0);
  }
  double max_value() const {
    return values.empty() ? 0.0
                          : *std::max_element(values.begin(), values.end());
  }
};

// DMAP container: "DMAP", version u8 = 1, rows u32 LE, cols u32 LE,
// then rows*cols IEEE-754 f32 LE, row-major.

inline constexpr std::uint8_t kDmapVersion = 1;

inline void write_dmap(std::ostream& os, const DensityMap& map) {
  os.write("DMAP", 4);
  binio::put_u8(os, kDmapVersion);
  binio::put_u32_le(os, static_cast<std::uint32_t>(map.rows));
  binio::put_u32_le(os, static_cast<std::uint32_t>(map.cols));
  for (double v : map.values) binio::put_f32_le(os, static_cast<float>(v));
}

inline void write_dmap(const std::string& path, const DensityMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_dmap(os, map);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline DensityMap read_dmap(std::istream& is, const std::string& what) {
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "DMAP") {
    throw IoError(what + ": bad DMAP magic");
  }
  const std::uint8_t version = binio::get_u8(is, what);
  if (version != kDmapVersion) {
    throw IoError(what + ": unsupported DMAP version " +
                  std::to_string(version));
  }
  const std::uint32_t rows = binio::get_u32_le(is, what);
  const std::uint32_t cols = binio::get_u32_le(is, what);
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
    throw IoError(what + ": implausible DMAP extent");
  }
  DensityMap map(static_cast<int>(rows), static_cast<int>(cols));
  for (double& v : map.values) v = binio::get_f32_le(is, what);
  return map;
}

inline DensityMap read_dmap(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_dmap(is, path);
}

/// 8-bit view of the map: the maximum maps to 255, an all-zero map stays black.
inline GrayImage render_to_image(const DensityMap& map) {
  GrayImage img(map.rows, map.cols);
  const double mx = map.max_value();
  if (mx <= 0.0) return img;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double scaled = 255.0 * map.values[i] / mx;
    img.pixels[i] = static_cast<std::uint8_t>(
        std::clamp(std::lround(scaled), 0L, 255L));
  }
  return img;
}

}  // namespace crowdmap
