#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/errors.hpp"

namespace crowdmap {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int r, int c, std::uint8_t fill = 0)
      : rows(r), cols(c), pixels(static_cast<std::size_t>(r) * c, fill) {}

  std::uint8_t& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }
  const std::uint8_t& at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }
  Shape shape() const { return Shape{rows, cols}; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline void write_pgm(std::ostream& os, const GrayImage& img) {
  os << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_pgm(os, img);
  if (!os) throw IoError("write failed for '" + path + "'");
}

namespace detail {

inline int pgm_token(std::istream& is, const std::string& path) {
  // Whitespace-separated integer; '#' starts a comment to end of line.
  for (;;) {
    int c = is.peek();
    if (c == EOF) throw ParseError(path + ": truncated PGM header");
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (std::isspace(c)) {
      is.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(is >> value)) throw ParseError(path + ": malformed PGM header");
  return value;
}

}  // namespace detail

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
    throw ParseError(path + ": not a P5 PGM file");
  }
  const int cols = detail::pgm_token(is, path);
  const int rows = detail::pgm_token(is, path);
  const int maxval = detail::pgm_token(is, path);
  if (cols <= 0 || rows <= 0) throw ParseError(path + ": bad PGM extent");
  if (maxval != 255) throw ParseError(path + ": only maxval 255 supported");
  is.get();  // single whitespace byte after the header
  GrayImage img(rows, cols);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size()))) {
    throw ParseError(path + ": truncated PGM pixel data");
  }
  return img;
}

/// Burns an axis-aligned box outline into the image, clipped to the raster.
inline void draw_box_outline(GrayImage& img, const BBox& box,
                             std::uint8_t gray) {
  const int r0 = static_cast<int>(std::lround(box.center.row - box.height / 2));
  const int r1 = static_cast<int>(std::lround(box.center.row + box.height / 2));
  const int c0 = static_cast<int>(std::lround(box.center.col - box.width / 2));
  const int c1 = static_cast<int>(std::lround(box.center.col + box.width / 2));
  auto put = [&](int r, int c) {
    if (r >= 0 && r < img.rows && c >= 0 && c < img.cols) img.at(r, c) = gray;
  };
  for (int c = c0; c <= c1; ++c) {
    put(r0, c);
    put(r1, c);
  }
  for (int r = r0; r <= r1; ++r) {
    put(r, c0);
    put(r, c1);
  }
}

}  // namespace crowdmap
