#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/density_map.hpp"
#include "crowdmap/errors.hpp"
#include "crowdmap/image.hpp"

namespace crowdmap {

/// Square sliding window geometry.
struct PatchSpec {
  int window = 256;
  int stride = 70;
};

/// Photometric noise: per-pixel Gaussian plus one brightness/contrast draw
/// per image. All draws come from the seeded generator, so identical
/// (seed, inputs) give identical outputs.
struct NoiseSpec {
  double gaussian_stddev = 5.0;
  double brightness_delta = 20.0;  // drawn from [-delta, +delta]
  double contrast_lo = 0.8;
  double contrast_hi = 1.25;
  std::uint64_t seed = 0;
};

struct PatchOrigin {
  int row = 0;
  int col = 0;

  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Valid window origins {0, stride, 2*stride, ...} per axis, row-major.
/// An image smaller than the window yields no origins.
inline std::vector<PatchOrigin> slide_patches(Shape image_shape,
                                              const PatchSpec& spec) {
  if (spec.window <= 0 || spec.stride <= 0) {
    throw ValidationError("slide_patches: window and stride must be positive");
  }
  std::vector<PatchOrigin> origins;
  if (image_shape.rows < spec.window || image_shape.cols < spec.window) {
    return origins;
  }
  const int per_row = (image_shape.rows - spec.window) / spec.stride + 1;
  const int per_col = (image_shape.cols - spec.window) / spec.stride + 1;
  origins.reserve(static_cast<std::size_t>(per_row) * per_col);
  for (int r = 0; r < per_row; ++r) {
    for (int c = 0; c < per_col; ++c) {
      origins.push_back(PatchOrigin{r * spec.stride, c * spec.stride});
    }
  }
  return origins;
}

struct Patch {
  ImageAnnotation annotation;
  DensityMap map;
  /// |sub-map mass - sub-head count|: Gaussians straddling the cut leave
  /// mass on both sides, which cropping preserves as-is.
  double mass_discrepancy = 0.0;
};

inline std::string patch_id(const std::string& base, PatchOrigin origin) {
  return base + "__r" + std::to_string(origin.row) + "_c" +
         std::to_string(origin.col);
}

/// Crops the window at `origin` out of both the map and the annotation.
/// Heads are members iff their point lies in the half-open window; the map
/// is a pure crop, so straddling mass is preserved rather than reassigned.
inline Patch cut_patch(const ImageAnnotation& ann, const DensityMap& map,
                       PatchOrigin origin, int window) {
  if (window <= 0) throw ValidationError("cut_patch: window must be positive");
  if (ann.shape.rows != map.rows || ann.shape.cols != map.cols) {
    throw ValidationError("cut_patch: annotation and map shapes differ");
  }
  if (origin.row < 0 || origin.col < 0 || origin.row + window > map.rows ||
      origin.col + window > map.cols) {
    throw ValidationError("cut_patch: origin out of range");
  }
  Patch patch;
  patch.annotation.image_id = patch_id(ann.image_id, origin);
  patch.annotation.shape = Shape{window, window};
  for (const Point2D& head : ann.heads) {
    const double r = head.row - origin.row;
    const double c = head.col - origin.col;
    if (r >= 0.0 && r < window && c >= 0.0 && c < window) {
      patch.annotation.heads.push_back(Point2D{r, c});
    }
  }
  patch.map = DensityMap(window, window);
  for (int r = 0; r < window; ++r) {
    const double* src = &map.at(origin.row + r, origin.col);
    double* dst = &patch.map.at(r, 0);
    std::copy(src, src + window, dst);
  }
  patch.mass_discrepancy =
      std::abs(patch.map.sum() - patch.annotation.person_count());
  return patch;
}

/// Image-side crop matching cut_patch.
inline GrayImage cut_image(const GrayImage& img, PatchOrigin origin,
                           int window) {
  if (window <= 0) throw ValidationError("cut_image: window must be positive");
  if (origin.row < 0 || origin.col < 0 || origin.row + window > img.rows ||
      origin.col + window > img.cols) {
    throw ValidationError("cut_image: origin out of range");
  }
  GrayImage out(window, window);
  for (int r = 0; r < window; ++r) {
    const std::uint8_t* src = &img.at(origin.row + r, origin.col);
    std::copy(src, src + window, &out.at(r, 0));
  }
  return out;
}

/// The photometric draw actually applied to one image.
struct NoiseDraw {
  double contrast = 1.0;
  double brightness = 0.0;
};

inline void check_noise_spec(const NoiseSpec& spec) {
  if (spec.gaussian_stddev < 0.0) {
    throw ValidationError("apply_noise: gaussian_stddev must be >= 0");
  }
  if (!(spec.contrast_lo > 0.0) || spec.contrast_hi < spec.contrast_lo) {
    throw ValidationError("apply_noise: bad contrast interval");
  }
  if (spec.brightness_delta < 0.0) {
    throw ValidationError("apply_noise: brightness_delta must be >= 0");
  }
}

/// Core transform against a caller-owned generator: contrast and brightness
/// are drawn once, then per-pixel Gaussian noise in row-major order;
/// out = clamp((in + noise) * contrast + brightness). Density maps are
/// never touched by photometric noise.
inline GrayImage apply_noise(const GrayImage& img, const NoiseSpec& spec,
                             std::mt19937_64& rng,
                             NoiseDraw* draw_out = nullptr) {
  check_noise_spec(spec);
  std::uniform_real_distribution<double> contrast_dist(spec.contrast_lo,
                                                       spec.contrast_hi);
  std::uniform_real_distribution<double> brightness_dist(
      -spec.brightness_delta, spec.brightness_delta);
  NoiseDraw draw;
  draw.contrast = contrast_dist(rng);
  draw.brightness = brightness_dist(rng);
  if (draw_out) *draw_out = draw;

  GrayImage out(img.rows, img.cols);
  std::normal_distribution<double> pixel_noise(0.0, spec.gaussian_stddev);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double noise =
        spec.gaussian_stddev > 0.0 ? pixel_noise(rng) : 0.0;
    const double v =
        (static_cast<double>(img.pixels[i]) + noise) * draw.contrast +
        draw.brightness;
    out.pixels[i] = static_cast<std::uint8_t>(
        std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

inline GrayImage apply_noise(const GrayImage& img, const NoiseSpec& spec,
                             NoiseDraw* draw_out = nullptr) {
  std::mt19937_64 rng(spec.seed);
  return apply_noise(img, spec, rng, draw_out);
}

/// Seed for one image of a dataset run; parallel per-image augmentation
/// stays order-independent.
inline std::uint64_t per_image_seed(std::uint64_t master_seed,
                                    std::uint64_t image_index) {
  return master_seed ^ image_index;
}

}  // namespace crowdmap
