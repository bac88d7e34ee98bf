#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/density_map.hpp"
#include "crowdmap/errors.hpp"

namespace crowdmap {

/// Anisotropic Gaussian footprint. The kernel is evaluated on the pixel
/// window within truncation_radius_in_sigmas of the center per axis.
struct KernelSpec {
  double sigma_row = 4.0;
  double sigma_col = 4.0;
  double truncation_radius_in_sigmas = 3.0;
};

/// Per-person adaptive bandwidth: sigma_i = beta * mean distance to the k
/// nearest other heads; fallback_sigma when a head has no neighbors.
struct KnnConfig {
  int k = 3;
  double beta = 0.3;
  double fallback_sigma = 4.0;
  double min_sigma = 0.5;
  double truncation_radius_in_sigmas = 3.0;
};

namespace detail {

/// Nearest pixel index, ties toward the smaller index.
inline int round_half_down(double x) {
  return static_cast<int>(std::ceil(x - 0.5));
}

inline void check_kernel(const KernelSpec& k) {
  if (!(k.sigma_row > 0.0) || !(k.sigma_col > 0.0)) {
    throw ValidationError("kernel sigma must be positive");
  }
  if (!(k.truncation_radius_in_sigmas > 0.0)) {
    throw ValidationError("kernel truncation radius must be positive");
  }
}

/// Axis weights exp(-(i - center)^2 / (2 sigma^2)) for i in [lo, hi],
/// rescaled by the window maximum so tiny sigmas cannot underflow to an
/// all-zero window. Renormalization cancels the rescale exactly.
inline std::vector<double> axis_weights(int lo, int hi, double center,
                                        double sigma) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> exponent(static_cast<std::size_t>(hi - lo + 1));
  double emin = std::numeric_limits<double>::infinity();
  for (int i = lo; i <= hi; ++i) {
    const double d = static_cast<double>(i) - center;
    const double e = d * d * inv2s2;
    exponent[static_cast<std::size_t>(i - lo)] = e;
    emin = std::min(emin, e);
  }
  std::vector<double> w(exponent.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(emin - exponent[i]);
  }
  return w;
}

}  // namespace detail

/// Eq-style impulse grid: a unit spike at the pixel containing each head.
/// Fractional coordinates round to the nearest pixel, ties toward the
/// smaller index; the sum equals the head count exactly.
inline DensityMap impulse_map(const std::vector<Point2D>& heads, Shape shape) {
  if (shape.rows <= 0 || shape.cols <= 0) {
    throw ValidationError("impulse_map: non-positive shape");
  }
  DensityMap map(shape);
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (!inside(shape, heads[i])) {
      std::ostringstream msg;
      msg << "impulse_map: head " << i << " at (" << heads[i].row << ", "
          << heads[i].col << ") outside " << shape.rows << "x" << shape.cols;
      throw ValidationError(msg.str());
    }
    const int r = std::clamp(detail::round_half_down(heads[i].row), 0,
                             shape.rows - 1);
    const int c = std::clamp(detail::round_half_down(heads[i].col), 0,
                             shape.cols - 1);
    map.at(r, c) += 1.0;
  }
  return map;
}

/// Adds one person at `center`: a separable Gaussian on the truncated
/// window, clipped to the raster and renormalized so the clipped mass sums
/// to exactly 1. The kernel is centered at the exact fractional position.
inline void splat_gaussian(DensityMap& map, const Point2D& center,
                           const KernelSpec& kernel) {
  detail::check_kernel(kernel);
  if (!inside(map.shape(), center)) {
    std::ostringstream msg;
    msg << "splat_gaussian: center (" << center.row << ", " << center.col
        << ") outside " << map.rows << "x" << map.cols;
    throw ValidationError(msg.str());
  }

  const double rr = kernel.truncation_radius_in_sigmas * kernel.sigma_row;
  const double rc = kernel.truncation_radius_in_sigmas * kernel.sigma_col;
  // Pixel whose center is nearest the splat center; keeping it in the
  // window guarantees a nonempty, positive-mass footprint for any sigma.
  const int pr = std::clamp(detail::round_half_down(center.row), 0, map.rows - 1);
  const int pc = std::clamp(detail::round_half_down(center.col), 0, map.cols - 1);
  int r0 = std::max(0, static_cast<int>(std::ceil(center.row - rr)));
  int r1 = std::min(map.rows - 1, static_cast<int>(std::floor(center.row + rr)));
  int c0 = std::max(0, static_cast<int>(std::ceil(center.col - rc)));
  int c1 = std::min(map.cols - 1, static_cast<int>(std::floor(center.col + rc)));
  r0 = std::min(r0, pr);
  r1 = std::max(r1, pr);
  c0 = std::min(c0, pc);
  c1 = std::max(c1, pc);

  const std::vector<double> wr =
      detail::axis_weights(r0, r1, center.row, kernel.sigma_row);
  const std::vector<double> wc =
      detail::axis_weights(c0, c1, center.col, kernel.sigma_col);
  const double sum_r = std::accumulate(wr.begin(), wr.end(), 0.0);
  const double sum_c = std::accumulate(wc.begin(), wc.end(), 0.0);
  const double inv_total = 1.0 / (sum_r * sum_c);

  for (int r = r0; r <= r1; ++r) {
    double* row = &map.at(r, c0);
    const double wrow = wr[static_cast<std::size_t>(r - r0)] * inv_total;
    for (int c = c0; c <= c1; ++c) {
      row[c - c0] += wrow * wc[static_cast<std::size_t>(c - c0)];
    }
  }
}

/// Fixed-kernel ground truth: one isotropic splat of width `sigma` per head.
inline DensityMap gen_fixed(const ImageAnnotation& ann, double sigma,
                            double truncation_radius_in_sigmas = 3.0) {
  if (!(sigma > 0.0)) throw ValidationError("gen_fixed: sigma must be positive");
  validate_annotation(ann);
  DensityMap map(ann.shape);
  const KernelSpec kernel{sigma, sigma, truncation_radius_in_sigmas};
  for (const Point2D& head : ann.heads) {
    splat_gaussian(map, head, kernel);
  }
  return map;
}

/// Mean Euclidean distance from head i to its min(k, P-1) nearest other
/// heads; empty when the head has no neighbors.
inline std::optional<double> knn_mean_distance(const std::vector<Point2D>& heads,
                                               std::size_t i, int k) {
  if (i >= heads.size()) {
    throw ValidationError("knn_mean_distance: index out of range");
  }
  if (k < 1) throw ValidationError("knn_mean_distance: k must be >= 1");
  if (heads.size() <= 1) return std::nullopt;

  std::vector<double> dist;
  dist.reserve(heads.size() - 1);
  for (std::size_t j = 0; j < heads.size(); ++j) {
    if (j == i) continue;
    dist.push_back(euclidean(heads[i], heads[j]));
  }
  const std::size_t take = std::min<std::size_t>(k, dist.size());
  std::nth_element(dist.begin(), dist.begin() + (take - 1), dist.end());
  double total = 0.0;
  for (std::size_t j = 0; j < take; ++j) total += dist[j];
  return total / static_cast<double>(take);
}

/// Variable-kernel ground truth: sigma_i = beta * knn mean distance, floored
/// at min_sigma; isolated heads use fallback_sigma.
inline DensityMap gen_knn(const ImageAnnotation& ann, const KnnConfig& cfg) {
  if (cfg.k < 1) throw ValidationError("gen_knn: k must be >= 1");
  if (!(cfg.beta > 0.0)) throw ValidationError("gen_knn: beta must be positive");
  if (!(cfg.fallback_sigma > 0.0)) {
    throw ValidationError("gen_knn: fallback_sigma must be positive");
  }
  if (!(cfg.min_sigma > 0.0)) {
    throw ValidationError("gen_knn: min_sigma must be positive");
  }
  validate_annotation(ann);
  DensityMap map(ann.shape);
  for (std::size_t i = 0; i < ann.heads.size(); ++i) {
    const std::optional<double> d = knn_mean_distance(ann.heads, i, cfg.k);
    double sigma = d ? cfg.beta * *d : cfg.fallback_sigma;
    sigma = std::max(sigma, cfg.min_sigma);
    splat_gaussian(map, ann.heads[i],
                   KernelSpec{sigma, sigma, cfg.truncation_radius_in_sigmas});
  }
  return map;
}

/// The map's integral; the count readout used everywhere downstream.
inline double count_from_map(const DensityMap& map) { return map.sum(); }

inline int pad_to_multiple(int extent, int factor) {
  const int rem = extent % factor;
  return rem == 0 ? 0 : factor - rem;
}

/// Sum-pools factor x factor blocks, zero-padding ragged edges first, so the
/// integral is preserved.
inline DensityMap downscale_preserving_count(const DensityMap& map, int factor) {
  if (factor <= 0) {
    throw ValidationError("downscale_preserving_count: factor must be >= 1");
  }
  if (factor == 1) return map;
  const int out_rows = (map.rows + pad_to_multiple(map.rows, factor)) / factor;
  const int out_cols = (map.cols + pad_to_multiple(map.cols, factor)) / factor;
  DensityMap out(out_rows, out_cols);
  for (int r = 0; r < map.rows; ++r) {
    const int orow = r / factor;
    for (int c = 0; c < map.cols; ++c) {
      out.at(orow, c / factor) += map.at(r, c);
    }
  }
  return out;
}

}  // namespace crowdmap
