#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/density_core.hpp"
#include "crowdmap/density_map.hpp"
#include "crowdmap/errors.hpp"

#include "json.hpp"

namespace crowdmap {

/// Which rectangle set the per-person overlap count runs against. The
/// default counts the other persons' interpolated overlap regions; the
/// alternative counts raw detector boxes.
enum class OverlapAgainst { kRegions, kDetections };

struct FaceGtConfig {
  int t_overlaps = 3;
  double crowded_sigma = 4.0;
  double sigma_scale = 1.0;
  double distance_epsilon = 1e-6;
  double truncation_radius_in_sigmas = 3.0;
  OverlapAgainst overlap_against = OverlapAgainst::kRegions;
};

/// Per-person outcome of the interpolation pass, for rendering and sidecars.
struct PersonBox {
  int person_index = 0;
  BBox box;
  bool crowded = false;
};

/// Inverse distance, clamped at eps. Drives the overlap-region average.
inline double overlap_weight(const Point2D& x, const Point2D& c, double eps) {
  return 1.0 / std::max(euclidean(x, c), eps);
}

/// Inverse distance to the tenth power; far detections are nearly ignored.
inline double bb_weight(const Point2D& x, const Point2D& c, double eps) {
  const double d = std::max(euclidean(x, c), eps);
  return 1.0 / std::pow(d, 10.0);
}

namespace detail {

template <typename WeightFn>
std::optional<BBox> weighted_box(const Point2D& x, const DetectionSet& dets,
                                 double eps, WeightFn&& weight) {
  if (dets.boxes.empty()) return std::nullopt;
  double wsum = 0.0, hsum = 0.0, wwidth = 0.0;
  for (const BBox& b : dets.boxes) {
    const double w = weight(x, b.center, eps);
    wsum += w;
    hsum += w * b.height;
    wwidth += w * b.width;
  }
  return BBox{x, hsum / wsum, wwidth / wsum};
}

}  // namespace detail

/// Rectangle centered at x whose height/width are the inverse-distance
/// weighted averages of all detection heights/widths. Empty detections
/// return nullopt so callers can fall back.
inline std::optional<BBox> overlap_region(const Point2D& x,
                                          const DetectionSet& dets,
                                          double eps) {
  if (!(eps > 0.0)) throw ValidationError("overlap_region: eps must be positive");
  return detail::weighted_box(x, dets, eps, overlap_weight);
}

/// Same shape as overlap_region, but with the power-10 weights: the sharply
/// local interpolation that sizes the Gaussian for isolated people.
inline std::optional<BBox> interpolate_box(const Point2D& x,
                                           const DetectionSet& dets,
                                           double eps) {
  if (!(eps > 0.0)) throw ValidationError("interpolate_box: eps must be positive");
  return detail::weighted_box(x, dets, eps, bb_weight);
}

/// Open-interior intersection: rectangles touching only along an edge do
/// not overlap.
inline bool boxes_overlap(const BBox& a, const BBox& b) {
  return std::abs(a.center.row - b.center.row) * 2.0 < a.height + b.height &&
         std::abs(a.center.col - b.center.col) * 2.0 < a.width + b.width;
}

/// Uniform-cell spatial hash over rectangles; cell size follows the median
/// rectangle extent so typical queries touch O(1) cells.
class RectGridIndex {
 public:
  explicit RectGridIndex(const std::vector<BBox>& rects) : rects_(&rects) {
    double cell = 1.0;
    if (!rects.empty()) {
      std::vector<double> extents;
      extents.reserve(rects.size());
      for (const BBox& r : rects) extents.push_back(std::max(r.height, r.width));
      auto mid = extents.begin() + extents.size() / 2;
      std::nth_element(extents.begin(), mid, extents.end());
      cell = std::max(1.0, *mid);
    }
    cell_ = cell;
    buckets_.reserve(rects.size() * 2);
    for (std::size_t i = 0; i < rects.size(); ++i) {
      visit_cells(rects[i], [&](std::int64_t key) {
        buckets_[key].push_back(static_cast<int>(i));
      });
    }
    seen_.assign(rects.size(), -1);
  }

  /// Indices j != skip whose rectangle intersects `query` with positive area.
  int count_intersecting(const BBox& query, int skip) const {
    int count = 0;
    ++stamp_;
    visit_cells(query, [&](std::int64_t key) {
      auto it = buckets_.find(key);
      if (it == buckets_.end()) return;
      for (int j : it->second) {
        if (j == skip || seen_[static_cast<std::size_t>(j)] == stamp_) continue;
        seen_[static_cast<std::size_t>(j)] = stamp_;
        if (boxes_overlap(query, (*rects_)[static_cast<std::size_t>(j)])) {
          ++count;
        }
      }
    });
    return count;
  }

 private:
  template <typename Fn>
  void visit_cells(const BBox& r, Fn&& fn) const {
    const int r0 = cell_of(r.center.row - r.height / 2);
    const int r1 = cell_of(r.center.row + r.height / 2);
    const int c0 = cell_of(r.center.col - r.width / 2);
    const int c1 = cell_of(r.center.col + r.width / 2);
    for (int cr = r0; cr <= r1; ++cr) {
      for (int cc = c0; cc <= c1; ++cc) {
        fn((static_cast<std::int64_t>(cr) << 32) ^
           static_cast<std::uint32_t>(cc));
      }
    }
  }

  int cell_of(double v) const {
    return static_cast<int>(std::floor(v / cell_));
  }

  const std::vector<BBox>* rects_;
  double cell_ = 1.0;
  std::unordered_map<std::int64_t, std::vector<int>> buckets_;
  mutable std::vector<int> seen_;
  mutable int stamp_ = 0;
};

/// Number of other rectangles intersecting regions[i] with positive area.
inline int count_overlaps(const std::vector<BBox>& regions, std::size_t i) {
  if (regions.empty()) throw ValidationError("count_overlaps: empty region list");
  if (i >= regions.size()) {
    throw ValidationError("count_overlaps: index out of range");
  }
  RectGridIndex index(regions);
  return index.count_intersecting(regions[i], static_cast<int>(i));
}

/// Overlap counts for every region, sharing one index build.
inline std::vector<int> count_overlaps_all(const std::vector<BBox>& regions) {
  RectGridIndex index(regions);
  std::vector<int> counts(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    counts[i] = index.count_intersecting(regions[i], static_cast<int>(i));
  }
  return counts;
}

struct FaceGtResult {
  DensityMap map;
  std::vector<PersonBox> boxes;
};

/// Hybrid ground truth: persons in crowded neighborhoods get the fixed
/// crowded_sigma kernel, everyone else an anisotropic kernel sized by the
/// power-10 interpolated box. With no detections every person falls back to
/// crowded_sigma, reproducing gen_fixed.
inline FaceGtResult gen_face(const ImageAnnotation& ann,
                             const DetectionSet& dets,
                             const FaceGtConfig& cfg) {
  if (ann.image_id != dets.image_id) {
    throw ValidationError("gen_face: annotation is for '" + ann.image_id +
                          "' but detections are for '" + dets.image_id + "'");
  }
  if (cfg.t_overlaps < 0) {
    throw ValidationError("gen_face: t_overlaps must be >= 0");
  }
  if (!(cfg.crowded_sigma > 0.0) || !(cfg.sigma_scale > 0.0) ||
      !(cfg.distance_epsilon > 0.0)) {
    throw ValidationError("gen_face: config values must be positive");
  }
  validate_annotation(ann);
  validate_detections(dets, ann.shape);

  const std::size_t persons = ann.heads.size();
  FaceGtResult result{DensityMap(ann.shape), {}};
  result.boxes.reserve(persons);

  const KernelSpec crowded_kernel{cfg.crowded_sigma, cfg.crowded_sigma,
                                  cfg.truncation_radius_in_sigmas};

  if (dets.boxes.empty()) {
    for (std::size_t i = 0; i < persons; ++i) {
      splat_gaussian(result.map, ann.heads[i], crowded_kernel);
      result.boxes.push_back(PersonBox{
          static_cast<int>(i),
          BBox{ann.heads[i], cfg.crowded_sigma, cfg.crowded_sigma}, true});
    }
    return result;
  }

  std::vector<BBox> regions;
  regions.reserve(persons);
  for (const Point2D& head : ann.heads) {
    regions.push_back(*overlap_region(head, dets, cfg.distance_epsilon));
  }

  std::vector<int> overlaps(persons, 0);
  if (cfg.overlap_against == OverlapAgainst::kRegions) {
    overlaps = count_overlaps_all(regions);
  } else {
    RectGridIndex det_index(dets.boxes);
    for (std::size_t i = 0; i < persons; ++i) {
      overlaps[i] = det_index.count_intersecting(regions[i], -1);
    }
  }

  for (std::size_t i = 0; i < persons; ++i) {
    const bool crowded = overlaps[i] > cfg.t_overlaps;
    if (crowded) {
      splat_gaussian(result.map, ann.heads[i], crowded_kernel);
      result.boxes.push_back(PersonBox{
          static_cast<int>(i),
          BBox{ann.heads[i], cfg.crowded_sigma, cfg.crowded_sigma}, true});
    } else {
      const BBox d = *interpolate_box(ann.heads[i], dets, cfg.distance_epsilon);
      splat_gaussian(result.map, ann.heads[i],
                     KernelSpec{cfg.sigma_scale * d.height,
                                cfg.sigma_scale * d.width,
                                cfg.truncation_radius_in_sigmas});
      result.boxes.push_back(PersonBox{static_cast<int>(i), d, false});
    }
  }
  return result;
}

/// Sidecar record: the detection-file schema plus a "crowded" flag per box.
inline nlohmann::json person_boxes_to_json(const std::string& image_id,
                                           const std::vector<PersonBox>& boxes) {
  nlohmann::json jboxes = nlohmann::json::array();
  for (const PersonBox& pb : boxes) {
    jboxes.push_back({{"cy", pb.box.center.row},
                      {"cx", pb.box.center.col},
                      {"h", pb.box.height},
                      {"w", pb.box.width},
                      {"crowded", pb.crowded}});
  }
  return {{"image", image_id}, {"boxes", std::move(jboxes)}};
}

}  // namespace crowdmap
