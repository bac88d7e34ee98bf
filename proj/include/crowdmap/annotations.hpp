#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "crowdmap/errors.hpp"

namespace crowdmap {

/// (row, col), origin at the top-left corner, zero-indexed.
/// Fractional coordinates are legal; annotation tools emit sub-pixel points.
struct Point2D {
  double row = 0.0;
  double col = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

inline double euclidean(const Point2D& a, const Point2D& b) {
  return std::hypot(a.row - b.row, a.col - b.col);
}

/// Axis-aligned box given by its centroid and extents in pixels.
struct BBox {
  Point2D center;
  double height = 0.0;
  double width = 0.0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Raster extent in pixels.
struct Shape {
  int rows = 0;
  int cols = 0;

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline bool inside(const Shape& s, const Point2D& p) {
  return p.row >= 0.0 && p.col >= 0.0 && p.row < s.rows && p.col < s.cols;
}

/// One image entry: identifier, pixel extent, and the annotated head points.
/// Duplicate points are legal and accumulate.
struct ImageAnnotation {
  std::string image_id;
  Shape shape;
  std::vector<Point2D> heads;

  int person_count() const { return static_cast<int>(heads.size()); }
};

/// Face boxes produced by an external detector, possibly empty.
struct DetectionSet {
  std::string image_id;
  std::vector<BBox> boxes;
};

inline void validate_annotation(const ImageAnnotation& ann) {
  if (ann.shape.rows <= 0 || ann.shape.cols <= 0) {
    throw ValidationError("image '" + ann.image_id + "': non-positive shape");
  }
  for (std::size_t i = 0; i < ann.heads.size(); ++i) {
    const Point2D& p = ann.heads[i];
    if (!std::isfinite(p.row) || !std::isfinite(p.col) || !inside(ann.shape, p)) {
      std::ostringstream msg;
      msg << "image '" << ann.image_id << "': head " << i << " at (" << p.row
          << ", " << p.col << ") lies outside shape " << ann.shape.rows << "x"
          << ann.shape.cols;
      throw ValidationError(msg.str());
    }
  }
}

inline void validate_box_dims(const BBox& b, const std::string& image_id,
                              std::size_t index) {
  if (!(b.height > 0.0) || !(b.width > 0.0) || !std::isfinite(b.height) ||
      !std::isfinite(b.width)) {
    std::ostringstream msg;
    msg << "image '" << image_id << "': box " << index
        << " has non-positive size " << b.height << "x" << b.width;
    throw ValidationError(msg.str());
  }
  if (!std::isfinite(b.center.row) || !std::isfinite(b.center.col) ||
      b.center.row < 0.0 || b.center.col < 0.0) {
    std::ostringstream msg;
    msg << "image '" << image_id << "': box " << index
        << " has invalid center (" << b.center.row << ", " << b.center.col
        << ")";
    throw ValidationError(msg.str());
  }
}

/// Box centers must lie inside the owning image; the box itself may extend
/// past the edge (clipped only at rasterization time).
inline void validate_detections(const DetectionSet& det, const Shape& shape) {
  for (std::size_t i = 0; i < det.boxes.size(); ++i) {
    validate_box_dims(det.boxes[i], det.image_id, i);
    if (!inside(shape, det.boxes[i].center)) {
      std::ostringstream msg;
      msg << "image '" << det.image_id << "': box " << i << " center ("
          << det.boxes[i].center.row << ", " << det.boxes[i].center.col
          << ") lies outside shape " << shape.rows << "x" << shape.cols;
      throw ValidationError(msg.str());
    }
  }
}

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline double number_field(const nlohmann::json& j, const std::string& ctx) {
  if (!j.is_number()) throw ParseError(ctx + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

/// Reads the annotation file: a top-level list of
/// {"image": id, "shape": [rows, cols], "heads": [[row, col], ...]}.
/// Head order is preserved; records failing validation abort the parse.
inline std::vector<ImageAnnotation> parse_annotations(const std::string& path) {
  const nlohmann::json root = detail::load_json_file(path);
  if (!root.is_array()) {
    throw ParseError(path + ": top level must be a list of image records");
  }
  std::vector<ImageAnnotation> out;
  out.reserve(root.size());
  for (std::size_t rec = 0; rec < root.size(); ++rec) {
    const auto& r = root[rec];
    const std::string ctx = path + ": record " + std::to_string(rec);
    if (!r.is_object() || !r.contains("image") || !r.contains("shape") ||
        !r.contains("heads")) {
      throw ParseError(ctx + ": need fields image, shape, heads");
    }
    if (!r["image"].is_string()) throw ParseError(ctx + ": image must be a string");
    ImageAnnotation ann;
    ann.image_id = r["image"].get<std::string>();
    const auto& sh = r["shape"];
    if (!sh.is_array() || sh.size() != 2 || !sh[0].is_number_integer() ||
        !sh[1].is_number_integer()) {
      throw ParseError(ctx + ": shape must be [rows, cols] integers");
    }
    ann.shape = Shape{sh[0].get<int>(), sh[1].get<int>()};
    const auto& heads = r["heads"];
    if (!heads.is_array()) throw ParseError(ctx + ": heads must be a list");
    ann.heads.reserve(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const auto& pt = heads[h];
      const std::string hctx = ctx + ", head " + std::to_string(h);
      if (!pt.is_array() || pt.size() != 2) {
        throw ParseError(hctx + ": expected [row, col]");
      }
      ann.heads.push_back(Point2D{detail::number_field(pt[0], hctx),
                                  detail::number_field(pt[1], hctx)});
    }
    validate_annotation(ann);
    out.push_back(std::move(ann));
  }
  return out;
}

/// Reads the detection file: a top-level list of
/// {"image": id, "boxes": [{"cy": r, "cx": c, "h": h, "w": w}, ...]}.
/// Box sizes are validated here; centers are checked against the image shape
/// at the point of use, where the shape is known.
inline std::vector<DetectionSet> parse_detections(const std::string& path) {
  const nlohmann::json root = detail::load_json_file(path);
  if (!root.is_array()) {
    throw ParseError(path + ": top level must be a list of image records");
  }
  std::vector<DetectionSet> out;
  out.reserve(root.size());
  for (std::size_t rec = 0; rec < root.size(); ++rec) {
    const auto& r = root[rec];
    const std::string ctx = path + ": record " + std::to_string(rec);
    if (!r.is_object() || !r.contains("image") || !r.contains("boxes")) {
      throw ParseError(ctx + ": need fields image, boxes");
    }
    if (!r["image"].is_string()) throw ParseError(ctx + ": image must be a string");
    DetectionSet det;
    det.image_id = r["image"].get<std::string>();
    const auto& boxes = r["boxes"];
    if (!boxes.is_array()) throw ParseError(ctx + ": boxes must be a list");
    det.boxes.reserve(boxes.size());
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const auto& jb = boxes[b];
      const std::string bctx = ctx + ", box " + std::to_string(b);
      if (!jb.is_object() || !jb.contains("cy") || !jb.contains("cx") ||
          !jb.contains("h") || !jb.contains("w")) {
        throw ParseError(bctx + ": need fields cy, cx, h, w");
      }
      BBox box;
      box.center.row = detail::number_field(jb["cy"], bctx);
      box.center.col = detail::number_field(jb["cx"], bctx);
      box.height = detail::number_field(jb["h"], bctx);
      box.width = detail::number_field(jb["w"], bctx);
      validate_box_dims(box, det.image_id, b);
      det.boxes.push_back(box);
    }
    out.push_back(std::move(det));
  }
  return out;
}

/// Entry for `image_id`, or an empty set when the file has no such record.
inline DetectionSet detections_for(const std::vector<DetectionSet>& sets,
                                   const std::string& image_id) {
  for (const auto& d : sets) {
    if (d.image_id == image_id) return d;
  }
  return DetectionSet{image_id, {}};
}

inline nlohmann::json annotations_to_json(
    const std::vector<ImageAnnotation>& anns) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& ann : anns) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& p : ann.heads) {
      heads.push_back({p.row, p.col});
    }
    root.push_back({{"image", ann.image_id},
                    {"shape", {ann.shape.rows, ann.shape.cols}},
                    {"heads", std::move(heads)}});
  }
  return root;
}

inline nlohmann::json detections_to_json(const std::vector<DetectionSet>& sets) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& det : sets) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : det.boxes) {
      boxes.push_back({{"cy", b.center.row},
                       {"cx", b.center.col},
                       {"h", b.height},
                       {"w", b.width}});
    }
    root.push_back({{"image", det.image_id}, {"boxes", std::move(boxes)}});
  }
  return root;
}

}  // namespace crowdmap
