#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crowdmap/annotations.hpp"
#include "crowdmap/errors.hpp"
#include "crowdmap/image.hpp"
#include "crowdmap/msnn.hpp"

namespace crowdmap {

struct EvalRecord {
  std::string image_id;
  double y_true = 0.0;
  double y_pred = 0.0;
};

inline double mae(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValidationError("mae: empty record set");
  double total = 0.0;
  for (const EvalRecord& r : records) total += std::abs(r.y_true - r.y_pred);
  return total / static_cast<double>(records.size());
}

inline double rmse(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValidationError("rmse: empty record set");
  double total = 0.0;
  for (const EvalRecord& r : records) {
    const double d = r.y_true - r.y_pred;
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(records.size()));
}

struct MissingRecord {
  std::string image_id;
  double y_true = 0.0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<MissingRecord> missing;  // images that could not be loaded
  double mae = 0.0;
  double rmse = 0.0;
};

/// Per-image counts over a test set: y_true is the annotated head count,
/// y_pred the integral of the network's clamped prediction. Images the
/// loader cannot provide become error entries; aggregates cover the rest.
inline EvalReport evaluate(
    const Network& net, const std::vector<ImageAnnotation>& annotations,
    const std::function<std::optional<GrayImage>(const std::string&)>& loader) {
  EvalReport report;
  for (const ImageAnnotation& ann : annotations) {
    std::optional<GrayImage> img = loader(ann.image_id);
    if (!img) {
      report.missing.push_back(
          MissingRecord{ann.image_id, static_cast<double>(ann.person_count())});
      continue;
    }
    EvalRecord rec;
    rec.image_id = ann.image_id;
    rec.y_true = static_cast<double>(ann.person_count());
    rec.y_pred = predict_count(net, tensor_from_image(*img));
    report.records.push_back(std::move(rec));
  }
  if (!report.records.empty()) {
    report.mae = mae(report.records);
    report.rmse = rmse(report.records);
  }
  return report;
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

/// Report rows `image_id,y_true,y_pred,abs_err`, then footer lines
/// `MAE,<v>` and `RMSE,<v>`. Unloadable images keep their row with empty
/// prediction columns.
inline std::string report_to_csv(const EvalReport& report) {
  std::string out = "image_id,y_true,y_pred,abs_err\n";
  for (const EvalRecord& r : report.records) {
    out += r.image_id + "," + format_double(r.y_true) + "," +
           format_double(r.y_pred) + "," +
           format_double(std::abs(r.y_true - r.y_pred)) + "\n";
  }
  for (const MissingRecord& m : report.missing) {
    out += m.image_id + "," + format_double(m.y_true) + ",,\n";
  }
  out += "MAE," + format_double(report.mae) + "\n";
  out += "RMSE," + format_double(report.rmse) + "\n";
  return out;
}

}  // namespace crowdmap
