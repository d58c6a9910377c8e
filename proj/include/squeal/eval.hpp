#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "squeal/io.hpp"
#include "squeal/noise_class.hpp"

namespace squeal {

/// Time-frequency rectangle: x is time (s), z is frequency (Hz).
/// Ground-truth boxes carry no confidence.
struct BBox {
  double x0 = 0.0, x1 = 0.0;
  double z0 = 0.0, z1 = 0.0;
  NoiseClass cls = NoiseClass::Squeal;
  std::optional<double> confidence;

  double area() const { return (x1 - x0) * (z1 - z0); }
  void validate() const;
};

/// Boxes belonging to one recording ("image").
struct ImageAnnotation {
  std::string image_id;
  std::vector<BBox> boxes;
};

json to_json(const BBox& b);
BBox bbox_from_json(const json& j);
json to_json(const ImageAnnotation& a);
ImageAnnotation image_annotation_from_json(const json& j);
/// Accepts either a single image object or an array of them.
std::vector<ImageAnnotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, std::span<const ImageAnnotation> images);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Each metric is empty when its denominator vanishes. Accuracy is TP over
/// all counts, not (TP + TN) over all counts.
struct ClassificationMetrics {
  std::optional<double> accuracy, precision, recall, tnr, f1;
};

ClassificationMetrics classification_metrics(const ConfusionCounts& c);

/// Matthews correlation coefficient; 0 when any marginal is empty.
double mcc(const ConfusionCounts& c);

/// Half-up rounding used when comparing against two-decimal tables.
double round_half_up(double value, int decimals);

/// Jaccard index of two rectangles.
double iou(const BBox& a, const BBox& b);

struct Match {
  std::size_t pred = 0;
  std::optional<std::size_t> gt;  // best unmatched same-class box, if any
  double iou = 0.0;
  bool true_positive = false;
};

struct MatchResult {
  std::map<NoiseClass, ConfusionCounts> counts;
  std::vector<Match> matches;  // in processing order (descending confidence)
};

/// Greedy matching within one image: predictions by descending confidence
/// (ties: earlier x0, then input order) each take the unmatched same-class
/// ground truth of highest IoU (ties: earlier x0). IoU >= iou_min is a TP,
/// anything else an FP; leftover ground truth is FN. TN stays zero.
MatchResult match_detections(std::span<const BBox> gt, std::span<const BBox> pred, double iou_min);

struct RankedDetection {
  double confidence = 0.0;
  bool true_positive = false;
};

struct PRPoint {
  double confidence = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t n_gt = 0;
};

/// Cumulative precision/recall down a confidence-ranked list. Throws when
/// there are detections but no ground truth.
PRCurve pr_curve(std::span<const RankedDetection> ranked, std::size_t n_gt);

enum class ApMode { AllPoints, ElevenPoint };

/// Area under the interpolated precision envelope (AllPoints) or the mean of
/// the envelope at recall 0, 0.1, ..., 1 (ElevenPoint).
double average_precision(const PRCurve& curve, ApMode mode = ApMode::AllPoints);

double mean_ap(std::span<const double> aps);

struct ClassReport {
  NoiseClass cls = NoiseClass::Squeal;
  ConfusionCounts detection;        // box level at the IoU threshold
  ConfusionCounts classification;   // image level, TN counted
  ClassificationMetrics detection_metrics;
  ClassificationMetrics classification_metrics;
  PRCurve curve;
  double ap = 0.0;
};

struct DetectionReport {
  double iou_min = 0.5;
  double c_min = 0.0;
  std::vector<ClassReport> classes;
  double map = 0.0;  // over classes with ground truth
};

/// Corpus evaluation. Predictions below c_min are dropped; images are paired
/// by id and predictions for unknown ids count as false positives.
DetectionReport evaluate_corpus(std::span<const ImageAnnotation> gt,
                                std::span<const ImageAnnotation> pred, double iou_min,
                                double c_min = 0.0, ApMode mode = ApMode::AllPoints);

/// Image-level classification counts per class: an image is positive for a
/// class if it holds at least one box of that class.
std::map<NoiseClass, ConfusionCounts> classify_images(std::span<const ImageAnnotation> gt,
                                                      std::span<const ImageAnnotation> pred,
                                                      double c_min);

struct SweepPoint {
  double c_min = 0.0;
  DetectionReport report;
};

std::vector<SweepPoint> confidence_sweep(std::span<const ImageAnnotation> gt,
                                         std::span<const ImageAnnotation> pred, double iou_min,
                                         std::span<const double> thresholds);

/// Threshold maximising the unweighted mean of the per-class classification
/// F1 (undefined F1 counts as 0). Earliest threshold wins ties.
double best_operating_point(std::span<const SweepPoint> sweep);

/// Right-continuous empirical CDF.
class Ecdf {
 public:
  explicit Ecdf(std::vector<double> values);

  double operator()(double x) const;
  /// Smallest sample v with F(v) >= q.
  double quantile(double q) const;
  const std::vector<double>& sorted() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

}  // namespace squeal
