#include "squeal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "squeal/signal.hpp"

namespace squeal {

void BBox::validate() const {
  if (!(x0 < x1) || !(z0 < z1)) throw Error("bounding box must satisfy x0 < x1 and z0 < z1");
  if (confidence && (*confidence < 0.0 || *confidence > 1.0))
    throw Error("bounding box confidence outside [0, 1]");
}

json to_json(const BBox& b) {
  json j = {{"class", to_string(b.cls)}, {"x0", b.x0}, {"x1", b.x1}, {"z0", b.z0}, {"z1", b.z1}};
  if (b.confidence) j["confidence"] = *b.confidence;
  return j;
}

BBox bbox_from_json(const json& j) {
  BBox b;
  b.cls = noise_class_from_string(j.at("class").get<std::string>());
  b.x0 = j.at("x0").get<double>();
  b.x1 = j.at("x1").get<double>();
  b.z0 = j.at("z0").get<double>();
  b.z1 = j.at("z1").get<double>();
  if (j.contains("confidence") && !j["confidence"].is_null())
    b.confidence = j["confidence"].get<double>();
  b.validate();
  return b;
}

json to_json(const ImageAnnotation& a) {
  json boxes = json::array();
  for (const auto& b : a.boxes) boxes.push_back(to_json(b));
  return {{"image_id", a.image_id}, {"boxes", boxes}};
}

ImageAnnotation image_annotation_from_json(const json& j) {
  ImageAnnotation a;
  a.image_id = j.at("image_id").get<std::string>();
  for (const auto& b : j.at("boxes")) a.boxes.push_back(bbox_from_json(b));
  return a;
}

std::vector<ImageAnnotation> read_annotations(const std::filesystem::path& path) {
  const json j = read_json(path);
  std::vector<ImageAnnotation> out;
  try {
    if (j.is_array()) {
      for (const auto& item : j) out.push_back(image_annotation_from_json(item));
    } else {
      out.push_back(image_annotation_from_json(j));
    }
  } catch (const json::exception& e) {
    throw Error("malformed annotation file " + path.string() + ": " + e.what());
  }
  return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const ImageAnnotation> images) {
  json arr = json::array();
  for (const auto& img : images) arr.push_back(to_json(img));
  write_json(path, arr);
}

namespace {
std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}
}  // namespace

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  const auto tn = static_cast<double>(c.tn);
  ClassificationMetrics m;
  m.accuracy = ratio(tp, tp + fp + fn + tn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.tnr = ratio(tn, fp + tn);
  if (m.precision && m.recall) m.f1 = ratio(2.0 * *m.precision * *m.recall, *m.precision + *m.recall);
  return m;
}

double mcc(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  const auto tn = static_cast<double>(c.tn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

double iou(const BBox& a, const BBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.z1, b.z1) - std::max(a.z0, b.z0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(std::span<const BBox> gt, std::span<const BBox> pred, double iou_min) {
  if (!(iou_min > 0.0 && iou_min <= 1.0)) throw Error("iou threshold must be in (0, 1]");
  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ca = pred[a].confidence.value_or(1.0);
    const double cb = pred[b].confidence.value_or(1.0);
    if (ca != cb) return ca > cb;
    return pred[a].x0 < pred[b].x0;
  });

  MatchResult result;
  std::vector<bool> taken(gt.size(), false);
  for (std::size_t p : order) {
    Match m{p, std::nullopt, 0.0, false};
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g] || gt[g].cls != pred[p].cls) continue;
      const double v = iou(gt[g], pred[p]);
      if (!m.gt || v > m.iou || (v == m.iou && gt[g].x0 < gt[*m.gt].x0)) {
        m.gt = g;
        m.iou = v;
      }
    }
    auto& counts = result.counts[pred[p].cls];
    if (m.gt && m.iou >= iou_min) {
      m.true_positive = true;
      taken[*m.gt] = true;
      ++counts.tp;
    } else {
      ++counts.fp;
    }
    result.matches.push_back(m);
  }
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (!taken[g]) ++result.counts[gt[g].cls].fn;
  return result;
}

PRCurve pr_curve(std::span<const RankedDetection> ranked, std::size_t n_gt) {
  if (n_gt == 0 && !ranked.empty())
    throw Error("pr_curve: recall undefined without ground truth");
  PRCurve curve;
  curve.n_gt = n_gt;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].true_positive) ++tp;
    curve.points.push_back({ranked[i].confidence,
                            static_cast<double>(tp) / static_cast<double>(i + 1),
                            static_cast<double>(tp) / static_cast<double>(n_gt)});
  }
  return curve;
}

double average_precision(const PRCurve& curve, ApMode mode) {
  if (curve.points.empty() || curve.n_gt == 0) return 0.0;
  if (mode == ApMode::ElevenPoint) {
    double sum = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double best = 0.0;
      for (const auto& p : curve.points)
        if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
      sum += best;
    }
    return sum / 11.0;
  }
  std::vector<double> rec{0.0}, prec{0.0};
  for (const auto& p : curve.points) {
    rec.push_back(p.recall);
    prec.push_back(p.precision);
  }
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i)
    if (rec[i + 1] != rec[i]) ap += (rec[i + 1] - rec[i]) * prec[i + 1];
  return ap;
}

double mean_ap(std::span<const double> aps) {
  if (aps.empty()) throw Error("mean_ap: no classes");
  return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

namespace {

std::vector<BBox> filtered(const std::vector<BBox>& boxes, double c_min) {
  std::vector<BBox> out;
  for (const auto& b : boxes)
    if (b.confidence.value_or(1.0) >= c_min) out.push_back(b);
  return out;
}

struct PairedImage {
  const std::vector<BBox>* gt = nullptr;
  const std::vector<BBox>* pred = nullptr;
};

std::map<std::string, PairedImage> pair_images(std::span<const ImageAnnotation> gt,
                                               std::span<const ImageAnnotation> pred) {
  std::map<std::string, PairedImage> images;
  for (const auto& g : gt) images[g.image_id].gt = &g.boxes;
  for (const auto& p : pred) images[p.image_id].pred = &p.boxes;
  return images;
}

}  // namespace

std::map<NoiseClass, ConfusionCounts> classify_images(std::span<const ImageAnnotation> gt,
                                                      std::span<const ImageAnnotation> pred,
                                                      double c_min) {
  std::map<NoiseClass, ConfusionCounts> out;
  for (const auto& [id, img] : pair_images(gt, pred)) {
    for (auto cls : kAllNoiseClasses) {
      bool truth = false, predicted = false;
      if (img.gt)
        truth = std::any_of(img.gt->begin(), img.gt->end(), [&](const BBox& b) { return b.cls == cls; });
      if (img.pred)
        predicted = std::any_of(img.pred->begin(), img.pred->end(), [&](const BBox& b) {
          return b.cls == cls && b.confidence.value_or(1.0) >= c_min;
        });
      auto& c = out[cls];
      if (truth && predicted) ++c.tp;
      else if (predicted) ++c.fp;
      else if (truth) ++c.fn;
      else ++c.tn;
    }
  }
  return out;
}

DetectionReport evaluate_corpus(std::span<const ImageAnnotation> gt,
                                std::span<const ImageAnnotation> pred, double iou_min,
                                double c_min, ApMode mode) {
  DetectionReport report;
  report.iou_min = iou_min;
  report.c_min = c_min;

  std::map<NoiseClass, ConfusionCounts> det;
  std::map<NoiseClass, std::vector<RankedDetection>> ranked;
  std::map<NoiseClass, std::size_t> n_gt;
  static const std::vector<BBox> kEmpty;
  for (const auto& [id, img] : pair_images(gt, pred)) {
    const auto& g = img.gt ? *img.gt : kEmpty;
    const auto p = filtered(img.pred ? *img.pred : kEmpty, c_min);
    for (const auto& b : g) ++n_gt[b.cls];
    auto result = match_detections(g, p, iou_min);
    for (const auto& [cls, c] : result.counts) det[cls] += c;
    for (const auto& m : result.matches)
      ranked[p[m.pred].cls].push_back({p[m.pred].confidence.value_or(1.0), m.true_positive});
  }
  const auto cls_counts = classify_images(gt, pred, c_min);

  std::vector<double> aps;
  for (auto cls : kAllNoiseClasses) {
    const bool has_gt = n_gt[cls] > 0;
    if (!has_gt && ranked[cls].empty()) continue;
    ClassReport cr;
    cr.cls = cls;
    cr.detection = det[cls];
    cr.classification = cls_counts.at(cls);
    cr.detection_metrics = classification_metrics(cr.detection);
    cr.classification_metrics = classification_metrics(cr.classification);
    auto& r = ranked[cls];
    std::stable_sort(r.begin(), r.end(), [](const RankedDetection& a, const RankedDetection& b) {
      return a.confidence > b.confidence;
    });
    if (has_gt) {
      cr.curve = pr_curve(r, n_gt[cls]);
      cr.ap = average_precision(cr.curve, mode);
      aps.push_back(cr.ap);
    }
    report.classes.push_back(std::move(cr));
  }
  report.map = aps.empty() ? 0.0 : mean_ap(aps);
  return report;
}

std::vector<SweepPoint> confidence_sweep(std::span<const ImageAnnotation> gt,
                                         std::span<const ImageAnnotation> pred, double iou_min,
                                         std::span<const double> thresholds) {
  std::vector<SweepPoint> out;
  for (double c : thresholds) out.push_back({c, evaluate_corpus(gt, pred, iou_min, c)});
  return out;
}

double best_operating_point(std::span<const SweepPoint> sweep) {
  if (sweep.empty()) throw Error("best_operating_point: empty sweep");
  double best_c = sweep.front().c_min;
  double best_score = -1.0;
  for (const auto& pt : sweep) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& cr : pt.report.classes) {
      sum += cr.classification_metrics.f1.value_or(0.0);
      ++n;
    }
    const double score = n ? sum / static_cast<double>(n) : 0.0;
    if (score > best_score) {
      best_score = score;
      best_c = pt.c_min;
    }
  }
  return best_c;
}

Ecdf::Ecdf(std::vector<double> values) : sorted_(std::move(values)) {
  if (sorted_.empty()) throw Error("ecdf: no values");
  for (double v : sorted_)
    if (!std::isfinite(v)) throw Error("ecdf: non-finite value");
  std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double Ecdf::quantile(double q) const {
  const double n = static_cast<double>(sorted_.size());
  const double k = std::ceil(q * n - 1e-9);
  if (k <= 1.0) return sorted_.front();
  return sorted_[std::min(sorted_.size(), static_cast<std::size_t>(k)) - 1];
}

}  // namespace squeal
