#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "squeal/eval.hpp"

using namespace squeal;

namespace {

BBox box(double x0, double x1, double z0, double z1, NoiseClass c = NoiseClass::Squeal,
         std::optional<double> conf = std::nullopt) {
  return {x0, x1, z0, z1, c, conf};
}

PRCurve curve_of(std::initializer_list<bool> flags, std::size_t n_gt) {
  std::vector<RankedDetection> r;
  double c = 1.0;
  for (bool f : flags) r.push_back({c -= 0.1, f});
  return pr_curve(r, n_gt);
}

}  // namespace

TEST_SUITE("detection_eval") {

TEST_CASE("iou") {
  CHECK(iou(box(0, 2, 0, 2), box(0, 2, 0, 2)) == 1.0);
  CHECK(iou(box(0, 1, 0, 1), box(2, 3, 2, 3)) == 0.0);
  CHECK(iou(box(0, 2, 0, 2), box(1, 3, 1, 3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(box(0, 1, 0, 1), box(1, 2, 0, 1)) == 0.0);
}

TEST_CASE("greedy matching") {
  const std::vector<BBox> gt{box(0, 10, 0, 10)};
  {
    const std::vector<BBox> pred{box(0, 8, 0, 10, NoiseClass::Squeal, 0.9)};
    const auto m = match_detections(gt, pred, 0.75);
    CHECK(m.counts.at(NoiseClass::Squeal) == ConfusionCounts{1, 0, 0, 0});
  }
  {
    const std::vector<BBox> pred{box(0, 8, 0, 10, NoiseClass::Squeal, 0.7),
                                 box(0, 9, 0, 10, NoiseClass::Squeal, 0.95)};
    const auto m = match_detections(gt, pred, 0.5);
    CHECK(m.counts.at(NoiseClass::Squeal) == ConfusionCounts{1, 1, 0, 0});
    CHECK(m.matches[0].pred == 1);
    CHECK(m.matches[0].true_positive);
    CHECK_FALSE(m.matches[1].true_positive);
  }
  {
    const std::vector<BBox> two{box(0, 1, 0, 1), box(2, 3, 2, 3)};
    const auto m = match_detections(two, {}, 0.5);
    CHECK(m.counts.at(NoiseClass::Squeal) == ConfusionCounts{0, 0, 2, 0});
  }
  {
    const std::vector<BBox> pred{box(0, 10, 0, 10, NoiseClass::Click, 1.0)};
    const auto m = match_detections(gt, pred, 0.5);
    CHECK(m.counts.at(NoiseClass::Click).fp == 1);
    CHECK(m.counts.at(NoiseClass::Squeal).fn == 1);
  }
  CHECK_THROWS_AS(match_detections(gt, {}, 0.0), Error);
}

TEST_CASE("equal confidence resolves by earlier start time") {
  const std::vector<BBox> gt{box(0, 10, 0, 10)};
  const std::vector<BBox> pred{box(1, 10, 0, 10, NoiseClass::Squeal, 0.8),
                               box(0.5, 10, 0, 10, NoiseClass::Squeal, 0.8)};
  const auto m = match_detections(gt, pred, 0.5);
  CHECK(m.matches[0].pred == 1);
  CHECK(m.matches[0].true_positive);
}

TEST_CASE("classification metrics") {
  const auto m = classification_metrics({149, 68, 7, 266});
  CHECK(round_half_up(*m.recall, 2) == 0.96);
  CHECK(round_half_up(*m.precision, 2) == 0.69);
  CHECK(round_half_up(*m.f1, 2) == 0.80);
  CHECK(*m.accuracy == doctest::Approx(149.0 / 490.0));
  CHECK(*m.tnr == doctest::Approx(266.0 / 334.0));

  const auto perfect = classification_metrics({12, 0, 0, 0});
  CHECK(*perfect.precision == 1.0);
  CHECK(*perfect.recall == 1.0);
  CHECK(*perfect.f1 == 1.0);

  const auto none = classification_metrics({0, 0, 5, 5});
  CHECK(*none.recall == 0.0);
  CHECK_FALSE(none.precision.has_value());
  CHECK_FALSE(none.f1.has_value());
}

TEST_CASE("half-up rounding") {
  CHECK(round_half_up(0.125, 2) == 0.13);
  CHECK(round_half_up(0.7325, 2) == 0.73);
  CHECK(round_half_up(0.735, 2) == 0.74);
  CHECK(round_half_up(0.955, 2) == 0.96);
}

TEST_CASE("mcc") {
  CHECK(mcc({50, 0, 0, 50}) == doctest::Approx(1.0));
  CHECK(mcc({0, 50, 50, 0}) == doctest::Approx(-1.0));
  const double den = std::sqrt(217.0 * 156.0 * 334.0 * 273.0);
  CHECK(std::abs(mcc({149, 68, 7, 266}) - 39158.0 / den) < 1e-12);
  CHECK(std::abs(mcc({149, 68, 7, 266}) - 0.7048) < 5e-4);
  CHECK(mcc({10, 0, 0, 0}) == 0.0);
  CHECK(mcc({}) == 0.0);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> d(0, 200);
  for (int i = 0; i < 500; ++i) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const double v = mcc(c);
    CHECK(v >= -1.0 - 1e-12);
    CHECK(v <= 1.0 + 1e-12);
    CHECK(mcc({c.tn, c.fn, c.fp, c.tp}) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("mcc of random guessing is near zero") {
  std::mt19937_64 rng(2024);
  std::bernoulli_distribution coin(0.5);
  ConfusionCounts c;
  for (int i = 0; i < 10000; ++i) {
    const bool y = coin(rng), p = coin(rng);
    if (y && p) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  CHECK(std::abs(mcc(c)) < 0.1);
}

TEST_CASE("precision-recall curve") {
  const auto c = curve_of({true, false, true}, 2);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].precision == 1.0);
  CHECK(c.points[1].precision == 0.5);
  CHECK(c.points[2].precision == doctest::Approx(2.0 / 3.0));
  CHECK(c.points[0].recall == 0.5);
  CHECK(c.points[1].recall == 0.5);
  CHECK(c.points[2].recall == 1.0);

  const auto all_tp = curve_of({true, true, true}, 3);
  for (const auto& p : all_tp.points) CHECK(p.precision == 1.0);
  CHECK(all_tp.points.back().recall == 1.0);

  const auto all_fp = curve_of({false, false}, 4);
  for (const auto& p : all_fp.points) {
    CHECK(p.precision == 0.0);
    CHECK(p.recall == 0.0);
  }
  const std::vector<RankedDetection> one{{0.9, false}};
  CHECK_THROWS_AS(pr_curve(one, 0), Error);
  CHECK(pr_curve({}, 0).points.empty());
}

TEST_CASE("average precision") {
  const auto c = curve_of({true, false, true}, 2);
  CHECK(average_precision(c) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
  CHECK(average_precision(c, ApMode::ElevenPoint) ==
        doctest::Approx((6.0 + 5.0 * 2.0 / 3.0) / 11.0).epsilon(1e-12));
  CHECK(average_precision(curve_of({true, true}, 2)) == 1.0);
  CHECK(average_precision(curve_of({true, true}, 2), ApMode::ElevenPoint) == doctest::Approx(1.0));
  CHECK(average_precision(curve_of({false, false}, 2)) == 0.0);
}

TEST_CASE("all-points AP equals exact envelope integration") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto m = match_detections(inst.gt, inst.pred, 0.5);
    std::vector<bool> flags;
    std::vector<RankedDetection> ranked;
    for (const auto& mt : m.matches)
      if (inst.pred[mt.pred].cls == NoiseClass::Squeal) {
        flags.push_back(mt.true_positive);
        ranked.push_back({*inst.pred[mt.pred].confidence, mt.true_positive});
      }
    std::size_t n_gt = 0;
    for (const auto& g : inst.gt) n_gt += g.cls == NoiseClass::Squeal ? 1 : 0;
    if (n_gt == 0) continue;
    const double ap = average_precision(pr_curve(ranked, n_gt));
    CHECK(std::abs(ap - oracle::envelope_area(flags, n_gt)) < 1e-9);
  }
}

TEST_CASE("precision envelope is non-increasing and recall non-decreasing") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const std::vector<ImageAnnotation> gt{{"a", inst.gt}}, pred{{"a", inst.pred}};
    const auto rep = evaluate_corpus(gt, pred, 0.5);
    for (const auto& cr : rep.classes) {
      for (std::size_t i = 1; i < cr.curve.points.size(); ++i)
        CHECK(cr.curve.points[i].recall >= cr.curve.points[i - 1].recall);
      double env = 0.0;
      for (auto it = cr.curve.points.rbegin(); it != cr.curve.points.rend(); ++it) {
        const double next = std::max(env, it->precision);
        CHECK(next >= env);
        env = next;
        CHECK(it->precision >= 0.0);
        CHECK(it->precision <= 1.0);
      }
    }
  }
}

TEST_CASE("AP does not increase with the IoU threshold") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const std::vector<ImageAnnotation> gt{{"a", inst.gt}}, pred{{"a", inst.pred}};
    const double a50 = evaluate_corpus(gt, pred, 0.5).map;
    const double a75 = evaluate_corpus(gt, pred, 0.75).map;
    const double a90 = evaluate_corpus(gt, pred, 0.9).map;
    CHECK(a75 <= a50 + 1e-12);
    CHECK(a90 <= a75 + 1e-12);
  }
}

TEST_CASE("mean AP") {
  const std::vector<double> table{0.68, 0.69, 0.88, 0.68};
  CHECK(round_half_up(mean_ap(table), 2) == 0.73);
  const std::vector<double> one{0.42};
  CHECK(mean_ap(one) == 0.42);
  const std::vector<double> two{1.0, 0.0};
  CHECK(mean_ap(two) == 0.5);
  CHECK_THROWS_AS(mean_ap({}), Error);
}

TEST_CASE("corpus evaluation") {
  std::vector<ImageAnnotation> gt{
      {"r1", {box(0, 2, 1000, 1200), box(3, 4, 0, 25600, NoiseClass::Click)}},
      {"r2", {box(1, 3, 5000, 5200, NoiseClass::Wirebrush)}},
      {"r3", {}}};
  SUBCASE("self evaluation scores perfectly") {
    auto pred = gt;
    for (auto& img : pred)
      for (auto& b : img.boxes) b.confidence = 1.0;
    const auto rep = evaluate_corpus(gt, pred, 0.9);
    CHECK(rep.map == 1.0);
    for (const auto& cr : rep.classes) {
      CHECK(cr.ap == 1.0);
      CHECK(*cr.classification_metrics.f1 == 1.0);
    }
  }
  SUBCASE("empty predictions give zero recall") {
    const auto rep = evaluate_corpus(gt, {}, 0.5);
    for (const auto& cr : rep.classes) {
      CHECK(*cr.detection_metrics.recall == 0.0);
      CHECK(cr.ap == 0.0);
    }
  }
  SUBCASE("image-level classification counts true negatives") {
    std::vector<ImageAnnotation> pred{{"r3", {box(0, 1, 2000, 2200, NoiseClass::Squeal, 0.8)}}};
    const auto counts = classify_images(gt, pred, 0.5);
    CHECK(counts.at(NoiseClass::Squeal) == ConfusionCounts{0, 1, 1, 1});
    CHECK(counts.at(NoiseClass::Artefact) == ConfusionCounts{0, 0, 0, 3});
    CHECK(classify_images(gt, pred, 0.9).at(NoiseClass::Squeal) == ConfusionCounts{0, 0, 1, 2});
  }
}

TEST_CASE("confidence sweep") {
  std::mt19937_64 rng(8);
  std::vector<ImageAnnotation> gt, pred;
  for (int i = 0; i < 20; ++i) {
    auto inst = oracle::random_instance(rng);
    gt.push_back({"img" + std::to_string(i), inst.gt});
    pred.push_back({"img" + std::to_string(i), inst.pred});
  }
  const std::vector<double> thresholds{0.0, 0.5, 0.75, 1.0 + 1e-9};
  const auto sweep = confidence_sweep(gt, pred, 0.5, thresholds);
  const auto base = evaluate_corpus(gt, pred, 0.5);
  CHECK(sweep[0].report.map == base.map);
  for (std::size_t i = 0; i < base.classes.size(); ++i)
    CHECK(sweep[0].report.classes[i].detection == base.classes[i].detection);
  for (const auto& cr : sweep.back().report.classes) {
    CHECK(cr.detection.tp == 0);
    CHECK(cr.detection.fp == 0);
    CHECK(cr.detection_metrics.recall.value_or(0.0) == 0.0);
  }
  const double best = best_operating_point(sweep);
  CHECK(std::find(thresholds.begin(), thresholds.end(), best) != thresholds.end());
}

TEST_CASE("ecdf") {
  const Ecdf e({4.0, 1.0, 3.0, 2.0});
  CHECK(e.quantile(0.5) == 2.0);
  CHECK(e.quantile(1.0) == 4.0);
  CHECK(e.quantile(0.0) == 1.0);
  CHECK(e.quantile(0.26) == 2.0);
  CHECK(e(0.5) == 0.0);
  CHECK(e(2.0) == 0.5);
  CHECK(e(10.0) == 1.0);
  const Ecdf flat({3.0, 3.0, 3.0});
  CHECK(flat(2.999) == 0.0);
  CHECK(flat(3.0) == 1.0);
  CHECK_THROWS_AS(Ecdf({}), Error);
  CHECK_THROWS_AS(Ecdf({std::nan("")}), Error);
}

TEST_CASE("annotation json round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "squeal_eval_test";
  std::filesystem::create_directories(dir);
  std::vector<ImageAnnotation> imgs{{"a", {box(0, 1, 2, 3, NoiseClass::Artefact, 0.25)}},
                                    {"b", {box(0.5, 1.5, 100, 300)}}};
  write_annotations(dir / "x.json", imgs);
  const auto back = read_annotations(dir / "x.json");
  REQUIRE(back.size() == 2);
  CHECK(back[0].boxes[0].cls == NoiseClass::Artefact);
  CHECK(*back[0].boxes[0].confidence == 0.25);
  CHECK_FALSE(back[1].boxes[0].confidence.has_value());
  write_json(dir / "single.json", to_json(imgs[1]));
  CHECK(read_annotations(dir / "single.json").size() == 1);
  write_json(dir / "bad.json", json{{"image_id", "q"}, {"boxes", {{{"class", "groan"}, {"x0", 0}, {"x1", 1}, {"z0", 0}, {"z1", 1}}}}});
  CHECK_THROWS_AS(read_annotations(dir / "bad.json"), Error);
  std::filesystem::remove_all(dir);
}

}
