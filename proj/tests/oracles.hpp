#pragma once

// Test-side reference computations kept independent of the library code.

#include <algorithm>
#include <cstddef>
#include <random>
#include <vector>

#include "squeal/eval.hpp"

namespace oracle {

// Exact integral over recall of the interpolated precision envelope, done by
// walking the distinct recall levels directly.
inline double envelope_area(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    tp += ranked_tp[i] ? 1 : 0;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  std::vector<double> levels = rec;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double area = 0.0, prev = 0.0;
  for (double r : levels) {
    double best = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] >= r) best = std::max(best, prec[i]);
    area += (r - prev) * best;
    prev = r;
  }
  return area;
}

struct Instance {
  std::vector<squeal::BBox> gt;
  std::vector<squeal::BBox> pred;
};

// Ground truth boxes plus jittered copies and random clutter; at most
// max_pred predictions.
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_pred = 10) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance inst;
  const auto n_gt = 1 + static_cast<std::size_t>(u(rng) * 4);
  for (std::size_t i = 0; i < n_gt; ++i) {
    squeal::BBox b;
    b.x0 = u(rng) * 8.0;
    b.x1 = b.x0 + 0.5 + u(rng) * 2.0;
    b.z0 = u(rng) * 8.0;
    b.z1 = b.z0 + 0.5 + u(rng) * 2.0;
    b.cls = u(rng) < 0.7 ? squeal::NoiseClass::Squeal : squeal::NoiseClass::Click;
    inst.gt.push_back(b);
  }
  const auto n_pred = static_cast<std::size_t>(u(rng) * static_cast<double>(max_pred + 1));
  for (std::size_t i = 0; i < n_pred; ++i) {
    squeal::BBox b;
    if (u(rng) < 0.75) {
      const auto& g = inst.gt[static_cast<std::size_t>(u(rng) * static_cast<double>(inst.gt.size()))];
      const double j = 0.4 * u(rng);
      b = g;
      b.x0 += j * (u(rng) - 0.5) * (g.x1 - g.x0);
      b.x1 += j * (u(rng) - 0.5) * (g.x1 - g.x0);
      b.z0 += j * (u(rng) - 0.5) * (g.z1 - g.z0);
      b.z1 += j * (u(rng) - 0.5) * (g.z1 - g.z0);
      if (u(rng) < 0.1) b.cls = squeal::NoiseClass::Wirebrush;
    } else {
      b.x0 = u(rng) * 8.0;
      b.x1 = b.x0 + 0.5 + u(rng) * 2.0;
      b.z0 = u(rng) * 8.0;
      b.z1 = b.z0 + 0.5 + u(rng) * 2.0;
      b.cls = squeal::NoiseClass::Squeal;
    }
    b.confidence = std::round(u(rng) * 20.0) / 20.0;  // coarse grid forces ties
    inst.pred.push_back(b);
  }
  return inst;
}

}  // namespace oracle
