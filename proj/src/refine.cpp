#include "otstereo/refine.hpp"

#include <algorithm>
#include <cmath>

#include "otstereo/errors.hpp"
#include "otstereo/parallel.hpp"

namespace otstereo {

void RefineConfig::validate() const {
  if (iterations < 0) throw ArgumentError("refine iterations must be >= 0");
  if (propagation_radius < 1) throw ArgumentError("propagation radius must be >= 1");
  if (!(confidence_floor > 0.0 && confidence_floor < 1.0))
    throw ArgumentError("confidence floor must be in (0,1)");
  if (!(step_cap > 0.0)) throw ArgumentError("step cap must be > 0");
}

MatchMaps global_propagate(const MatchMaps& maps, const FeatureMap& features,
                           const RefineConfig& cfg) {
  cfg.validate();
  const int w = maps.disparity.width, h = maps.disparity.height;
  if (features.width != w || features.height != h)
    throw ArgumentError("global_propagate: feature map dims do not match maps");

  MatchMaps out = maps;
  const int r = cfg.propagation_radius;
  const double spatial_sigma = r / 2.0;
  const double inv_2ss = 1.0 / (2.0 * spatial_sigma * spatial_sigma);
  const double inv_2fs = 1.0 / (2.0 * cfg.feature_sigma * cfg.feature_sigma);
  const float floor = static_cast<float>(cfg.confidence_floor);
  const int d = features.dim;

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (maps.confidence.at(y, x) >= floor) continue;
      const float* fp = features.vec(y, x);
      double num = 0.0, den = 0.0;
      for (int qy = std::max(y - r, 0); qy <= std::min(y + r, h - 1); ++qy) {
        for (int qx = std::max(x - r, 0); qx <= std::min(x + r, w - 1); ++qx) {
          const float conf = maps.confidence.at(qy, qx);
          if (conf < floor) continue;
          const float* fq = features.vec(qy, qx);
          double dot = 0.0;
          for (int c = 0; c < d; ++c) dot += static_cast<double>(fp[c]) * fq[c];
          const double feat_dist2 = std::max(2.0 - 2.0 * dot, 0.0);
          const double dy = qy - y, dx = qx - x;
          const double k = std::exp(-feat_dist2 * inv_2fs) *
                           std::exp(-(dx * dx + dy * dy) * inv_2ss);
          num += k * conf * maps.disparity.at(qy, qx);
          den += k * conf;
        }
      }
      if (den > 0.0) out.disparity.at(y, x) = static_cast<float>(num / den);
    }
  }
  return out;
}

MatchMaps local_step(const MatchMaps& maps, const CostVolume& volume,
                     const std::vector<TransportPlan>& plans,
                     const RefineConfig& cfg) {
  cfg.validate();
  const int w = maps.disparity.width, h = maps.disparity.height;
  if (volume.width != w || volume.height != h ||
      static_cast<int>(plans.size()) != h)
    throw ArgumentError("local_step: volume/plan dims do not match maps");

  MatchMaps out = maps;
  const double cap = cfg.step_cap;
  const int cr = cfg.confidence_radius;

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i) {
    const TransportPlan& plan = plans[i];
    for (int j = 0; j < w; ++j) {
      const double d_cur = maps.disparity.at(i, j);
      const int d0 = static_cast<int>(std::floor(d_cur));

      // Slice sample at integer disparity d is column w = j - d.
      double delta = 0.0;
      const int w_hi = j - (d0 - 1), w_mid = j - d0, w_lo = j - (d0 + 1);
      if (w_lo >= 0 && w_hi <= w - 1) {
        const double a = volume.at(i, j, w_hi);   // d0 - 1
        const double b = volume.at(i, j, w_mid);  // d0
        const double c = volume.at(i, j, w_lo);   // d0 + 1
        const double curv = a - 2.0 * b + c;
        if (curv < -1e-12) {
          double offset = (a - c) / (2.0 * curv);
          offset = std::clamp(offset, -1.0, 1.0);
          delta = std::clamp(d0 + offset - d_cur, -cap, cap);
        }
      }
      double d_new = std::clamp(d_cur + delta, 0.0, static_cast<double>(w - 1));
      out.disparity.at(i, j) = static_cast<float>(d_new);

      // Occlusion re-extraction: real-bin marginal.
      double marginal = 0.0;
      for (int ww = 0; ww < w; ++ww) marginal += plan.at(j, ww);
      out.occlusion.at(i, j) = static_cast<float>(std::clamp(marginal, 0.0, 1.0));

      // Confidence window recentered at the updated disparity.
      const int wc = j - static_cast<int>(std::lround(d_new));
      double conf = 0.0;
      const int lo = std::max(wc - cr, 0), hi = std::min(wc + cr, w - 1);
      for (int ww = lo; ww <= hi; ++ww) conf += plan.at(j, ww);
      out.confidence.at(i, j) = static_cast<float>(std::clamp(conf, 0.0, 1.0));
    }
  }
  return out;
}

MatchMaps run_refinement(const MatchMaps& maps, const CostVolume& volume,
                         const std::vector<TransportPlan>& plans,
                         const FeatureMap& features, const RefineConfig& cfg) {
  MatchMaps current = global_propagate(maps, features, cfg);
  for (int it = 0; it < cfg.iterations; ++it)
    current = local_step(current, volume, plans, cfg);
  return current;
}

}  // namespace otstereo
