#include "otstereo/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "otstereo/errors.hpp"
#include "otstereo/parallel.hpp"

namespace otstereo {

void SinkhornConfig::validate() const {
  if (!(temperature > 0.0)) throw ArgumentError("sinkhorn temperature must be > 0");
  if (iterations < 1) throw ArgumentError("sinkhorn iterations must be >= 1");
}

CostVolume correlation_volume(const FeatureMap& f_left, const FeatureMap& f_right) {
  if (!f_left.same_shape(f_right))
    throw ArgumentError("correlation_volume: feature map shapes differ");
  const int h = f_left.height, w = f_left.width, d = f_left.dim;
  CostVolume vol(h, w);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const float* fl = f_left.vec(i, j);
      for (int ww = 0; ww < w; ++ww) {
        const float* fr = f_right.vec(i, ww);
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += static_cast<double>(fl[c]) * fr[c];
        vol.at(i, j, ww) = static_cast<float>(dot);
      }
    }
  }
  return vol;
}

namespace {

double lse(const double* v, int n) {
  double m = v[0];
  for (int i = 1; i < n; ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace

TransportPlan sinkhorn_dustbin(const float* row_costs, int width,
                               const SinkhornConfig& cfg, double* residual) {
  cfg.validate();
  if (width < 1) throw ArgumentError("sinkhorn: width must be >= 1");
  for (int i = 0; i < width * width; ++i)
    if (!std::isfinite(row_costs[i]))
      throw ValidationError("sinkhorn: non-finite cost entry");

  const int n = width + 1;
  const double inv_tau = 1.0 / cfg.temperature;
  const double bin_alpha = cfg.dustbin_score * inv_tau;

  // Augmented log kernel.
  std::vector<double> logk(static_cast<std::size_t>(n) * n, bin_alpha);
  for (int j = 0; j < width; ++j)
    for (int w = 0; w < width; ++w)
      logk[static_cast<std::size_t>(j) * n + w] = row_costs[j * width + w] * inv_tau;

  // log marginals: 1 per real bin, `width` per dustbin.
  const double log_bin = std::log(static_cast<double>(width));
  std::vector<double> f(n, 0.0), g(n, 0.0), buf(n);
  auto log_marginal = [&](int idx) { return idx == width ? log_bin : 0.0; };

  double res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int j = 0; j < n; ++j) {
      const double* row = logk.data() + static_cast<std::size_t>(j) * n;
      for (int w = 0; w < n; ++w) buf[w] = row[w] + g[w];
      f[j] = log_marginal(j) - lse(buf.data(), n);
    }
    for (int w = 0; w < n; ++w) {
      for (int j = 0; j < n; ++j)
        buf[j] = logk[static_cast<std::size_t>(j) * n + w] + f[j];
      g[w] = log_marginal(w) - lse(buf.data(), n);
    }
    // Row marginals carry the residual after the column update.
    res = 0.0;
    for (int j = 0; j < n; ++j) {
      const double* row = logk.data() + static_cast<std::size_t>(j) * n;
      double sum = 0.0;
      for (int w = 0; w < n; ++w) sum += std::exp(row[w] + f[j] + g[w]);
      res = std::max(res, std::abs(sum - std::exp(log_marginal(j))));
    }
    if (cfg.tolerance > 0.0 && res < cfg.tolerance) break;
  }
  if (residual) *residual = res;

  TransportPlan plan(width);
  for (int j = 0; j < n; ++j)
    for (int w = 0; w < n; ++w)
      plan.at(j, w) = static_cast<float>(
          std::exp(logk[static_cast<std::size_t>(j) * n + w] + f[j] + g[w]));
  return plan;
}

Plane extract_disparity(const std::vector<TransportPlan>& plans,
                        bool clamp_negative) {
  const int h = static_cast<int>(plans.size());
  const int w = h > 0 ? plans[0].width : 0;
  Plane out(w, h, 1);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i) {
    const TransportPlan& plan = plans[i];
    for (int j = 0; j < w; ++j) {
      double mass = 0.0, moment = 0.0;
      for (int ww = 0; ww < w; ++ww) {
        const double t = plan.at(j, ww);
        mass += t;
        moment += t * static_cast<double>(j - ww);
      }
      double d = mass < 1e-8 ? 0.0 : moment / mass;
      if (clamp_negative) d = std::max(d, 0.0);
      out.at(i, j) = static_cast<float>(d);
    }
  }
  return out;
}

Plane extract_occlusion(const std::vector<TransportPlan>& plans) {
  const int h = static_cast<int>(plans.size());
  const int w = h > 0 ? plans[0].width : 0;
  Plane out(w, h, 1);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i) {
    const TransportPlan& plan = plans[i];
    for (int j = 0; j < w; ++j) {
      double mass = 0.0;
      for (int ww = 0; ww < w; ++ww) mass += plan.at(j, ww);
      out.at(i, j) = static_cast<float>(std::clamp(mass, 0.0, 1.0));
    }
  }
  return out;
}

Plane extract_confidence(const std::vector<TransportPlan>& plans, int radius) {
  if (radius < 0) throw ArgumentError("confidence radius must be >= 0");
  const int h = static_cast<int>(plans.size());
  const int w = h > 0 ? plans[0].width : 0;
  Plane out(w, h, 1);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i) {
    const TransportPlan& plan = plans[i];
    for (int j = 0; j < w; ++j) {
      int best = 0;
      float best_val = plan.at(j, 0);
      for (int ww = 1; ww < w; ++ww)
        if (plan.at(j, ww) > best_val) {  // strict: ties go to smaller w
          best_val = plan.at(j, ww);
          best = ww;
        }
      double mass = 0.0;
      const int lo = std::max(best - radius, 0), hi = std::min(best + radius, w - 1);
      for (int ww = lo; ww <= hi; ++ww) mass += plan.at(j, ww);
      out.at(i, j) = static_cast<float>(std::clamp(mass, 0.0, 1.0));
    }
  }
  return out;
}

MatchResult global_match(const FeatureMap& f_left, const FeatureMap& f_right,
                         const MatchConfig& cfg) {
  cfg.sinkhorn.validate();
  MatchResult result;
  result.volume = correlation_volume(f_left, f_right);

  const int h = result.volume.height, w = result.volume.width;
  result.plans.resize(h);
  std::vector<double> residuals(h, 0.0);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int i = 0; i < h; ++i)
    result.plans[i] =
        sinkhorn_dustbin(result.volume.row_matrix(i), w, cfg.sinkhorn, &residuals[i]);

  result.max_residual = *std::max_element(residuals.begin(), residuals.end());
  result.maps.disparity = extract_disparity(result.plans, cfg.clamp_negative);
  result.maps.occlusion = extract_occlusion(result.plans);
  result.maps.confidence = extract_confidence(result.plans, cfg.confidence_radius);
  return result;
}

}  // namespace otstereo
