#pragma once

#include <vector>

#include "otstereo/plane.hpp"
#include "otstereo/pyramid.hpp"

namespace otstereo {

// Per-row all-pairs correlation: cost(i, j, w) = <left(i,j), right(i,w)>.
struct CostVolume {
  int height = 0;  // rows
  int width = 0;   // columns per image (matrix is width x width per row)
  std::vector<float> data;

  CostVolume() = default;
  CostVolume(int h, int w)
      : height(h), width(w),
        data(static_cast<std::size_t>(h) * w * w, 0.0f) {}

  float& at(int i, int j, int w_) {
    return data[(static_cast<std::size_t>(i) * width + j) * width + w_];
  }
  float at(int i, int j, int w_) const {
    return data[(static_cast<std::size_t>(i) * width + j) * width + w_];
  }
  const float* row_matrix(int i) const {
    return data.data() + static_cast<std::size_t>(i) * width * width;
  }
};

// Soft assignment for one epipolar row: (width+1) x (width+1), the last row
// and column are dustbins. Left column j matched to right column w implies
// candidate disparity j - w.
struct TransportPlan {
  int width = 0;  // real bins per side
  std::vector<float> data;

  TransportPlan() = default;
  explicit TransportPlan(int w)
      : width(w), data(static_cast<std::size_t>(w + 1) * (w + 1), 0.0f) {}

  int bins() const { return width + 1; }
  float& at(int j, int w_) { return data[static_cast<std::size_t>(j) * bins() + w_]; }
  float at(int j, int w_) const {
    return data[static_cast<std::size_t>(j) * bins() + w_];
  }
};

struct SinkhornConfig {
  double temperature = 0.1;   // > 0
  int iterations = 20;        // >= 1
  double dustbin_score = -1.0;
  double tolerance = 1e-4;    // early stop on marginal residual; <= 0 disables

  void validate() const;
};

// Disparity / occlusion / confidence triple. Disparity units follow the
// resolution of the maps (quarter-resolution out of global_match).
struct MatchMaps {
  Plane disparity;
  Plane occlusion;   // in [0,1], 1 = matched (non-occluded)
  Plane confidence;  // in [0,1]
};

CostVolume correlation_volume(const FeatureMap& f_left, const FeatureMap& f_right);

// Entropy-regularized assignment with dustbins, solved in the log domain.
// Marginals are 1 per real bin and `width` for each dustbin. Returns the
// achieved max marginal residual via *residual when non-null.
TransportPlan sinkhorn_dustbin(const float* row_costs, int width,
                               const SinkhornConfig& cfg,
                               double* residual = nullptr);

// Expectation over candidates p_w = j - w, real bins only. Rows whose real
// mass is below 1e-8 yield 0 (treated as occluded downstream).
Plane extract_disparity(const std::vector<TransportPlan>& plans,
                        bool clamp_negative = true);

// Real-bin marginal per left column, clipped to [0,1].
Plane extract_occlusion(const std::vector<TransportPlan>& plans);

// Mass within +-radius real bins of the argmax (ties toward smaller w).
Plane extract_confidence(const std::vector<TransportPlan>& plans, int radius);

struct MatchResult {
  MatchMaps maps;          // quarter-resolution
  CostVolume volume;
  std::vector<TransportPlan> plans;  // one per row
  double max_residual = 0.0;
};

struct MatchConfig {
  SinkhornConfig sinkhorn;
  int confidence_radius = 2;
  bool clamp_negative = true;
};

MatchResult global_match(const FeatureMap& f_left, const FeatureMap& f_right,
                         const MatchConfig& cfg);

}  // namespace otstereo
