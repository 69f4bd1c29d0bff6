#pragma once

#include "otstereo/matching.hpp"

namespace otstereo {

struct RefineConfig {
  int iterations = 3;             // local residual steps, >= 0
  int propagation_radius = 7;     // quarter-res pixels, >= 1
  double confidence_floor = 0.5;  // gamma_0 in (0,1)
  double step_cap = 0.5;          // max |delta D| per local step, quarter-res px
  double feature_sigma = 0.5;     // propagation feature-similarity width
  int confidence_radius = 2;      // window for confidence re-extraction

  void validate() const;
};

// Confidence-aware propagation: pixels below the confidence floor take a
// feature- and distance-weighted average of high-confidence disparities in
// the neighborhood. High-confidence pixels pass through bit-exact.
MatchMaps global_propagate(const MatchMaps& maps, const FeatureMap& features,
                           const RefineConfig& cfg);

// One residual update: parabola refit of the correlation slice around the
// current disparity (clamped to the step cap), then occlusion/confidence
// re-extraction from the plans at the updated disparity.
MatchMaps local_step(const MatchMaps& maps, const CostVolume& volume,
                     const std::vector<TransportPlan>& plans,
                     const RefineConfig& cfg);

// global_propagate once, then cfg.iterations local steps.
MatchMaps run_refinement(const MatchMaps& maps, const CostVolume& volume,
                         const std::vector<TransportPlan>& plans,
                         const FeatureMap& features, const RefineConfig& cfg);

}  // namespace otstereo
