#pragma once

#include <utility>

#include "otstereo/plane.hpp"

namespace otstereo {

struct UpsampleConfig {
  double guide_sigma = 0.1;   // affinity width for upsampling weights
  int filter_radius = 4;
  double sigma_color = 0.1;   // range width, normalized intensities
  double sigma_space = 2.0;

  void validate() const;
};

// 4x upsampling by a convex combination of the 3x3 quarter-res neighborhood;
// weights are a softmax over guide-affinity. `scale_values` multiplies the
// output by 4 (used for disparities, not for occlusion/confidence).
Plane weighted_upsample(const Plane& quarter, const Plane& guide,
                        double guide_sigma, bool scale_values);

// out(y,x) = right(y, x - disparity(y,x)), linear interpolation.
// Returns the warped image and a validity mask (0 where out of bounds).
std::pair<Plane, Plane> warp_right(const Plane& right, const Plane& disparity);

// Joint bilateral filter; the range weight uses the smaller of the left and
// warped-right differences. Invalid warped pixels fall back to left-only.
Plane edge_guided_filter(const Plane& disparity, const Plane& left,
                         const Plane& warped_right, const Plane& warped_valid,
                         int radius, double sigma_color, double sigma_space);

}  // namespace otstereo
