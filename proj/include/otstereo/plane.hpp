#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "otstereo/errors.hpp"

namespace otstereo {

// Dense raster of 32-bit floats. Row-major, top-down, interleaved channels;
// every module consumes exactly this layout.
struct Plane {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, int c = 1, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Plane& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Rectified stereo pair. Ground-truth occlusion convention: 1 = non-occluded.
struct StereoPair {
  Plane left;
  Plane right;
  std::optional<Plane> gt_disparity;  // full-resolution pixels
  std::optional<Plane> gt_occlusion;  // values in {0,1}

  void validate() const {
    if (left.width != right.width || left.height != right.height)
      throw ValidationError("stereo pair: left/right dimensions differ");
    if (left.channels != 1 || right.channels != 1)
      throw ValidationError("stereo pair: images must be single-channel");
    auto check_gt = [&](const Plane& p, const char* name) {
      if (p.width != left.width || p.height != left.height)
        throw ValidationError(std::string("stereo pair: ") + name +
                              " does not match image dimensions");
    };
    if (gt_disparity) check_gt(*gt_disparity, "gt_disparity");
    if (gt_occlusion) check_gt(*gt_occlusion, "gt_occlusion");
    if (gt_disparity && gt_occlusion) {
      for (std::size_t i = 0; i < gt_disparity->data.size(); ++i)
        if (gt_occlusion->data[i] > 0.5f && gt_disparity->data[i] < 0.0f)
          throw ValidationError(
              "stereo pair: negative gt disparity on non-occluded pixel");
    }
  }
};

}  // namespace otstereo
