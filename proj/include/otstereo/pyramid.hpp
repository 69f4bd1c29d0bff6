#pragma once

#include <array>
#include <vector>

#include "otstereo/plane.hpp"

namespace otstereo {

// Dense per-pixel feature vectors, row-major, interleaved.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int d)
      : width(w), height(h), dim(d),
        data(static_cast<std::size_t>(w) * h * d, 0.0f) {}

  float* vec(int y, int x) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * dim;
  }
  const float* vec(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * dim;
  }
  bool same_shape(const FeatureMap& o) const {
    return width == o.width && height == o.height && dim == o.dim;
  }
};

constexpr std::array<int, 4> kPyramidStrides = {4, 8, 16, 32};

// Four feature maps at strides 4/8/16/32, each L2-normalized per vector.
struct FeaturePyramid {
  std::array<FeatureMap, 4> levels;

  FeatureMap& at_stride(int stride);
  const FeatureMap& at_stride(int stride) const;
};

struct DescriptorConfig {
  int census_window = 5;        // 3, 5 or 7
  bool gradient_channels = true;
  int feature_dim = 32;

  // Raw channel count before projection: census bits + optional grad x/y
  // + one constant channel that keeps every vector away from zero norm.
  int raw_dim() const {
    return census_window * census_window - 1 + (gradient_channels ? 2 : 0) + 1;
  }
};

// Per pixel, window^2-1 binary features: 1 where the neighbor exceeds the
// center, scanned row-major with the center skipped. Borders replicate edges.
FeatureMap census_descriptor(const Plane& image, int window);

// 2x2 mean pooling with ceil semantics; edge cells average the valid sub-block.
FeatureMap pool2x2(const FeatureMap& in);

// Stride-1 descriptor stack (census + gradients + constant channel).
FeatureMap stride1_descriptor(const Plane& image, const DescriptorConfig& cfg);

// Optional learned projection; empty matrix means identity-padding.
struct Projection {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<float> weights;  // row-major in_dim x out_dim; empty = identity-pad
};

// Pools the stride-1 descriptor down to strides 4/8/16/32, projects each level
// to cfg.feature_dim and L2-normalizes every vector. `projections`, when
// non-null, supplies one matrix per level in stride order.
FeaturePyramid build_pyramid(const Plane& image, const DescriptorConfig& cfg,
                             const std::array<Projection, 4>* projections = nullptr);

}  // namespace otstereo
