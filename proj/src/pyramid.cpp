#include "otstereo/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "otstereo/errors.hpp"
#include "otstereo/parallel.hpp"

namespace otstereo {

FeatureMap& FeaturePyramid::at_stride(int stride) {
  for (std::size_t i = 0; i < kPyramidStrides.size(); ++i)
    if (kPyramidStrides[i] == stride) return levels[i];
  throw ArgumentError("no pyramid level at stride " + std::to_string(stride));
}

const FeatureMap& FeaturePyramid::at_stride(int stride) const {
  return const_cast<FeaturePyramid*>(this)->at_stride(stride);
}

FeatureMap census_descriptor(const Plane& image, int window) {
  if (window != 3 && window != 5 && window != 7)
    throw ArgumentError("census window must be 3, 5 or 7");
  if (image.channels != 1)
    throw ArgumentError("census descriptor expects a single-channel image");

  const int w = image.width, h = image.height, r = window / 2;
  FeatureMap out(w, h, window * window - 1);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float center = image.at(y, x);
      float* v = out.vec(y, x);
      int k = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int ny = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int nx = std::clamp(x + dx, 0, w - 1);
          v[k++] = image.at(ny, nx) > center ? 1.0f : 0.0f;
        }
      }
    }
  }
  return out;
}

FeatureMap pool2x2(const FeatureMap& in) {
  const int w = (in.width + 1) / 2, h = (in.height + 1) / 2, d = in.dim;
  FeatureMap out(w, h, d);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int y0 = 2 * y, x0 = 2 * x;
      const int y1 = std::min(y0 + 2, in.height), x1 = std::min(x0 + 2, in.width);
      const float inv = 1.0f / static_cast<float>((y1 - y0) * (x1 - x0));
      float* o = out.vec(y, x);
      for (int sy = y0; sy < y1; ++sy)
        for (int sx = x0; sx < x1; ++sx) {
          const float* s = in.vec(sy, sx);
          for (int c = 0; c < d; ++c) o[c] += s[c];
        }
      for (int c = 0; c < d; ++c) o[c] *= inv;
    }
  }
  return out;
}

FeatureMap stride1_descriptor(const Plane& image, const DescriptorConfig& cfg) {
  FeatureMap census = census_descriptor(image, cfg.census_window);
  const int w = image.width, h = image.height;
  const int census_dim = census.dim;
  FeatureMap out(w, h, cfg.raw_dim());

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* v = out.vec(y, x);
      const float* c = census.vec(y, x);
      std::copy_n(c, census_dim, v);
      int k = census_dim;
      if (cfg.gradient_channels) {
        const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        v[k++] = 0.5f * (image.at(y, xr) - image.at(y, xl));
        v[k++] = 0.5f * (image.at(yd, x) - image.at(yu, x));
      }
      v[k] = 1.0f;  // constant channel
    }
  }
  return out;
}

namespace {

FeatureMap project_and_normalize(const FeatureMap& in, int out_dim,
                                 const Projection* proj) {
  FeatureMap out(in.width, in.height, out_dim);
  const bool learned = proj && !proj->weights.empty();
  if (learned && (proj->in_dim != in.dim || proj->out_dim != out_dim))
    throw ValidationError("projection matrix shape does not match features");

  const int copy_dim = std::min(in.dim, out_dim);
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const float* s = in.vec(y, x);
      float* o = out.vec(y, x);
      if (learned) {
        for (int j = 0; j < out_dim; ++j) {
          double acc = 0.0;
          for (int i = 0; i < in.dim; ++i)
            acc += static_cast<double>(s[i]) * proj->weights[static_cast<std::size_t>(i) * out_dim + j];
          o[j] = static_cast<float>(acc);
        }
      } else {
        std::copy_n(s, copy_dim, o);
      }
      double norm2 = 0.0;
      for (int j = 0; j < out_dim; ++j) norm2 += static_cast<double>(o[j]) * o[j];
      if (norm2 > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (int j = 0; j < out_dim; ++j) o[j] *= inv;
      }
    }
  }
  return out;
}

}  // namespace

FeaturePyramid build_pyramid(const Plane& image, const DescriptorConfig& cfg,
                             const std::array<Projection, 4>* projections) {
  if (image.width < 32 || image.height < 32)
    throw ArgumentError("build_pyramid: image must be at least 32x32");

  FeatureMap current = stride1_descriptor(image, cfg);
  FeaturePyramid pyr;
  int stride = 1;
  int level = 0;
  while (stride < 32) {
    current = pool2x2(current);
    stride *= 2;
    if (stride >= 4) {
      const Projection* proj = projections ? &(*projections)[level] : nullptr;
      pyr.levels[level] = project_and_normalize(current, cfg.feature_dim, proj);
      ++level;
    }
  }
  return pyr;
}

}  // namespace otstereo
