#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "otstereo/pyramid.hpp"

namespace otstereo {

enum class AttentionAxis { horizontal_1d, full_2d };

// axis must be full_2d exactly when stride == 32.
struct AttentionSpec {
  int stride = 4;
  AttentionAxis axis = AttentionAxis::horizontal_1d;

  void validate() const;
  static AttentionSpec for_stride(int stride) {
    return {stride, stride == 32 ? AttentionAxis::full_2d
                                 : AttentionAxis::horizontal_1d};
  }
};

struct AttentionStats {
  double max_row_sum_err = 0.0;  // max |sum of softmax weights - 1|
};

// Scaled dot-product attention with softmax over the key axis. horizontal_1d
// attends within each row only; full_2d attends over the whole map.
FeatureMap attention(const FeatureMap& q, const FeatureMap& k,
                     const FeatureMap& v, const AttentionSpec& spec,
                     AttentionStats* stats = nullptr);

struct GateStats {
  double min_gate = 1.0;
  double max_gate = 0.0;
};

// z = w*x + (1-w)*y + MLP_r(concat(x,y)), w = sigmoid(MLP_w(concat(x,y))).
// gate_w / residual_w are row-major (2*dim x dim) single-layer weights.
FeatureMap gated_fuse(const FeatureMap& x, const FeatureMap& y,
                      const std::vector<float>& gate_w,
                      const std::vector<float>& residual_w,
                      GateStats* stats = nullptr);

// Per-level weights of one transformer block. All matrices row-major
// (in_dim x out_dim); layer norms store scale then offset, dim each.
struct LevelWeights {
  std::vector<float> ln1_scale, ln1_offset;
  std::vector<float> self_wq, self_wk, self_wv;   // dim x dim
  std::vector<float> ln2_scale, ln2_offset;
  std::vector<float> ffn1_w1, ffn1_w2;            // dim x 4dim, 4dim x dim
  std::vector<float> ln3_scale, ln3_offset;
  std::vector<float> cross_wq, cross_wk, cross_wv;
  std::vector<float> ln4_scale, ln4_offset;
  std::vector<float> ffn2_w1, ffn2_w2;
  std::vector<float> gate_w, residual_w;          // 2dim x dim
};

struct BlockWeights {
  std::array<LevelWeights, 4> levels;  // stride order 4, 8, 16, 32
};

// Binary weight file:
//   "OTSW"  u32 version  u32 feature_dim  u32 num_blocks  u32 num_heads
//   u32 proj_in_dim (0 = no projection section)
//   [4 projection matrices, proj_in_dim x feature_dim]   (if proj_in_dim > 0)
//   per block, per level: tensors in LevelWeights declaration order
//   u32 CRC32 of all preceding bytes
// All scalars and tensors little-endian; tensors are float32.
struct TransformerWeights {
  int feature_dim = 0;
  int num_blocks = 0;
  int num_heads = 1;
  int proj_in_dim = 0;
  std::array<Projection, 4> projections;
  std::vector<BlockWeights> blocks;

  void validate() const;
};

TransformerWeights random_weights(int feature_dim, int num_blocks,
                                  int proj_in_dim, std::uint64_t seed);
void save_weights(const TransformerWeights& w, const std::string& path);
TransformerWeights load_weights(const std::string& path);

// Fixed sinusoidal positional encoding; 1D levels encode the column index,
// the 2D level splits channels between column and row components.
std::vector<float> positional_encoding(int width, int height, int dim,
                                       AttentionAxis axis);

struct ForwardStats {
  AttentionStats attention;
  GateStats gates;
};

// Runs num_blocks of per-level self attention (+FFN), left/right cross
// attention (+FFN) and cross-scale gated fusion, with residual connections
// around every sublayer. Outputs are re-L2-normalized; num_blocks == 0
// returns the inputs untouched.
std::pair<FeaturePyramid, FeaturePyramid> transformer_forward(
    const FeaturePyramid& left, const FeaturePyramid& right,
    const TransformerWeights& weights, ForwardStats* stats = nullptr);

}  // namespace otstereo
