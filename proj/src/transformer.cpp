#include "otstereo/transformer.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "otstereo/errors.hpp"
#include "otstereo/parallel.hpp"

namespace otstereo {

void AttentionSpec::validate() const {
  if (stride != 4 && stride != 8 && stride != 16 && stride != 32)
    throw ArgumentError("attention stride must be 4, 8, 16 or 32");
  if ((axis == AttentionAxis::full_2d) != (stride == 32))
    throw ArgumentError("full_2d attention is tied to stride 32");
}

namespace {

// One query against a contiguous run of key/value vectors.
void attend_run(const float* q, const FeatureMap& k, const FeatureMap& v,
                std::size_t first, std::size_t count, int dim, float* out,
                double* score_buf, double* row_sum_err) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));
  double max_score = -1e300;
  for (std::size_t t = 0; t < count; ++t) {
    const float* kv = k.data.data() + (first + t) * dim;
    double dot = 0.0;
    for (int c = 0; c < dim; ++c) dot += static_cast<double>(q[c]) * kv[c];
    score_buf[t] = dot * inv_sqrt_d;
    max_score = std::max(max_score, score_buf[t]);
  }
  double denom = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    score_buf[t] = std::exp(score_buf[t] - max_score);
    denom += score_buf[t];
  }
  const double inv_denom = 1.0 / denom;
  double psum = 0.0;
  for (int c = 0; c < dim; ++c) out[c] = 0.0f;
  for (std::size_t t = 0; t < count; ++t) {
    const double p = score_buf[t] * inv_denom;
    psum += p;
    const float* vv = v.data.data() + (first + t) * dim;
    for (int c = 0; c < dim; ++c)
      out[c] += static_cast<float>(p * static_cast<double>(vv[c]));
  }
  if (row_sum_err) *row_sum_err = std::abs(psum - 1.0);
}

}  // namespace

FeatureMap attention(const FeatureMap& q, const FeatureMap& k,
                     const FeatureMap& v, const AttentionSpec& spec,
                     AttentionStats* stats) {
  spec.validate();
  if (!q.same_shape(k) || !q.same_shape(v))
    throw ArgumentError("attention: q/k/v shapes differ");

  const int w = q.width, h = q.height, d = q.dim;
  FeatureMap out(w, h, d);
  std::vector<double> row_err(h, 0.0);

  if (spec.axis == AttentionAxis::horizontal_1d) {
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (int y = 0; y < h; ++y) {
      std::vector<double> buf(w);
      double worst = 0.0;
      for (int x = 0; x < w; ++x) {
        double err = 0.0;
        attend_run(q.vec(y, x), k, v, static_cast<std::size_t>(y) * w,
                   static_cast<std::size_t>(w), d, out.vec(y, x), buf.data(),
                   &err);
        worst = std::max(worst, err);
      }
      row_err[y] = worst;
    }
  } else {
    const std::size_t n = static_cast<std::size_t>(w) * h;
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (int y = 0; y < h; ++y) {
      std::vector<double> buf(n);
      double worst = 0.0;
      for (int x = 0; x < w; ++x) {
        double err = 0.0;
        attend_run(q.vec(y, x), k, v, 0, n, d, out.vec(y, x), buf.data(), &err);
        worst = std::max(worst, err);
      }
      row_err[y] = worst;
    }
  }
  if (stats)
    stats->max_row_sum_err = std::max(
        stats->max_row_sum_err, *std::max_element(row_err.begin(), row_err.end()));
  return out;
}

FeatureMap gated_fuse(const FeatureMap& x, const FeatureMap& y,
                      const std::vector<float>& gate_w,
                      const std::vector<float>& residual_w,
                      GateStats* stats) {
  if (!x.same_shape(y)) throw ArgumentError("gated_fuse: shape mismatch");
  const int d = x.dim;
  if (gate_w.size() != static_cast<std::size_t>(2 * d) * d ||
      residual_w.size() != static_cast<std::size_t>(2 * d) * d)
    throw ArgumentError("gated_fuse: weight matrices must be 2*dim x dim");

  FeatureMap out(x.width, x.height, d);
  const int h = x.height, w = x.width;
  std::vector<double> row_min(h, 1.0), row_max(h, 0.0);

#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int yy = 0; yy < h; ++yy) {
    std::vector<float> cat(2 * d);
    for (int xx = 0; xx < w; ++xx) {
      const float* xa = x.vec(yy, xx);
      const float* yb = y.vec(yy, xx);
      std::copy_n(xa, d, cat.begin());
      std::copy_n(yb, d, cat.begin() + d);
      float* o = out.vec(yy, xx);
      for (int j = 0; j < d; ++j) {
        double pre_gate = 0.0, res = 0.0;
        for (int i = 0; i < 2 * d; ++i) {
          const double ci = cat[i];
          pre_gate += ci * gate_w[static_cast<std::size_t>(i) * d + j];
          res += ci * residual_w[static_cast<std::size_t>(i) * d + j];
        }
        const double g = 1.0 / (1.0 + std::exp(-pre_gate));
        row_min[yy] = std::min(row_min[yy], g);
        row_max[yy] = std::max(row_max[yy], g);
        o[j] = static_cast<float>(g * xa[j] + (1.0 - g) * yb[j] + res);
      }
    }
  }
  if (stats) {
    stats->min_gate = std::min(stats->min_gate,
                               *std::min_element(row_min.begin(), row_min.end()));
    stats->max_gate = std::max(stats->max_gate,
                               *std::max_element(row_max.begin(), row_max.end()));
  }
  return out;
}

void TransformerWeights::validate() const {
  if (feature_dim <= 0 || feature_dim % 4 != 0)
    throw ValidationError("feature_dim must be a positive multiple of 4");
  if (num_blocks < 0) throw ValidationError("negative block count");
  if (num_heads != 1) throw ValidationError("only one attention head is supported");
  if (static_cast<int>(blocks.size()) != num_blocks)
    throw ValidationError("block count does not match header");
  const std::size_t d = static_cast<std::size_t>(feature_dim);
  auto check = [&](const std::vector<float>& t, std::size_t want, const char* name) {
    if (t.size() != want)
      throw ValidationError(std::string("weight tensor ") + name + " has wrong size");
    for (float v : t)
      if (!std::isfinite(v))
        throw ValidationError(std::string("non-finite value in tensor ") + name);
  };
  if (proj_in_dim > 0) {
    for (const auto& p : projections)
      check(p.weights, static_cast<std::size_t>(proj_in_dim) * d, "projection");
  }
  for (const auto& b : blocks) {
    for (const auto& l : b.levels) {
      check(l.ln1_scale, d, "ln1_scale");
      check(l.ln1_offset, d, "ln1_offset");
      check(l.self_wq, d * d, "self_wq");
      check(l.self_wk, d * d, "self_wk");
      check(l.self_wv, d * d, "self_wv");
      check(l.ln2_scale, d, "ln2_scale");
      check(l.ln2_offset, d, "ln2_offset");
      check(l.ffn1_w1, d * 4 * d, "ffn1_w1");
      check(l.ffn1_w2, 4 * d * d, "ffn1_w2");
      check(l.ln3_scale, d, "ln3_scale");
      check(l.ln3_offset, d, "ln3_offset");
      check(l.cross_wq, d * d, "cross_wq");
      check(l.cross_wk, d * d, "cross_wk");
      check(l.cross_wv, d * d, "cross_wv");
      check(l.ln4_scale, d, "ln4_scale");
      check(l.ln4_offset, d, "ln4_offset");
      check(l.ffn2_w1, d * 4 * d, "ffn2_w1");
      check(l.ffn2_w2, 4 * d * d, "ffn2_w2");
      check(l.gate_w, 2 * d * d, "gate_w");
      check(l.residual_w, 2 * d * d, "residual_w");
    }
  }
}

namespace {

void fill_normal(std::vector<float>& t, std::size_t n, double sigma,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  t.resize(n);
  for (auto& v : t) v = static_cast<float>(dist(rng));
}

}  // namespace

TransformerWeights random_weights(int feature_dim, int num_blocks,
                                  int proj_in_dim, std::uint64_t seed) {
  if (feature_dim <= 0 || feature_dim % 4 != 0)
    throw ArgumentError("feature_dim must be a positive multiple of 4");
  if (num_blocks < 0) throw ArgumentError("negative block count");

  TransformerWeights w;
  w.feature_dim = feature_dim;
  w.num_blocks = num_blocks;
  w.num_heads = 1;
  w.proj_in_dim = proj_in_dim;

  std::mt19937_64 rng(seed);
  const std::size_t d = static_cast<std::size_t>(feature_dim);
  const double attn_sigma = 1.0 / std::sqrt(static_cast<double>(d));
  const double ffn2_sigma = 1.0 / std::sqrt(static_cast<double>(4 * d));
  const double res_sigma = 1.0 / std::sqrt(static_cast<double>(2 * d));

  if (proj_in_dim > 0) {
    const double proj_sigma = 1.0 / std::sqrt(static_cast<double>(proj_in_dim));
    for (auto& p : w.projections) {
      p.in_dim = proj_in_dim;
      p.out_dim = feature_dim;
      fill_normal(p.weights, static_cast<std::size_t>(proj_in_dim) * d,
                  proj_sigma, rng);
    }
  }

  w.blocks.resize(num_blocks);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& b : w.blocks) {
    for (auto& l : b.levels) {
      auto fill_ln = [&](std::vector<float>& scale, std::vector<float>& offset) {
        scale.resize(d);
        offset.resize(d);
        for (auto& v : scale) v = static_cast<float>(1.0 + jitter(rng));
        for (auto& v : offset) v = static_cast<float>(jitter(rng));
      };
      fill_ln(l.ln1_scale, l.ln1_offset);
      fill_normal(l.self_wq, d * d, attn_sigma, rng);
      fill_normal(l.self_wk, d * d, attn_sigma, rng);
      fill_normal(l.self_wv, d * d, attn_sigma, rng);
      fill_ln(l.ln2_scale, l.ln2_offset);
      fill_normal(l.ffn1_w1, d * 4 * d, attn_sigma, rng);
      fill_normal(l.ffn1_w2, 4 * d * d, ffn2_sigma, rng);
      fill_ln(l.ln3_scale, l.ln3_offset);
      fill_normal(l.cross_wq, d * d, attn_sigma, rng);
      fill_normal(l.cross_wk, d * d, attn_sigma, rng);
      fill_normal(l.cross_wv, d * d, attn_sigma, rng);
      fill_ln(l.ln4_scale, l.ln4_offset);
      fill_normal(l.ffn2_w1, d * 4 * d, attn_sigma, rng);
      fill_normal(l.ffn2_w2, 4 * d * d, ffn2_sigma, rng);
      fill_normal(l.gate_w, 2 * d * d, 0.5, rng);
      fill_normal(l.residual_w, 2 * d * d, res_sigma, rng);
    }
  }
  return w;
}

namespace {

constexpr char kMagic[4] = {'O', 'T', 'S', 'W'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<unsigned char> bytes;

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void tensor(const std::vector<float>& t) {
    for (float f : t) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u32(u);
    }
  }
};

struct Reader {
  const unsigned char* p;
  const unsigned char* end;

  std::uint32_t u32() {
    if (end - p < 4) throw FormatError("truncated weight file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  void tensor(std::vector<float>& t, std::size_t n) {
    t.resize(n);
    for (auto& f : t) {
      std::uint32_t u = u32();
      std::memcpy(&f, &u, 4);
    }
  }
};

template <typename F>
void for_each_tensor(TransformerWeights& w, F&& f) {
  const std::size_t d = static_cast<std::size_t>(w.feature_dim);
  if (w.proj_in_dim > 0) {
    for (auto& p : w.projections) {
      p.in_dim = w.proj_in_dim;
      p.out_dim = w.feature_dim;
      f(p.weights, static_cast<std::size_t>(w.proj_in_dim) * d);
    }
  }
  for (auto& b : w.blocks) {
    for (auto& l : b.levels) {
      f(l.ln1_scale, d);
      f(l.ln1_offset, d);
      f(l.self_wq, d * d);
      f(l.self_wk, d * d);
      f(l.self_wv, d * d);
      f(l.ln2_scale, d);
      f(l.ln2_offset, d);
      f(l.ffn1_w1, d * 4 * d);
      f(l.ffn1_w2, 4 * d * d);
      f(l.ln3_scale, d);
      f(l.ln3_offset, d);
      f(l.cross_wq, d * d);
      f(l.cross_wk, d * d);
      f(l.cross_wv, d * d);
      f(l.ln4_scale, d);
      f(l.ln4_offset, d);
      f(l.ffn2_w1, d * 4 * d);
      f(l.ffn2_w2, 4 * d * d);
      f(l.gate_w, 2 * d * d);
      f(l.residual_w, 2 * d * d);
    }
  }
}

}  // namespace

void save_weights(const TransformerWeights& w, const std::string& path) {
  w.validate();
  Writer out;
  out.bytes.insert(out.bytes.end(), kMagic, kMagic + 4);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(w.feature_dim));
  out.u32(static_cast<std::uint32_t>(w.num_blocks));
  out.u32(static_cast<std::uint32_t>(w.num_heads));
  out.u32(static_cast<std::uint32_t>(w.proj_in_dim));
  for_each_tensor(const_cast<TransformerWeights&>(w),
                  [&](std::vector<float>& t, std::size_t) { out.tensor(t); });
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.bytes.data(), static_cast<uInt>(out.bytes.size()));
  out.u32(crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.bytes.data()),
          static_cast<std::streamsize>(out.bytes.size()));
  if (!f) throw IoError("short write to " + path);
}

TransformerWeights load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 28) throw FormatError("weight file too short: " + path);

  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size() - 4));
  if (crc != stored_crc)
    throw ValidationError("weight file checksum mismatch: " + path);

  Reader in{bytes.data(), bytes.data() + bytes.size() - 4};
  if (std::memcmp(in.p, kMagic, 4) != 0)
    throw FormatError("bad weight file magic: " + path);
  in.p += 4;
  if (in.u32() != kVersion) throw FormatError("unsupported weight file version");

  TransformerWeights w;
  w.feature_dim = static_cast<int>(in.u32());
  w.num_blocks = static_cast<int>(in.u32());
  w.num_heads = static_cast<int>(in.u32());
  w.proj_in_dim = static_cast<int>(in.u32());
  if (w.feature_dim <= 0 || w.feature_dim > 4096 || w.num_blocks < 0 ||
      w.num_blocks > 1024)
    throw FormatError("implausible weight file header: " + path);
  w.blocks.resize(w.num_blocks);
  for_each_tensor(w, [&](std::vector<float>& t, std::size_t n) { in.tensor(t, n); });
  if (in.p != in.end) throw FormatError("trailing bytes in weight file: " + path);
  w.validate();
  return w;
}

std::vector<float> positional_encoding(int width, int height, int dim,
                                       AttentionAxis axis) {
  std::vector<float> pe(static_cast<std::size_t>(width) * height * dim, 0.0f);
  auto fill = [dim](float* v, int offset, int d_enc, double pos) {
    for (int i = 0; i + 1 < d_enc; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d_enc);
      v[offset + i] = static_cast<float>(std::sin(pos * freq));
      v[offset + i + 1] = static_cast<float>(std::cos(pos * freq));
    }
    (void)dim;
  };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float* v = pe.data() + (static_cast<std::size_t>(y) * width + x) * dim;
      if (axis == AttentionAxis::horizontal_1d) {
        fill(v, 0, dim, x);
      } else {
        fill(v, 0, dim / 2, x);
        fill(v, dim / 2, dim / 2, y);
      }
    }
  return pe;
}

namespace {

FeatureMap layer_norm(const FeatureMap& x, const std::vector<float>& scale,
                      const std::vector<float>& offset) {
  const int d = x.dim;
  FeatureMap out(x.width, x.height, d);
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      const float* s = x.vec(y, xx);
      float* o = out.vec(y, xx);
      double mean = 0.0;
      for (int c = 0; c < d; ++c) mean += s[c];
      mean /= d;
      double var = 0.0;
      for (int c = 0; c < d; ++c) {
        const double dv = s[c] - mean;
        var += dv * dv;
      }
      var /= d;
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (int c = 0; c < d; ++c)
        o[c] = static_cast<float>((s[c] - mean) * inv * scale[c] + offset[c]);
    }
  return out;
}

// x (n x in_dim) times row-major W (in_dim x out_dim).
FeatureMap matmul(const FeatureMap& x, const std::vector<float>& w, int out_dim) {
  const int in_dim = x.dim;
  FeatureMap out(x.width, x.height, out_dim);
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      const float* s = x.vec(y, xx);
      float* o = out.vec(y, xx);
      for (int j = 0; j < out_dim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < in_dim; ++i)
          acc += static_cast<double>(s[i]) * w[static_cast<std::size_t>(i) * out_dim + j];
        o[j] = static_cast<float>(acc);
      }
    }
  return out;
}

void add_inplace(FeatureMap& x, const FeatureMap& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
}

void relu_inplace(FeatureMap& x) {
  for (auto& v : x.data) v = std::max(v, 0.0f);
}

FeatureMap add_pe(const FeatureMap& x, const std::vector<float>& pe) {
  FeatureMap out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += pe[i];
  return out;
}

void ffn_sublayer(FeatureMap& x, const std::vector<float>& ln_scale,
                  const std::vector<float>& ln_offset,
                  const std::vector<float>& w1, const std::vector<float>& w2) {
  FeatureMap n = layer_norm(x, ln_scale, ln_offset);
  FeatureMap hidden = matmul(n, w1, 4 * x.dim);
  relu_inplace(hidden);
  add_inplace(x, matmul(hidden, w2, x.dim));
}

FeatureMap upsample_nearest(const FeatureMap& coarse, int width, int height) {
  FeatureMap out(width, height, coarse.dim);
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int sy = std::min(y / 2, coarse.height - 1);
      const int sx = std::min(x / 2, coarse.width - 1);
      std::copy_n(coarse.vec(sy, sx), coarse.dim, out.vec(y, x));
    }
  return out;
}

void renormalize(FeatureMap& x) {
#pragma omp parallel for num_threads(threads()) schedule(static)
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      float* v = x.vec(y, xx);
      double norm2 = 0.0;
      for (int c = 0; c < x.dim; ++c) norm2 += static_cast<double>(v[c]) * v[c];
      if (norm2 > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (int c = 0; c < x.dim; ++c) v[c] *= inv;
      }
    }
}

}  // namespace

std::pair<FeaturePyramid, FeaturePyramid> transformer_forward(
    const FeaturePyramid& left, const FeaturePyramid& right,
    const TransformerWeights& weights, ForwardStats* stats) {
  weights.validate();
  for (std::size_t i = 0; i < kPyramidStrides.size(); ++i) {
    if (!left.levels[i].same_shape(right.levels[i]))
      throw ValidationError("transformer_forward: pyramid shapes differ");
    if (left.levels[i].dim != weights.feature_dim)
      throw ValidationError("transformer_forward: feature dim does not match weights");
  }
  if (weights.num_blocks == 0) return {left, right};

  FeaturePyramid L = left, R = right;

  std::array<std::vector<float>, 4> pe;
  std::array<AttentionSpec, 4> specs;
  for (std::size_t i = 0; i < kPyramidStrides.size(); ++i) {
    specs[i] = AttentionSpec::for_stride(kPyramidStrides[i]);
    pe[i] = positional_encoding(L.levels[i].width, L.levels[i].height,
                                weights.feature_dim, specs[i].axis);
  }

  AttentionStats* astats = stats ? &stats->attention : nullptr;
  GateStats* gstats = stats ? &stats->gates : nullptr;

  for (const auto& block : weights.blocks) {
    // Self attention + FFN, each level and side independently.
    for (std::size_t i = 0; i < 4; ++i) {
      const LevelWeights& lw = block.levels[i];
      for (FeaturePyramid* side : {&L, &R}) {
        FeatureMap& x = side->levels[i];
        FeatureMap n = layer_norm(x, lw.ln1_scale, lw.ln1_offset);
        FeatureMap q = add_pe(matmul(n, lw.self_wq, x.dim), pe[i]);
        FeatureMap k = add_pe(matmul(n, lw.self_wk, x.dim), pe[i]);
        FeatureMap v = matmul(n, lw.self_wv, x.dim);
        add_inplace(x, attention(q, k, v, specs[i], astats));
        ffn_sublayer(x, lw.ln2_scale, lw.ln2_offset, lw.ffn1_w1, lw.ffn1_w2);
      }
    }

    // Cross attention left<->right from the same pre-update state, + FFN.
    for (std::size_t i = 0; i < 4; ++i) {
      const LevelWeights& lw = block.levels[i];
      FeatureMap ln_l = layer_norm(L.levels[i], lw.ln3_scale, lw.ln3_offset);
      FeatureMap ln_r = layer_norm(R.levels[i], lw.ln3_scale, lw.ln3_offset);
      FeatureMap ql = add_pe(matmul(ln_l, lw.cross_wq, ln_l.dim), pe[i]);
      FeatureMap qr = add_pe(matmul(ln_r, lw.cross_wq, ln_r.dim), pe[i]);
      FeatureMap kl = add_pe(matmul(ln_l, lw.cross_wk, ln_l.dim), pe[i]);
      FeatureMap kr = add_pe(matmul(ln_r, lw.cross_wk, ln_r.dim), pe[i]);
      FeatureMap vl = matmul(ln_l, lw.cross_wv, ln_l.dim);
      FeatureMap vr = matmul(ln_r, lw.cross_wv, ln_r.dim);
      add_inplace(L.levels[i], attention(ql, kr, vr, specs[i], astats));
      add_inplace(R.levels[i], attention(qr, kl, vl, specs[i], astats));
      ffn_sublayer(L.levels[i], lw.ln4_scale, lw.ln4_offset, lw.ffn2_w1, lw.ffn2_w2);
      ffn_sublayer(R.levels[i], lw.ln4_scale, lw.ln4_offset, lw.ffn2_w1, lw.ffn2_w2);
    }

    // Cross-scale fusion; every level reads the pre-fusion pyramid.
    for (FeaturePyramid* side : {&L, &R}) {
      std::array<FeatureMap, 4> fused;
      for (std::size_t i = 0; i < 4; ++i) {
        const LevelWeights& lw = block.levels[i];
        const FeatureMap& x = side->levels[i];
        FeatureMap y = (i + 1 < 4)
                           ? upsample_nearest(side->levels[i + 1], x.width, x.height)
                           : x;
        fused[i] = gated_fuse(x, y, lw.gate_w, lw.residual_w, gstats);
      }
      side->levels = std::move(fused);
    }
  }

  for (std::size_t i = 0; i < 4; ++i) {
    renormalize(L.levels[i]);
    renormalize(R.levels[i]);
  }
  return {L, R};
}

}  // namespace otstereo
