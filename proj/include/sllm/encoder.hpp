// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frozen patch-transformer frame encoder.
//
// patchify -> linear embed -> [cls] + position -> L x (pre-norm MHSA + residual,
// pre-norm 4x GELU MLP + residual) -> norm(cls) -> project to E.
// Weights are regenerated from (config, seed); nothing here is ever trained.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"

namespace sllm {

struct EncoderConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t patch = 8;
  std::size_t hidden = 64;  // P
  std::size_t layers = 2;   // L_img
  std::size_t out = 32;     // E
  std::size_t heads = 4;
  std::uint64_t seed = 7;

  std::size_t num_patches() const { return (height / patch) * (width / patch); }
  /// Token count C, including the class token.
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch * patch * channels; }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0 || patch == 0 || hidden == 0 || layers == 0 ||
        out == 0 || heads == 0) {
      throw ConfigError("encoder config: all sizes must be >= 1");
    }
    if (height % patch != 0 || width % patch != 0) {
      throw ConfigError("encoder config: frame size must be a multiple of the patch size");
    }
    if (hidden % heads != 0) throw ConfigError("encoder config: hidden width not divisible by heads");
  }

  bool operator==(const EncoderConfig&) const = default;

  /// The 224px, patch-32 ViT-B geometry used for cost accounting.
  static EncoderConfig vit_b32() {
    EncoderConfig c;
    c.height = c.width = 224;
    c.channels = 3;
    c.patch = 32;
    c.hidden = 768;
    c.layers = 12;
    c.out = 512;
    c.heads = 12;
    return c;
  }
};

/// One video frame, channel-major f32 pixels in [0, 1].
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> pixels;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, std::size_t c = 1) : height(h), width(w), channels(c), pixels(h * w * c, 0.0F) {}

  float at(std::size_t y, std::size_t x, std::size_t ch = 0) const { return pixels[(ch * height + y) * width + x]; }
  float& at(std::size_t y, std::size_t x, std::size_t ch = 0) { return pixels[(ch * height + y) * width + x]; }
  bool operator==(const Frame&) const = default;
};

struct EncoderLayer {
  Matrix wq, wk, wv, wo;  // P x P
  Matrix w1;              // P x 4P
  Matrix w2;              // 4P x P
  bool operator==(const EncoderLayer&) const = default;
};

struct FrozenWeights {
  EncoderConfig config;
  Matrix patch_embed;  // patch_dim x P
  Matrix class_token;  // 1 x P
  Matrix position;     // C x P
  std::vector<EncoderLayer> layers;
  Matrix projection;  // P x E

  bool operator==(const FrozenWeights&) const = default;

  template <class Fn>
  void for_each_matrix(Fn&& fn) const {
    fn(patch_embed);
    fn(class_token);
    fn(position);
    for (const auto& l : layers) {
      fn(l.wq);
      fn(l.wk);
      fn(l.wv);
      fn(l.wo);
      fn(l.w1);
      fn(l.w2);
    }
    fn(projection);
  }
};

inline constexpr double kEncoderInitStd = 0.02;
inline constexpr double kLayerNormEps = 1e-12;

inline FrozenWeights build_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  FrozenWeights w;
  w.config = cfg;
  std::uint64_t stream = 0;
  auto draw = [&](std::size_t r, std::size_t c) {
    CounterRng rng(cfg.seed, stream++);
    return gaussian_matrix(r, c, 1.0 / std::sqrt(static_cast<double>(r)), rng);
  };
  auto draw_embedding = [&](std::size_t r, std::size_t c) {
    CounterRng rng(cfg.seed, stream++);
    return gaussian_matrix(r, c, kEncoderInitStd, rng);
  };
  const std::size_t p = cfg.hidden;
  w.patch_embed = draw(cfg.patch_dim(), p);
  w.class_token = draw_embedding(1, p);
  w.position = draw_embedding(cfg.tokens(), p);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayer layer;
    layer.wq = draw(p, p);
    layer.wk = draw(p, p);
    layer.wv = draw(p, p);
    layer.wo = draw(p, p);
    layer.w1 = draw(p, 4 * p);
    layer.w2 = draw(4 * p, p);
    w.layers.push_back(std::move(layer));
  }
  w.projection = draw(p, cfg.out);
  return w;
}

/// 64-bit digest over every weight's bit pattern, in declaration order.
inline std::uint64_t checksum(const FrozenWeights& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  w.for_each_matrix([&](const Matrix& m) {
    h = mix64(h ^ m.rows()) ^ m.cols();
    for (double v : m.data()) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  });
  return h;
}

/// Per-row normalization to zero mean and unit variance (no affine).
inline void layer_norm_rows(Matrix& x) {
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (double& v : row) v = (v - mean) * inv;
  }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace detail {

inline Matrix patchify(const EncoderConfig& cfg, const Frame& f) {
  const std::size_t ph = cfg.height / cfg.patch;
  const std::size_t pw = cfg.width / cfg.patch;
  Matrix out(ph * pw, cfg.patch_dim());
  for (std::size_t py = 0; py < ph; ++py) {
    for (std::size_t px = 0; px < pw; ++px) {
      auto row = out.row(py * pw + px);
      std::size_t k = 0;
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t y = 0; y < cfg.patch; ++y)
          for (std::size_t x = 0; x < cfg.patch; ++x)
            row[k++] = f.at(py * cfg.patch + y, px * cfg.patch + x, c);
    }
  }
  return out;
}

inline void self_attention(const EncoderLayer& layer, std::size_t heads, Matrix& x) {
  Matrix y = x;
  layer_norm_rows(y);
  const Matrix q = matmul(y, layer.wq);
  const Matrix k = matmul(y, layer.wk);
  const Matrix v = matmul(y, layer.wv);
  const std::size_t c = x.rows();
  const std::size_t dh = x.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix mixed(c, x.cols());
  FeatureVec scores(c);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dh; ++d) acc += q(i, off + d) * k(j, off + d);
        scores[j] = acc * inv_sqrt;
      }
      softmax_inplace(scores);
      for (std::size_t j = 0; j < c; ++j) {
        const double a = scores[j];
        for (std::size_t d = 0; d < dh; ++d) mixed(i, off + d) += a * v(j, off + d);
      }
    }
  }
  add_inplace(x, matmul(mixed, layer.wo));
}

inline void mlp(const EncoderLayer& layer, Matrix& x) {
  Matrix y = x;
  layer_norm_rows(y);
  Matrix hidden = matmul(y, layer.w1);
  for (double& v : hidden.data()) v = gelu(v);
  add_inplace(x, matmul(hidden, layer.w2));
}

}  // namespace detail

/// Token matrix after all transformer blocks (C x P). Exposed for tests.
inline Matrix encode_tokens(const FrozenWeights& w, const Frame& f) {
  const auto& cfg = w.config;
  if (f.height != cfg.height || f.width != cfg.width || f.channels != cfg.channels ||
      f.pixels.size() != cfg.height * cfg.width * cfg.channels) {
    throw ShapeError("encode: frame " + std::to_string(f.height) + "x" + std::to_string(f.width) + "x" +
                     std::to_string(f.channels) + " does not match encoder config");
  }
  const Matrix embedded = matmul(detail::patchify(cfg, f), w.patch_embed);
  Matrix x(cfg.tokens(), cfg.hidden);
  std::copy(w.class_token.data().begin(), w.class_token.data().end(), x.row(0).begin());
  for (std::size_t t = 0; t < embedded.rows(); ++t) {
    std::copy(embedded.row(t).begin(), embedded.row(t).end(), x.row(t + 1).begin());
  }
  add_inplace(x, w.position);
  for (const auto& layer : w.layers) {
    detail::self_attention(layer, cfg.heads, x);
    detail::mlp(layer, x);
  }
  return x;
}

/// g(I): one frame to an E-dimensional feature.
inline FeatureVec encode(const FrozenWeights& w, const Frame& f) {
  const Matrix tokens = encode_tokens(w, f);
  Matrix cls(1, tokens.cols());
  std::copy(tokens.row(0).begin(), tokens.row(0).end(), cls.row(0).begin());
  layer_norm_rows(cls);
  return vec_mat(cls.row(0), w.projection);
}

inline std::vector<FeatureVec> encode_batch(const FrozenWeights& w, std::span<const Frame> frames) {
  std::vector<FeatureVec> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(encode(w, f));
  return out;
}

// ---------------------------------------------------------------------------
// optional weight dump: 16-byte header ("SLEW", u32 version, u64 value count),
// config as 8 x u32 + u64 seed, then every matrix as little-endian f64.

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
}  // namespace detail

inline void dump_weights(const FrozenWeights& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  std::uint64_t count = 0;
  w.for_each_matrix([&](const Matrix& m) { count += m.size(); });
  os.write("SLEW", 4);
  detail::put_le<std::uint32_t>(os, 1);
  detail::put_le<std::uint64_t>(os, count);
  const auto& c = w.config;
  for (std::size_t v : {c.height, c.width, c.channels, c.patch, c.hidden, c.layers, c.out, c.heads}) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint64_t>(os, c.seed);
  w.for_each_matrix([&](const Matrix& m) {
    for (double v : m.data()) detail::put_le<double>(os, v);
  });
  if (!os) throw FormatError("write failed: " + path);
}

}  // namespace sllm
