// SPDX-License-Identifier: Apache-2.0
#pragma once

// Frame feature restoration (FFRes).
//
// h(a, b): X⁰ = [a; b] (2 x E); per layer
//     Xˡ = softmax(Xˡ⁻¹ Xˡ⁻¹ᵀ / √E) · (Xˡ⁻¹ W_Vˡ) + Xˡ⁻¹
// and the result is row 0 of the last X (the row of the first argument).
// A discarded frame m between retained l and r is restored as
//     F̂ = (1 − λ) h(g_l, g_r) + λ h(g_r, g_l),  λ = (m − l) / r.

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"

namespace sllm {

inline constexpr std::size_t kDefaultFFResLayers = 3;

struct FFResParams {
  std::vector<Matrix> value_proj;  // L_ffr matrices, E x E
  /// Bumped on every update; tapes recorded under an older version are stale.
  std::uint64_t version = 0;

  std::size_t dim() const { return value_proj.empty() ? 0 : value_proj.front().rows(); }
  std::size_t num_layers() const { return value_proj.size(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : value_proj) n += m.size();
    return n;
  }
  bool operator==(const FFResParams& o) const { return value_proj == o.value_proj; }
};

/// W_V ~ N(0, 0.02²); with `zero` every projection starts at 0 so that
/// h(a, b) = a exactly.
inline FFResParams init_params(std::size_t dim, std::size_t num_layers, std::uint64_t seed, bool zero = false) {
  if (dim == 0 || num_layers == 0) throw ConfigError("ffres: dim and layer count must be >= 1");
  FFResParams p;
  for (std::size_t l = 0; l < num_layers; ++l) {
    if (zero) {
      p.value_proj.emplace_back(dim, dim);
    } else {
      CounterRng rng(seed, 0xF0000 + l);
      p.value_proj.push_back(gaussian_matrix(dim, dim, 0.02, rng));
    }
  }
  return p;
}

namespace detail {

inline void check_dims(const FFResParams& p, std::span<const double> a, std::span<const double> b) {
  if (p.num_layers() == 0) throw ConfigError("ffres: no layers");
  if (a.size() != p.dim() || b.size() != p.dim()) {
    throw ShapeError("ffres: feature dims " + std::to_string(a.size()) + "/" + std::to_string(b.size()) +
                     " vs module dim " + std::to_string(p.dim()));
  }
}

/// One directed pass; appends L attention records and a row selection to `tape`.
inline FeatureVec directed_forward(const FFResParams& p, std::span<const double> a, std::span<const double> b,
                                   GradTape* tape) {
  check_dims(p, a, b);
  const std::size_t e = p.dim();
  Matrix x(2, e);
  std::copy(a.begin(), a.end(), x.row(0).begin());
  std::copy(b.begin(), b.end(), x.row(1).begin());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(e));
  for (const Matrix& w : p.value_proj) {
    const Matrix attn = softmax_rows(scale(matmul_nt(x, x), inv_sqrt));
    const Matrix values = matmul(x, w);
    Matrix next = matmul(attn, values);
    add_inplace(next, x);
    if (tape) tape->push({OpId::two_token_attention, {x, attn, values}, 0.0});
    x = std::move(next);
  }
  if (tape) tape->push({OpId::select_row, {}, 0.0});
  return x.row_vec(0);
}

}  // namespace detail

/// h(a, b).
inline FeatureVec restore_directed(const FFResParams& p, std::span<const double> a, std::span<const double> b) {
  return detail::directed_forward(p, a, b, nullptr);
}

/// Attention matrices of each layer of h(a, b); for inspection and tests.
inline std::vector<Matrix> directed_attention(const FFResParams& p, std::span<const double> a,
                                              std::span<const double> b) {
  GradTape tape(p.version);
  detail::directed_forward(p, a, b, &tape);
  std::vector<Matrix> out;
  for (const auto& rec : tape.records())
    if (rec.op == OpId::two_token_attention) out.push_back(rec.cached[1]);
  return out;
}

/// F̂ = (1 − λ)·h(g_l, g_r) + λ·h(g_r, g_l). When `tape` is given the
/// forward is recorded for backward_restore().
inline FeatureVec restore(const FFResParams& p, std::span<const double> left, std::span<const double> right,
                          double lambda, GradTape* tape = nullptr) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("restore: lambda outside [0,1]: " + std::to_string(lambda));
  const FeatureVec lr = detail::directed_forward(p, left, right, tape);
  const FeatureVec rl = detail::directed_forward(p, right, left, tape);
  if (tape) tape->push({OpId::blend, {}, lambda});
  FeatureVec out(lr.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - lambda) * lr[i] + lambda * rl[i];
  return out;
}

/// Accumulates dL/dW_V into `grads` for one recorded restore() given dL/dF̂.
inline void backward_restore(const FFResParams& p, const GradTape& tape, std::span<const double> upstream,
                             std::vector<Matrix>& grads) {
  if (tape.params_version() != p.version) {
    throw ConsistencyError("ffres backward: tape recorded at params version " + std::to_string(tape.params_version()) +
                           ", params are at " + std::to_string(p.version));
  }
  const std::size_t e = p.dim();
  const std::size_t nl = p.num_layers();
  if (tape.size() != 2 * (nl + 1) + 1 || tape.records().back().op != OpId::blend) {
    throw ConsistencyError("ffres backward: tape does not describe a restore() forward");
  }
  if (upstream.size() != e) throw ShapeError("ffres backward: upstream length");
  if (grads.size() != nl) grads.assign(nl, Matrix(e, e));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(e));

  const auto& recs = tape.records();
  const double lambda = recs.back().scalar;
  // Pending upstream per direction; the later direction (r→l) is consumed first.
  std::vector<double> weights = {1.0 - lambda, lambda};
  Matrix dx;
  std::size_t layer = 0;
  for (std::size_t i = recs.size() - 1; i-- > 0;) {
    const TapeRecord& rec = recs[i];
    switch (rec.op) {
      case OpId::select_row: {
        const double w = weights.back();
        weights.pop_back();
        dx = Matrix(2, e);
        for (std::size_t k = 0; k < e; ++k) dx(0, k) = w * upstream[k];
        layer = nl;
        break;
      }
      case OpId::two_token_attention: {
        if (layer == 0) throw ConsistencyError("ffres backward: layer underflow");
        --layer;
        const Matrix& x = rec.cached[0];
        const Matrix& attn = rec.cached[1];
        const Matrix& values = rec.cached[2];
        const Matrix& w = p.value_proj[layer];
        // Y = A·V + X, V = X·W, A = softmax(X Xᵀ / √E)
        Matrix dx_in = dx;
        const MatmulGrads mix = matmul_backward(attn, values, dx);
        const MatmulGrads proj = matmul_backward(x, w, mix.db);
        add_inplace(grads[layer], proj.db);
        add_inplace(dx_in, proj.da);
        const Matrix ds = scale(softmax_rows_backward(attn, mix.da), inv_sqrt);
        add_inplace(dx_in, matmul(add(ds, transpose(ds)), x));
        dx = std::move(dx_in);
        break;
      }
      case OpId::blend:
        throw ConsistencyError("ffres backward: unexpected blend record");
    }
  }
}

// ---------------------------------------------------------------------------
// restoration loss

/// KL(softmax(target) ‖ softmax(predicted)); ≥ 0 with equality iff the two
/// softmax distributions coincide.
inline double restoration_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("restoration_loss: length mismatch");
  if (predicted.empty()) return 0.0;
  auto log_softmax = [](std::span<const double> x) {
    double mx = x[0];
    for (double v : x) mx = v > mx ? v : mx;
    double sum = 0.0;
    for (double v : x) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    FeatureVec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
    return out;
  };
  const FeatureVec lp = log_softmax(target);
  const FeatureVec lq = log_softmax(predicted);
  double loss = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) loss += std::exp(lp[i]) * (lp[i] - lq[i]);
  return loss < 0.0 ? 0.0 : loss;
}

/// d restoration_loss / d predicted = softmax(predicted) − softmax(target).
inline FeatureVec restoration_loss_grad(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ShapeError("restoration_loss_grad: length mismatch");
  const FeatureVec q = softmax(predicted);
  const FeatureVec p = softmax(target);
  FeatureVec g(q.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = q[i] - p[i];
  return g;
}

// ---------------------------------------------------------------------------
// batched forward / backward

struct RestorationRecord {
  FeatureVec left;
  FeatureVec right;
  double lambda = 0.5;
  std::optional<FeatureVec> target;  // present only when training
};

struct RestorationBatch {
  std::vector<RestorationRecord> items;
};

struct RestorationForward {
  std::vector<FeatureVec> predicted;
  std::vector<GradTape> tapes;
};

inline RestorationForward forward(const FFResParams& p, const RestorationBatch& batch) {
  RestorationForward out;
  out.predicted.reserve(batch.items.size());
  out.tapes.reserve(batch.items.size());
  for (const auto& it : batch.items) {
    GradTape tape(p.version);
    out.predicted.push_back(restore(p, it.left, it.right, it.lambda, &tape));
    out.tapes.push_back(std::move(tape));
  }
  return out;
}

struct FFResGrads {
  std::vector<Matrix> value_proj;
  double restoration_loss = 0.0;  // unweighted sum over supervised items
};

/// Gradients of  Σ head_loss(F̂) + β·Σ restoration_loss(F̂, target)  w.r.t.
/// every W_V. `head_grads` holds dL_head/dF̂ per item (empty = zero).
inline FFResGrads backward(const FFResParams& p, const RestorationBatch& batch, const RestorationForward& fwd,
                           std::span<const FeatureVec> head_grads, double beta) {
  if (fwd.tapes.size() != batch.items.size() || fwd.predicted.size() != batch.items.size()) {
    throw ConsistencyError("ffres backward: forward does not match batch");
  }
  if (!head_grads.empty() && head_grads.size() != batch.items.size()) {
    throw ConsistencyError("ffres backward: head gradient count mismatch");
  }
  FFResGrads g;
  g.value_proj.assign(p.num_layers(), Matrix(p.dim(), p.dim()));
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    FeatureVec up = head_grads.empty() ? FeatureVec(p.dim(), 0.0) : head_grads[i];
    if (up.size() != p.dim()) throw ShapeError("ffres backward: head gradient length");
    const auto& item = batch.items[i];
    if (item.target) {
      g.restoration_loss += restoration_loss(fwd.predicted[i], *item.target);
      if (beta != 0.0) {
        const FeatureVec lg = restoration_loss_grad(fwd.predicted[i], *item.target);
        for (std::size_t k = 0; k < up.size(); ++k) up[k] += beta * lg[k];
      }
    }
    backward_restore(p, fwd.tapes[i], up, g.value_proj);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
};

/// One bias-corrected Adam update over an ordered parameter list.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.emplace_back(p->rows(), p->cols());
      state.second.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam_step");
    require_same_shape(*params[i], state.first[i], "adam_step state");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& pd = params[i]->data();
    const auto& gd = grads[i]->data();
    auto& m = state.first[i].data();
    auto& v = state.second[i].data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gd[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
      pd[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

inline void adam_step(FFResParams& p, const FFResGrads& g, AdamState& state, const AdamConfig& cfg = {}) {
  std::vector<Matrix*> ps;
  std::vector<const Matrix*> gs;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    ps.push_back(&p.value_proj[l]);
    gs.push_back(&g.value_proj.at(l));
  }
  adam_step(ps, gs, state, cfg);
  ++p.version;
}

// ---------------------------------------------------------------------------
// checkpoint: "SLFR", u32 E, u32 L, then L row-major E x E little-endian f64.

inline void save_ffres(const FFResParams& p, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write("SLFR", 4);
  const auto e = static_cast<std::uint32_t>(p.dim());
  const auto l = static_cast<std::uint32_t>(p.num_layers());
  os.write(reinterpret_cast<const char*>(&e), 4);
  os.write(reinterpret_cast<const char*>(&l), 4);
  for (const auto& m : p.value_proj) os.write(reinterpret_cast<const char*>(m.data().data()), m.size() * 8);
  if (!os) throw FormatError("write failed: " + path);
}

inline FFResParams load_ffres(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  std::uint32_t e = 0;
  std::uint32_t l = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&e), 4);
  is.read(reinterpret_cast<char*>(&l), 4);
  if (!is || std::string(magic, 4) != "SLFR") throw FormatError(path + ": not an FFRes checkpoint");
  if (e == 0 || l == 0 || e > 65536 || l > 1024) throw FormatError(path + ": implausible FFRes header");
  FFResParams p;
  for (std::uint32_t i = 0; i < l; ++i) {
    Matrix m(e, e);
    is.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(m.size() * 8));
    if (!is) throw FormatError(path + ": truncated FFRes checkpoint");
    p.value_proj.push_back(std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes in FFRes checkpoint");
  return p;
}

}  // namespace sllm
