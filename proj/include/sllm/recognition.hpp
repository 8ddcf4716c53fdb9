// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recognition heads over a sequence of frame features.
//
// Temporal pooling of a feature sequence f_1..f_n:
//     a_t = f_t · W_a,  b_t = f_t · W_b
//     z = mean(f) · W_vid + 1/(n−1) Σ_t (a_t ⊙ b_{t+1} − a_{t+1} ⊙ b_t),   v = z / ‖z‖
// The second term is a lag-1 antisymmetric bilinear "motion" statistic: it
// flips sign when the sequence is reversed and vanishes for a static video or
// a single frame. Without it, opposite motions pool to the same vector.
// Matching:        t_k = s_k · W_txt, score_k = scale · cos(v, t_k).
// Classification:  logits = v · W_cls + b.
// Both heads train with softmax cross-entropy.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"

namespace sllm {

enum class Paradigm { matching, classification };

inline constexpr double kLogitScale = 10.0;

struct LabelSet {
  std::vector<std::string> names;
  std::vector<std::string> captions;
  Matrix embeddings;  // M x E, rows unit-norm

  std::size_t size() const { return names.size(); }
  std::size_t dim() const { return embeddings.cols(); }
};

struct HeadParams {
  Matrix w_vid;       // E x E
  Matrix w_motion_a;  // E x E
  Matrix w_motion_b;  // E x E
  Matrix w_txt;       // E x E
  double logit_scale = kLogitScale;
  Matrix w_cls;  // E x M
  Matrix b_cls;  // 1 x M

  bool operator==(const HeadParams&) const = default;
};

/// Projections start at identity plus N(0, 0.02²) noise; the classifier at N(0, 0.02²).
inline HeadParams init_heads(std::size_t dim, std::size_t num_labels, std::uint64_t seed) {
  if (dim == 0 || num_labels < 2) throw ConfigError("init_heads: need E >= 1 and M >= 2");
  HeadParams h;
  CounterRng rv(seed, 0xA0001);
  CounterRng rt(seed, 0xA0002);
  CounterRng rc(seed, 0xA0003);
  CounterRng ra(seed, 0xA0004);
  CounterRng rb(seed, 0xA0005);
  const double motion_std = 1.0 / std::sqrt(static_cast<double>(dim));
  h.w_vid = add(Matrix::identity(dim), gaussian_matrix(dim, dim, 0.02, rv));
  h.w_motion_a = gaussian_matrix(dim, dim, motion_std, ra);
  h.w_motion_b = gaussian_matrix(dim, dim, motion_std, rb);
  h.w_txt = add(Matrix::identity(dim), gaussian_matrix(dim, dim, 0.02, rt));
  h.w_cls = gaussian_matrix(dim, num_labels, 0.02, rc);
  h.b_cls = Matrix(1, num_labels);
  return h;
}

// ---------------------------------------------------------------------------
// forward pieces

inline FeatureVec mean_pool(std::span<const FeatureVec> features) {
  if (features.empty()) throw DegenerateInputError("video_feature: empty sequence");
  FeatureVec mean(features.front().size(), 0.0);
  for (const auto& f : features) {
    if (f.size() != mean.size()) throw ShapeError("video_feature: ragged feature sequence");
    for (std::size_t i = 0; i < f.size(); ++i) mean[i] += f[i];
  }
  const double inv = 1.0 / static_cast<double>(features.size());
  for (double& v : mean) v *= inv;
  return mean;
}

/// 1/(n−1) Σ_t (a_t ⊙ b_{t+1} − a_{t+1} ⊙ b_t); zero for n = 1.
inline FeatureVec motion_term(std::span<const FeatureVec> features, const HeadParams& heads) {
  FeatureVec out(heads.w_motion_a.cols(), 0.0);
  if (features.size() < 2) return out;
  const double inv = 1.0 / static_cast<double>(features.size() - 1);
  FeatureVec a0 = vec_mat(features[0], heads.w_motion_a);
  FeatureVec b0 = vec_mat(features[0], heads.w_motion_b);
  for (std::size_t t = 0; t + 1 < features.size(); ++t) {
    FeatureVec a1 = vec_mat(features[t + 1], heads.w_motion_a);
    FeatureVec b1 = vec_mat(features[t + 1], heads.w_motion_b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (a0[i] * b1[i] - a1[i] * b0[i]) * inv;
    a0 = std::move(a1);
    b0 = std::move(b1);
  }
  return out;
}

/// Unnormalized pooled video vector z.
inline FeatureVec pooled_projection(std::span<const FeatureVec> features, const HeadParams& heads) {
  FeatureVec z = vec_mat(mean_pool(features), heads.w_vid);
  const FeatureVec m = motion_term(features, heads);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += m[i];
  return z;
}

/// Temporal pooling to one unit-norm video vector.
inline FeatureVec video_feature(std::span<const FeatureVec> features, const HeadParams& heads) {
  return l2_normalize(pooled_projection(features, heads));
}

/// score_k = logit_scale · cos(v, s_k · W_txt).
inline FeatureVec match_scores(std::span<const double> v, const LabelSet& labels, const HeadParams& heads) {
  if (v.size() != heads.w_txt.cols() || labels.dim() != heads.w_txt.rows()) {
    throw ShapeError("match_scores: dimension mismatch");
  }
  FeatureVec scores(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const FeatureVec t = vec_mat(labels.embeddings.row(k), heads.w_txt);
    scores[k] = heads.logit_scale * cosine(v, t);
  }
  return scores;
}

inline FeatureVec class_logits(std::span<const double> v, const HeadParams& heads) {
  FeatureVec logits = vec_mat(v, heads.w_cls);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += heads.b_cls(0, k);
  return logits;
}

struct LossAndGrad {
  double loss = 0.0;
  FeatureVec grad;  // w.r.t. the scores/logits
};

/// −log softmax(scores)[true_index]; gradient softmax(scores) − onehot.
inline LossAndGrad contrastive_loss(std::span<const double> scores, std::size_t true_index) {
  if (true_index >= scores.size()) {
    throw ConfigError("contrastive_loss: label " + std::to_string(true_index) + " out of range " +
                      std::to_string(scores.size()));
  }
  double mx = scores[0];
  for (double s : scores) mx = s > mx ? s : mx;
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  const double lse = mx + std::log(sum);
  LossAndGrad out;
  out.loss = lse - scores[true_index];
  out.grad.resize(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) out.grad[k] = std::exp(scores[k] - lse);
  out.grad[true_index] -= 1.0;
  return out;
}

/// Softmax cross-entropy over v · W_cls + b.
inline LossAndGrad classify_loss(std::span<const double> v, std::size_t label, const HeadParams& heads) {
  return contrastive_loss(class_logits(v, heads), label);
}

// ---------------------------------------------------------------------------
// full head forward/backward for one video

struct HeadGrads {
  Matrix w_vid;
  Matrix w_motion_a;
  Matrix w_motion_b;
  Matrix w_txt;
  Matrix w_cls;
  Matrix b_cls;

  static HeadGrads zeros_like(const HeadParams& h) {
    auto z = [](const Matrix& m) { return Matrix(m.rows(), m.cols()); };
    return {z(h.w_vid), z(h.w_motion_a), z(h.w_motion_b), z(h.w_txt), z(h.w_cls), z(h.b_cls)};
  }
  std::vector<Matrix*> all() { return {&w_vid, &w_motion_a, &w_motion_b, &w_txt, &w_cls, &b_cls}; }
  std::vector<const Matrix*> all() const { return {&w_vid, &w_motion_a, &w_motion_b, &w_txt, &w_cls, &b_cls}; }
  void accumulate(const HeadGrads& o) {
    add_inplace(w_vid, o.w_vid);
    add_inplace(w_motion_a, o.w_motion_a);
    add_inplace(w_motion_b, o.w_motion_b);
    add_inplace(w_txt, o.w_txt);
    add_inplace(w_cls, o.w_cls);
    add_inplace(b_cls, o.b_cls);
  }
  void scale_by(double s) {
    for (Matrix* m : all())
      for (double& v : m->data()) v *= s;
  }
};

/// Parameters in the order HeadGrads::all() lists their gradients.
inline std::vector<Matrix*> head_matrices(HeadParams& h) {
  return {&h.w_vid, &h.w_motion_a, &h.w_motion_b, &h.w_txt, &h.w_cls, &h.b_cls};
}

struct HeadResult {
  double loss = 0.0;
  FeatureVec scores;
  HeadGrads grads;
  std::vector<FeatureVec> feature_grads;  // dL / d features[i]
};

/// Loss, scores and every gradient of the head for one labelled video.
inline HeadResult head_forward_backward(std::span<const FeatureVec> features, std::size_t label,
                                        const LabelSet& labels, const HeadParams& heads, Paradigm paradigm) {
  HeadResult res;
  res.grads = HeadGrads::zeros_like(heads);
  const FeatureVec pooled = mean_pool(features);
  const FeatureVec z = pooled_projection(features, heads);
  const FeatureVec v = l2_normalize(z);
  const std::size_t e = v.size();
  FeatureVec dv(e, 0.0);

  if (paradigm == Paradigm::matching) {
    std::vector<FeatureVec> t_raw(labels.size());
    std::vector<FeatureVec> t_hat(labels.size());
    res.scores.resize(labels.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      t_raw[k] = vec_mat(labels.embeddings.row(k), heads.w_txt);
      t_hat[k] = l2_normalize(t_raw[k]);
      res.scores[k] = heads.logit_scale * dot(v, t_hat[k]);
    }
    const LossAndGrad lg = contrastive_loss(res.scores, label);
    res.loss = lg.loss;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const double g = lg.grad[k] * heads.logit_scale;
      FeatureVec dt_hat(e);
      for (std::size_t i = 0; i < e; ++i) {
        dv[i] += g * t_hat[k][i];
        dt_hat[i] = g * v[i];
      }
      const FeatureVec dt = l2_normalize_backward(t_raw[k], dt_hat);
      add_outer(res.grads.w_txt, labels.embeddings.row(k), dt);
    }
  } else {
    res.scores = class_logits(v, heads);
    const LossAndGrad lg = contrastive_loss(res.scores, label);
    res.loss = lg.loss;
    add_outer(res.grads.w_cls, v, lg.grad);
    for (std::size_t k = 0; k < lg.grad.size(); ++k) res.grads.b_cls(0, k) = lg.grad[k];
    dv = mat_vec(heads.w_cls, lg.grad);
  }

  const FeatureVec dz = l2_normalize_backward(z, dv);
  add_outer(res.grads.w_vid, pooled, dz);
  const FeatureVec dpooled = mat_vec(heads.w_vid, dz);
  const std::size_t n = features.size();
  const double inv = 1.0 / static_cast<double>(n);
  res.feature_grads.assign(n, FeatureVec(e));
  for (auto& fg : res.feature_grads)
    for (std::size_t i = 0; i < e; ++i) fg[i] = dpooled[i] * inv;
  if (n >= 2) {
    // m = Σ_t (a_t ⊙ b_{t+1} − a_{t+1} ⊙ b_t) / (n−1)
    const double inv_pairs = 1.0 / static_cast<double>(n - 1);
    std::vector<FeatureVec> a(n);
    std::vector<FeatureVec> b(n);
    for (std::size_t t = 0; t < n; ++t) {
      a[t] = vec_mat(features[t], heads.w_motion_a);
      b[t] = vec_mat(features[t], heads.w_motion_b);
    }
    std::vector<FeatureVec> da(n, FeatureVec(e));
    std::vector<FeatureVec> db(n, FeatureVec(e));
    for (std::size_t t = 0; t + 1 < n; ++t) {
      for (std::size_t i = 0; i < e; ++i) {
        const double g = dz[i] * inv_pairs;
        da[t][i] += g * b[t + 1][i];
        db[t + 1][i] += g * a[t][i];
        da[t + 1][i] -= g * b[t][i];
        db[t][i] -= g * a[t + 1][i];
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      add_outer(res.grads.w_motion_a, features[t], da[t]);
      add_outer(res.grads.w_motion_b, features[t], db[t]);
      const FeatureVec fa = mat_vec(heads.w_motion_a, da[t]);
      const FeatureVec fb = mat_vec(heads.w_motion_b, db[t]);
      for (std::size_t i = 0; i < e; ++i) res.feature_grads[t][i] += fa[i] + fb[i];
    }
  }
  return res;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// True when `label` is among the k highest scores (ties broken by index).
inline bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k) {
  std::size_t better = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == label) continue;
    if (scores[i] > scores[label] || (scores[i] == scores[label] && i < label)) ++better;
  }
  return better < k;
}

// ---------------------------------------------------------------------------
// label embedding

/// Lowercased alphanumeric runs.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Bag-of-tokens hash embedding: each token maps to a seeded Gaussian
/// vector, the average is L2-normalized.
inline FeatureVec embed_label(std::string_view name, std::string_view caption, std::size_t dim, std::uint64_t seed) {
  const auto tokens = tokenize(caption);
  if (tokens.empty()) {
    throw DegenerateInputError("embed_label: caption for '" + std::string(name) + "' has no tokens");
  }
  FeatureVec acc(dim, 0.0);
  for (const auto& tok : tokens) {
    const CounterRng rng(seed, fnv1a(tok));
    for (std::size_t i = 0; i < dim; ++i) acc[i] += rng.gaussian_at(i);
  }
  for (double& v : acc) v /= static_cast<double>(tokens.size());
  return l2_normalize(acc);
}

inline LabelSet make_label_set(std::vector<std::string> names, std::vector<std::string> captions, std::size_t dim,
                               std::uint64_t seed) {
  if (names.size() < 2) throw ConfigError("label set needs at least 2 labels");
  if (names.size() != captions.size()) throw ConfigError("label set: names/captions length mismatch");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw ConfigError("label set: duplicate name '" + n + "'");
  }
  LabelSet ls;
  ls.embeddings = Matrix(names.size(), dim);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const FeatureVec e = embed_label(names[k], captions[k], dim, seed);
    std::copy(e.begin(), e.end(), ls.embeddings.row(k).begin());
  }
  ls.names = std::move(names);
  ls.captions = std::move(captions);
  return ls;
}

// ---------------------------------------------------------------------------
// manifest: UTF-8, one `name<TAB>caption` per line; '#' starts a comment line.

struct ManifestEntry {
  std::string name;
  std::string caption;  // empty when the line had none
};

inline std::vector<ManifestEntry> parse_manifest(std::istream& is) {
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    ManifestEntry e;
    const auto tab = line.find('\t');
    e.name = line.substr(0, tab);
    if (tab != std::string::npos) e.caption = line.substr(tab + 1);
    if (e.name.empty()) throw FormatError("manifest: empty label name");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read manifest " + path);
  return parse_manifest(is);
}

}  // namespace sllm
