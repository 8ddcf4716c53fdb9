// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sllm/recognition.hpp"
#include "test_util.hpp"

using namespace sllm;
using namespace sllm::testing;

namespace {

HeadParams plain_heads(std::size_t dim, std::size_t labels) {
  HeadParams h = init_heads(dim, labels, 1);
  h.w_vid = Matrix::identity(dim);
  h.w_txt = Matrix::identity(dim);
  h.w_motion_a = Matrix(dim, dim);
  h.w_motion_b = Matrix(dim, dim);
  return h;
}

LabelSet random_labels(std::size_t m, std::size_t dim, std::uint64_t seed) {
  LabelSet ls;
  ls.embeddings = Matrix(m, dim);
  for (std::size_t k = 0; k < m; ++k) {
    ls.names.push_back("l" + std::to_string(k));
    ls.captions.push_back("c" + std::to_string(k));
    const FeatureVec e = l2_normalize(random_vec(dim, seed, k));
    std::copy(e.begin(), e.end(), ls.embeddings.row(k).begin());
  }
  return ls;
}

std::vector<FeatureVec> random_sequence(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::vector<FeatureVec> seq;
  for (std::size_t t = 0; t < n; ++t) seq.push_back(random_vec(dim, seed, 50 + t));
  return seq;
}

}  // namespace

TEST(Pooling, SingleFrameIdentityIsNormalizedFeature) {
  const HeadParams h = plain_heads(4, 2);
  const std::vector<FeatureVec> one{FeatureVec{3, 0, 4, 0}};
  const FeatureVec v = video_feature(one, h);
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[2], 0.8, 1e-15);
}

TEST(Pooling, MeanPoolIgnoresOrder) {
  auto seq = random_sequence(9, 6, 3);
  const FeatureVec a = mean_pool(seq);
  std::reverse(seq.begin(), seq.end());
  std::rotate(seq.begin(), seq.begin() + 4, seq.end());
  const FeatureVec b = mean_pool(seq);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Pooling, WithoutMotionMatchesMeanThenProject) {
  HeadParams h = plain_heads(6, 3);
  h.w_vid = random_matrix(6, 6, 4);
  const auto seq = random_sequence(7, 6, 4);
  FeatureVec mean(6, 0.0);
  for (const auto& f : seq)
    for (std::size_t i = 0; i < 6; ++i) mean[i] += f[i] / 7.0;
  const Matrix z = naive_matmul(Matrix(1, 6, mean), h.w_vid);
  const FeatureVec want = l2_normalize(z.row_vec(0));
  const FeatureVec got = video_feature(seq, h);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Pooling, MotionTermMatchesDirectSum) {
  const HeadParams h = init_heads(5, 2, 8);
  const auto seq = random_sequence(6, 5, 8);
  FeatureVec want(5, 0.0);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const FeatureVec a0 = naive_matmul(Matrix(1, 5, seq[t]), h.w_motion_a).row_vec(0);
    const FeatureVec b0 = naive_matmul(Matrix(1, 5, seq[t]), h.w_motion_b).row_vec(0);
    const FeatureVec a1 = naive_matmul(Matrix(1, 5, seq[t + 1]), h.w_motion_a).row_vec(0);
    const FeatureVec b1 = naive_matmul(Matrix(1, 5, seq[t + 1]), h.w_motion_b).row_vec(0);
    for (std::size_t i = 0; i < 5; ++i) want[i] += (a0[i] * b1[i] - a1[i] * b0[i]) / 5.0;
  }
  const FeatureVec got = motion_term(seq, h);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Pooling, MotionFlipsUnderReversalAndVanishesWhenStatic) {
  const HeadParams h = init_heads(6, 2, 2);
  auto seq = random_sequence(8, 6, 2);
  const FeatureVec fwd = motion_term(seq, h);
  std::reverse(seq.begin(), seq.end());
  const FeatureVec bwd = motion_term(seq, h);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(fwd[i], -bwd[i], 1e-13);
  const std::vector<FeatureVec> still(5, seq[0]);
  for (double v : motion_term(still, h)) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : motion_term(std::vector<FeatureVec>{seq[0]}, h)) EXPECT_EQ(v, 0.0);
}

TEST(Pooling, EmptyOrRaggedRejected) {
  const HeadParams h = plain_heads(3, 2);
  EXPECT_THROW(video_feature(std::vector<FeatureVec>{}, h), DegenerateInputError);
  EXPECT_THROW(mean_pool(std::vector<FeatureVec>{FeatureVec(3), FeatureVec(2)}), ShapeError);
}

TEST(Matching, ScoresMatchBruteForceCosine) {
  HeadParams h = plain_heads(5, 4);
  h.w_txt = random_matrix(5, 5, 6);
  const LabelSet ls = random_labels(4, 5, 6);
  const FeatureVec v = l2_normalize(random_vec(5, 6, 99));
  const FeatureVec s = match_scores(v, ls, h);
  for (std::size_t k = 0; k < 4; ++k) {
    const FeatureVec t = naive_matmul(Matrix(1, 5, ls.embeddings.row_vec(k)), h.w_txt).row_vec(0);
    double vt = 0, tt = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      vt += v[i] * t[i];
      tt += t[i] * t[i];
    }
    EXPECT_NEAR(s[k], 10.0 * vt / std::sqrt(tt), 1e-12);
  }
}

TEST(Matching, LabelEqualToVideoWins) {
  const HeadParams h = plain_heads(8, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LabelSet ls = random_labels(6, 8, seed);
    const std::size_t k = seed % 6;
    const FeatureVec s = match_scores(ls.embeddings.row(k), ls, h);
    EXPECT_EQ(argmax(s), k);
    EXPECT_NEAR(s[k], 10.0, 1e-12);
  }
}

TEST(Matching, ArgmaxInvariantToRescaling) {
  HeadParams h = plain_heads(6, 5);
  h.w_txt = random_matrix(6, 6, 7);
  LabelSet ls = random_labels(5, 6, 7);
  const FeatureVec v = l2_normalize(random_vec(6, 7, 1));
  const std::size_t best = argmax(match_scores(v, ls, h));
  HeadParams hot = h;
  hot.logit_scale = 37.0;
  EXPECT_EQ(argmax(match_scores(v, ls, hot)), best);
  for (std::size_t k = 0; k < ls.size(); ++k)
    for (double& x : ls.embeddings.row(k)) x *= 0.5 + static_cast<double>(k);
  EXPECT_EQ(argmax(match_scores(v, ls, h)), best);
}

TEST(Matching, DimensionMismatchThrows) {
  const HeadParams h = plain_heads(4, 3);
  const LabelSet ls = random_labels(3, 4, 1);
  EXPECT_THROW(match_scores(FeatureVec(5, 1.0), ls, h), ShapeError);
}

TEST(Loss, UniformScoresGiveLogM) {
  for (std::size_t m : {2u, 8u, 400u}) {
    const FeatureVec s(m, 1.25);
    EXPECT_NEAR(contrastive_loss(s, m / 2).loss, std::log(static_cast<double>(m)), 1e-12);
  }
}

TEST(Loss, LargeMarginGivesTinyLoss) {
  FeatureVec s(5, 0.0);
  s[3] = 50.0;
  EXPECT_LE(contrastive_loss(s, 3).loss, 1e-20);
  EXPECT_GE(contrastive_loss(s, 3).loss, 0.0);
}

TEST(Loss, OutOfRangeLabelThrows) {
  EXPECT_THROW(contrastive_loss(FeatureVec(3, 0.0), 3), ConfigError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FeatureVec s = random_vec(7, seed, 0, 3.0);
    const std::size_t y = seed % 7;
    auto loss = [&] { return contrastive_loss(s, y).loss; };
    const FeatureVec g = contrastive_loss(s, y).grad;
    EXPECT_LE(max_grad_error(s, g, loss, 1e-5), 1e-6);
    EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 0.0, 1e-14);
  }
}

TEST(Loss, ClassifyMatchesLogitsPath) {
  HeadParams h = init_heads(4, 3, 2);
  h.w_cls = random_matrix(4, 3, 2);
  h.b_cls = random_matrix(1, 3, 2, 1);
  const FeatureVec v = l2_normalize(random_vec(4, 2, 5));
  const FeatureVec logits = class_logits(v, h);
  const Matrix want = naive_matmul(Matrix(1, 4, v), h.w_cls);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(logits[k], want(0, k) + h.b_cls(0, k), 1e-12);
  EXPECT_DOUBLE_EQ(classify_loss(v, 1, h).loss, contrastive_loss(logits, 1).loss);
}

TEST(Head, FeatureGradientsMatchFiniteDifferences) {
  for (Paradigm p : {Paradigm::matching, Paradigm::classification}) {
    HeadParams h = init_heads(5, 4, 3);
    h.w_cls = random_matrix(5, 4, 3, 1, 0.5);
    auto seq = random_sequence(6, 5, 3);
    const LabelSet ls = random_labels(4, 5, 3);
    const HeadResult r = head_forward_backward(seq, 2, ls, h, p);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      auto loss = [&] { return head_forward_backward(seq, 2, ls, h, p).loss; };
      EXPECT_LE(max_grad_error(seq[t], r.feature_grads[t], loss), 1e-6) << t;
    }
  }
}

TEST(Head, InitIsDeterministic) {
  EXPECT_EQ(init_heads(8, 5, 4), init_heads(8, 5, 4));
  EXPECT_FALSE(init_heads(8, 5, 4) == init_heads(8, 5, 5));
  EXPECT_THROW(init_heads(8, 1, 4), ConfigError);
}

TEST(TopK, TiesBrokenByIndex) {
  const FeatureVec s{1, 3, 3, 0};
  EXPECT_TRUE(in_top_k(s, 1, 1));
  EXPECT_FALSE(in_top_k(s, 2, 1));
  EXPECT_TRUE(in_top_k(s, 2, 2));
  EXPECT_TRUE(in_top_k(s, 3, 4));
  EXPECT_EQ(argmax(s), 1u);
}

TEST(LabelEmbedding, DeterministicAndOrderFree) {
  const FeatureVec a = embed_label("x", "jumping over a fence", 32, 11);
  EXPECT_EQ(a, embed_label("x", "jumping over a fence", 32, 11));
  const FeatureVec b = embed_label("x", "a fence, over JUMPING", 32, 11);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
  EXPECT_NEAR(norm(a), 1.0, 1e-14);
  EXPECT_NE(a, embed_label("x", "jumping over a fence", 32, 12));
}

TEST(LabelEmbedding, DisjointTokensNearlyOrthogonal) {
  CounterRng rng(21, 0);
  auto word = [&] {
    std::string w;
    for (int i = 0; i < 6; ++i) w.push_back(static_cast<char>('a' + rng.below(26)));
    return w;
  };
  double abs_sum = 0, sq_sum = 0;
  for (int pair = 0; pair < 100; ++pair) {
    // three-token captions with no shared token
    std::set<std::string> used;
    std::string ca, cb;
    while (used.size() < 6) {
      const std::string w = word();
      if (!used.insert(w).second) continue;
      (used.size() <= 3 ? ca : cb) += w + " ";
    }
    const double c = cosine(embed_label("a", ca, 32, 11), embed_label("b", cb, 32, 11));
    abs_sum += std::abs(c);
    sq_sum += c * c;
  }
  // independent directions in R^32: cosine ~ N(0, 1/32), so single pairs do
  // reach 0.4; the bound applies to the average
  EXPECT_LE(abs_sum / 100.0, 0.2);
  EXPECT_NEAR(std::sqrt(sq_sum / 100.0), 1.0 / std::sqrt(32.0), 0.06);
}

TEST(LabelEmbedding, EmptyCaptionRejected) {
  EXPECT_THROW(embed_label("x", "  ,;  ", 16, 1), DegenerateInputError);
  EXPECT_EQ(tokenize("Salsa-Dancing 2x!"), (std::vector<std::string>{"salsa", "dancing", "2x"}));
}

TEST(LabelSet, ValidatesNames) {
  EXPECT_THROW(make_label_set({"a"}, {"a"}, 8, 1), ConfigError);
  EXPECT_THROW(make_label_set({"a", "b"}, {"a"}, 8, 1), ConfigError);
  EXPECT_THROW(make_label_set({"a", "a"}, {"a", "b"}, 8, 1), ConfigError);
  const LabelSet ls = make_label_set({"a", "b"}, {"one", "two"}, 8, 1);
  EXPECT_EQ(ls.size(), 2u);
  EXPECT_EQ(ls.dim(), 8u);
}

TEST(Manifest, ParsesCommentsTabsAndCrlf) {
  std::istringstream is("# header\nrun\tsomeone runs\r\n\nwalk\n  \tspace name\n");
  const auto e = parse_manifest(is);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].name, "run");
  EXPECT_EQ(e[0].caption, "someone runs");
  EXPECT_EQ(e[1].name, "walk");
  EXPECT_TRUE(e[1].caption.empty());
  std::istringstream bad("\tno name\n");
  EXPECT_THROW(parse_manifest(bad), FormatError);
  EXPECT_THROW(read_manifest("/nonexistent/manifest.tsv"), FormatError);
}
