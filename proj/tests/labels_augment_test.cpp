// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "sllm/datagen.hpp"
#include "sllm/labels_augment.hpp"
#include "test_util.hpp"

using namespace sllm;
using namespace sllm::testing;

namespace {

const std::string kManifest = std::string(SLLM_DATA_DIR) + "/synthetic_captions.tsv";

std::vector<std::string> motion_names() {
  std::vector<std::string> out;
  for (Motion m : all_motions()) out.push_back(motion_name(m));
  return out;
}

}  // namespace

TEST(Caption, TemplateFillsSlot) {
  const auto p = CaptionProvider::from_template("a video of {}");
  EXPECT_EQ(p.caption("salsa dancing"), "a video of salsa dancing");
  EXPECT_EQ(caption(p, "x"), "a video of x");
  EXPECT_THROW(p.caption(""), ConfigError);
}

TEST(Caption, TemplateNeedsExactlyOneSlot) {
  EXPECT_THROW(CaptionProvider::from_template("no slot"), ConfigError);
  EXPECT_THROW(CaptionProvider::from_template("{} and {}"), ConfigError);
  EXPECT_NO_THROW(CaptionProvider::from_template("{} happens"));
}

TEST(Caption, TemplateInjectiveOnDistinctNames) {
  const auto p = CaptionProvider::from_template();
  std::set<std::string> seen;
  for (const auto& n : motion_names()) EXPECT_TRUE(seen.insert(p.caption(n)).second);
}

TEST(Caption, FileReturnsStoredText) {
  const auto p = CaptionProvider::from_file(kManifest);
  EXPECT_EQ(p.kind(), CaptionProvider::Kind::file);
  EXPECT_EQ(p.caption("dancing macarena"),
            "a dance that involves a series of coordinated arm movements and claps");
}

TEST(Caption, FileFallsBackToTemplate) {
  const auto p = CaptionProvider::from_file(kManifest);
  EXPECT_EQ(p.caption("salsa dancing"), "a video of salsa dancing");
  const auto q = CaptionProvider::from_entries({{"walk", ""}}, "clip: {}");
  EXPECT_EQ(q.caption("walk"), "clip: walk");
}

TEST(Caption, UnreadableManifestThrows) {
  EXPECT_THROW(CaptionProvider::from_file("/nonexistent/captions.tsv"), FormatError);
}

TEST(Caption, ShippedManifestCoversAllMotions) {
  const auto p = CaptionProvider::from_file(kManifest);
  const auto t = CaptionProvider::from_template();
  for (const auto& n : motion_names()) EXPECT_NE(p.caption(n), t.caption(n)) << n;
}

TEST(Report, IdenticalCaptionsHaveUnitCosine) {
  const LabelSet ls = make_label_set({"a", "b", "c"}, {"same words", "same words", "other"}, 16, 3);
  const auto rep = label_similarity_report(ls);
  EXPECT_NEAR(rep.similarity(0, 1), 1.0, 1e-12);
}

TEST(Report, OrthogonalEmbeddingsHaveZeroMean) {
  LabelSet ls;
  ls.names = {"a", "b", "c"};
  ls.captions = ls.names;
  ls.embeddings = Matrix::identity(3);
  const auto rep = label_similarity_report(ls);
  EXPECT_EQ(rep.mean_off_diagonal, 0.0);
}

TEST(Report, SymmetricUnitDiagonalSelfExcluded) {
  std::vector<std::string> names, caps;
  for (int i = 0; i < 12; ++i) {
    names.push_back("n" + std::to_string(i));
    caps.push_back("w" + std::to_string(i % 4) + " v" + std::to_string(i % 5) + " u" + std::to_string(i));
  }
  const LabelSet ls = make_label_set(names, caps, 32, 11);
  const auto rep = label_similarity_report(ls, 5);
  double off = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(rep.similarity(i, i), 1.0);
    for (std::size_t j = 0; j < 12; ++j) {
      EXPECT_NEAR(rep.similarity(i, j), rep.similarity(j, i), 1e-12);
      if (i != j) off += rep.similarity(i, j);
    }
    ASSERT_EQ(rep.neighbors[i].size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_NE(rep.neighbors[i][k].index, i);
      if (k > 0) {
        EXPECT_GE(rep.neighbors[i][k - 1].similarity, rep.neighbors[i][k].similarity);
      }
    }
  }
  EXPECT_NEAR(rep.mean_off_diagonal, off / (12.0 * 11.0), 1e-12);
  // k larger than M-1 is clamped
  EXPECT_EQ(label_similarity_report(ls, 100).neighbors[0].size(), 11u);
}

TEST(Report, NeedsTwoLabels) {
  LabelSet ls;
  ls.names = {"a"};
  ls.embeddings = Matrix::identity(1);
  EXPECT_THROW(label_similarity_report(ls), ConfigError);
}

TEST(Report, AugmentedCaptionsAreMoreDistinct) {
  const auto names = motion_names();
  const auto plain = label_similarity_report(make_label_set(names, CaptionProvider::from_template(), 32, 11));
  const auto rich = label_similarity_report(make_label_set(names, CaptionProvider::from_file(kManifest), 32, 11));
  EXPECT_LT(rich.mean_off_diagonal, plain.mean_off_diagonal);
}

TEST(Report, JsonAndCsvShapes) {
  const LabelSet ls = make_label_set({"a", "b", "c"}, {"x y", "y z", "z w"}, 8, 1);
  const auto rep = label_similarity_report(ls, 2);
  const auto j = to_json(rep);
  EXPECT_EQ(j["similarity"].size(), 3u);
  EXPECT_EQ(j["neighbors"]["a"].size(), 2u);
  const std::string csv = to_csv(rep);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_EQ(csv.rfind("label_a,label_b,cosine\n", 0), 0u);
}
