// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sllm/costmodel.hpp"

using namespace sllm;

namespace {

std::vector<std::string> golden_lines(const std::string& name) {
  std::ifstream is(std::string(SLLM_GOLDEN_DIR) + "/" + name);
  EXPECT_TRUE(is.good()) << name;
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::vector<std::string> csv_for(const EncoderConfig& cfg) {
  std::vector<std::string> out{cost_csv_header()};
  out.push_back(cost_csv_row(pipeline_cost(cfg, 16, 2, PipelineMode::baseline)));
  out.push_back(cost_csv_row(pipeline_cost(cfg, 16, 2, PipelineMode::sllm_infer)));
  out.push_back(cost_csv_row(pipeline_cost(cfg, 16, 2, PipelineMode::sllm_train)));
  return out;
}

}  // namespace

TEST(EncoderCost, VitB32Image) {
  const EncoderCost c = encoder_cost(EncoderConfig::vit_b32());
  EXPECT_EQ(c.total(), 4408811520ULL);
  EXPECT_NEAR(to_gflops(c.total()), 4.41, 4.41 * 0.03);
}

TEST(EncoderCost, DeskConfigHandSum) {
  // C=17 tokens, P=64, L=2, 16 patches of 8x8x1, E=32
  const Macs patch = 16ULL * 64 * 64;
  const Macs attn = 2ULL * (4 * 17 * 64 * 64 + 2 * 17 * 17 * 64);
  const Macs mlp = 2ULL * 8 * 17 * 64 * 64;
  const Macs proj = 64ULL * 32;
  const EncoderCost c = encoder_cost(EncoderConfig{});
  EXPECT_EQ(c.patch_embed, patch);
  EXPECT_EQ(c.attention, attn);
  EXPECT_EQ(c.mlp, mlp);
  EXPECT_EQ(c.output_proj, proj);
  EXPECT_EQ(c.total(), 1812736ULL);
}

TEST(FFResCost, PrintedFormulaPlusBlend) {
  EXPECT_EQ(ffres_directed_cost(512, 3), 3ULL * (2048 + 524288));
  EXPECT_EQ(ffres_cost(512, 3, 1), 2ULL * 3 * (2048 + 524288) + 2 * 512);
  EXPECT_EQ(ffres_cost(512, 3, 0), 0u);
  for (std::size_t n = 1; n < 10; ++n) EXPECT_EQ(ffres_cost(64, 2, n), n * ffres_cost(64, 2, 1));
}

TEST(PipelineCost, SixteenFrameBaseline) {
  const CostReport r = pipeline_cost(EncoderConfig::vit_b32(), 16, 2, PipelineMode::baseline);
  EXPECT_NEAR(to_gflops(r.total()), 70.62, 70.62 * 0.03);
  EXPECT_EQ(r.total(), r.baseline_total);
  EXPECT_EQ(r.stage("ffres"), 0u);
}

TEST(PipelineCost, HalvedEncoderStage) {
  const CostReport r = pipeline_cost(EncoderConfig::vit_b32(), 16, 2, PipelineMode::sllm_infer);
  EXPECT_NEAR(to_gflops(r.encoder_stage()), 35.31, 35.31 * 0.03);
  EXPECT_LT(static_cast<double>(r.stage("ffres")), 0.01 * static_cast<double>(r.encoder_stage()));
  EXPECT_EQ(r.encoded_frames, 8u);
  EXPECT_EQ(r.restored_frames, 7u);
  EXPECT_EQ(r.supervision_raw, 0u);
}

TEST(PipelineCost, TrainingSupervisionUnderEighteen) {
  const CostReport r = pipeline_cost(EncoderConfig::vit_b32(), 16, 2, PipelineMode::sllm_train);
  EXPECT_EQ(r.supervision_raw, 7 * r.per_frame.total());
  EXPECT_EQ(r.supervision_train_equiv, r.supervision_raw / 2);
  EXPECT_LT(to_gflops(r.supervision_train_equiv), 18.0);
  EXPECT_EQ(r.stage("supervision"), r.supervision_raw);
}

TEST(PipelineCost, EncoderRatioIsRetainedFraction) {
  for (const EncoderConfig& cfg : {EncoderConfig{}, EncoderConfig::vit_b32()}) {
    for (std::size_t t = 2; t <= 40; ++t) {
      const CostReport r = pipeline_cost(cfg, t, 2, PipelineMode::sllm_infer);
      EXPECT_DOUBLE_EQ(r.encoder_ratio(), static_cast<double>((t + 1) / 2) / static_cast<double>(t));
      EXPECT_GT(r.total_ratio(), 0.0);
      EXPECT_LE(r.total_ratio(), 1.0);
    }
  }
}

TEST(PipelineCost, TotalIsSumOfStages) {
  for (PipelineMode m : {PipelineMode::baseline, PipelineMode::sllm_infer, PipelineMode::sllm_train}) {
    const CostReport r = pipeline_cost(EncoderConfig{}, 12, 3, m);
    Macs s = 0;
    for (const auto& [_, v] : r.stages) s += v;
    EXPECT_EQ(r.total(), s);
  }
}

TEST(PipelineCost, MonotoneInFramesAndArchitecture) {
  const EncoderConfig base;
  for (std::size_t t = 2; t < 32; ++t) {
    EXPECT_LT(pipeline_cost(base, t, 2, PipelineMode::baseline).total(),
              pipeline_cost(base, t + 1, 2, PipelineMode::baseline).total());
  }
  EncoderConfig deeper = base;
  deeper.layers += 1;
  EncoderConfig wider = base;
  wider.hidden = 128;
  EncoderConfig finer = base;
  finer.patch = 4;  // more tokens
  const Macs b = encoder_cost(base).total();
  EXPECT_LT(b, encoder_cost(deeper).total());
  EXPECT_LT(b, encoder_cost(wider).total());
  EXPECT_LT(b, encoder_cost(finer).total());
}

TEST(PipelineCost, EncoderStageNonIncreasingInFilter) {
  // ⌈T/r⌉ can tie for neighbouring r (T=16: r=4 and r=5 both keep 4 frames)
  const EncoderConfig cfg;
  for (std::size_t t = 4; t <= 64; ++t) {
    for (std::size_t r = 2; r < t; ++r) {
      const Macs a = pipeline_cost(cfg, t, r, PipelineMode::sllm_infer).encoder_stage();
      const Macs b = pipeline_cost(cfg, t, r + 1, PipelineMode::sllm_infer).encoder_stage();
      if ((t + r - 1) / r > (t + r) / (r + 1)) {
        EXPECT_LT(b, a) << t << "," << r;
      } else {
        EXPECT_EQ(b, a) << t << "," << r;
      }
    }
  }
}

TEST(PipelineCost, DeskEncoderShareDominates) {
  const CostReport r = pipeline_cost(EncoderConfig{}, 16, 2, PipelineMode::sllm_infer);
  EXPECT_GT(r.encoder_share(), 0.5);
}

TEST(PipelineCost, InvalidInputsRejected) {
  EXPECT_THROW(pipeline_cost(EncoderConfig{}, 0, 2, PipelineMode::baseline), ConfigError);
  EXPECT_THROW(pipeline_cost(EncoderConfig{}, 16, 1, PipelineMode::sllm_infer), ConfigError);
  EXPECT_THROW(parse_pipeline_mode("fast"), ConfigError);
  EncoderConfig bad;
  bad.patch = 5;
  EXPECT_THROW(encoder_cost(bad), ConfigError);
}

TEST(Golden, VitB32Csv) { EXPECT_EQ(csv_for(EncoderConfig::vit_b32()), golden_lines("cost_vit_b32.csv")); }

TEST(Golden, DeskCsv) { EXPECT_EQ(csv_for(EncoderConfig{}), golden_lines("cost_desk.csv")); }

TEST(Golden, JsonStable) {
  const auto j = to_json(pipeline_cost(EncoderConfig::vit_b32(), 16, 2, PipelineMode::sllm_train));
  std::ifstream is(std::string(SLLM_GOLDEN_DIR) + "/cost_vit_b32_train.json");
  ASSERT_TRUE(is.good());
  const auto want = nlohmann::json::parse(is);
  const auto& rep = want.at("reports").at(0);
  EXPECT_EQ(j["total_macs"], rep["total_macs"]);
  EXPECT_EQ(j["stages_macs"], rep["stages_macs"]);
  EXPECT_EQ(j["per_frame_macs"], rep["per_frame_macs"]);
  EXPECT_EQ(want["one_restoration_macs"].get<Macs>(), ffres_cost(512, 3, 1));
}
