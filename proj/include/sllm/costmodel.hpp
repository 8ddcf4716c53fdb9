// SPDX-License-Identifier: Apache-2.0
#pragma once

// Analytic multiply-accumulate accounting for the frame encoder, the
// restoration module and whole pipelines. Counts are MACs; "GFLOPs" in
// reports means 10⁹ MACs, the convention under which a 224px ViT-B/32
// image costs ~4.41 G.

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sllm/encoder.hpp"
#include "sllm/errors.hpp"
#include "sllm/ffres.hpp"
#include "sllm/sampling.hpp"

namespace sllm {

using Macs = std::uint64_t;

inline double to_gflops(Macs m) { return static_cast<double>(m) / 1e9; }

struct EncoderCost {
  Macs patch_embed = 0;  // (C−1) · patch²·channels · P
  Macs attention = 0;    // L · (4·C·P² + 2·C²·P): Q,K,V,out projections + scores + weighted sum
  Macs mlp = 0;          // L · 8·C·P² (4x expansion, two matrices)
  Macs output_proj = 0;  // P · E, class token only

  Macs total() const { return patch_embed + attention + mlp + output_proj; }
};

/// T_img for one frame.
inline EncoderCost encoder_cost(const EncoderConfig& cfg) {
  cfg.validate();
  const Macs c = cfg.tokens();
  const Macs p = cfg.hidden;
  const Macs l = cfg.layers;
  EncoderCost e;
  e.patch_embed = cfg.num_patches() * cfg.patch_dim() * p;
  e.attention = l * (4 * c * p * p + 2 * c * c * p);
  e.mlp = l * (8 * c * p * p);
  e.output_proj = p * cfg.out;
  return e;
}

/// One directed two-token pass: L_ffr · (2²·E + 2·E²).
inline Macs ffres_directed_cost(std::size_t dim, std::size_t layers) {
  const Macs e = dim;
  return static_cast<Macs>(layers) * (4 * e + 2 * e * e);
}

/// Two directed passes plus the λ blend (2E) per restored frame.
inline Macs ffres_cost(std::size_t dim, std::size_t layers, std::size_t n_restored) {
  return static_cast<Macs>(n_restored) * (2 * ffres_directed_cost(dim, layers) + 2 * static_cast<Macs>(dim));
}

enum class PipelineMode { baseline, sllm_infer, sllm_train };

inline std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::baseline: return "baseline";
    case PipelineMode::sllm_infer: return "sllm_infer";
    case PipelineMode::sllm_train: return "sllm_train";
  }
  return "?";
}

inline PipelineMode parse_pipeline_mode(const std::string& s) {
  if (s == "baseline") return PipelineMode::baseline;
  if (s == "sllm_infer") return PipelineMode::sllm_infer;
  if (s == "sllm_train") return PipelineMode::sllm_train;
  throw ConfigError("unknown cost mode '" + s + "'");
}

struct CostReport {
  PipelineMode mode = PipelineMode::baseline;
  std::size_t frames = 0;  // T
  std::size_t filter = 1;  // r (1 for baseline)
  std::size_t ffres_layers = kDefaultFFResLayers;
  std::size_t encoded_frames = 0;
  std::size_t restored_frames = 0;
  EncoderCost per_frame;
  /// Ordered (stage, MACs); total() is their sum.
  std::vector<std::pair<std::string, Macs>> stages;
  Macs supervision_raw = 0;          // gradient-free forward of the discarded frames
  Macs supervision_train_equiv = 0;  // raw / 2, the share of a forward+backward step
  Macs baseline_total = 0;           // T · T_img

  Macs total() const {
    Macs t = 0;
    for (const auto& [_, m] : stages) t += m;
    return t;
  }
  Macs stage(const std::string& name) const {
    for (const auto& [n, m] : stages)
      if (n == name) return m;
    return 0;
  }
  Macs encoder_stage() const {
    return stage("patch_embed") + stage("attention") + stage("mlp") + stage("output_proj");
  }
  double encoder_ratio() const { return static_cast<double>(encoder_stage()) / static_cast<double>(baseline_total); }
  double total_ratio() const { return static_cast<double>(total()) / static_cast<double>(baseline_total); }
  double encoder_share() const { return static_cast<double>(encoder_stage()) / static_cast<double>(total()); }
};

/// \param restore_per_gap  forwarded to make_plan (0 = restore every in-gap frame).
inline CostReport pipeline_cost(const EncoderConfig& cfg, std::size_t frames, std::size_t filter, PipelineMode mode,
                                std::size_t ffres_layers = kDefaultFFResLayers, std::size_t restore_per_gap = 0) {
  if (frames < 1) throw ConfigError("pipeline_cost: T must be >= 1");
  CostReport rep;
  rep.mode = mode;
  rep.frames = frames;
  rep.ffres_layers = ffres_layers;
  rep.per_frame = encoder_cost(cfg);
  const Macs t_img = rep.per_frame.total();
  rep.baseline_total = static_cast<Macs>(frames) * t_img;
  if (mode == PipelineMode::baseline) {
    rep.encoded_frames = frames;
  } else {
    const PartitionPlan plan = make_plan(frames, filter, restore_per_gap);
    rep.filter = filter;
    rep.encoded_frames = plan.retained.size();
    rep.restored_frames = plan.triples.size();
  }
  const Macs n = rep.encoded_frames;
  rep.stages = {{"patch_embed", n * rep.per_frame.patch_embed},
                {"attention", n * rep.per_frame.attention},
                {"mlp", n * rep.per_frame.mlp},
                {"output_proj", n * rep.per_frame.output_proj}};
  if (mode != PipelineMode::baseline) {
    rep.stages.emplace_back("ffres", ffres_cost(cfg.out, ffres_layers, rep.restored_frames));
  }
  if (mode == PipelineMode::sllm_train) {
    rep.supervision_raw = static_cast<Macs>(rep.restored_frames) * t_img;
    rep.supervision_train_equiv = rep.supervision_raw / 2;
    rep.stages.emplace_back("supervision", rep.supervision_raw);
  }
  Macs check = 0;
  for (const auto& [_, m] : rep.stages) check += m;
  if (check != rep.total()) throw ConsistencyError("cost report: total != sum of stages");
  return rep;
}

inline nlohmann::json to_json(const CostReport& r) {
  nlohmann::json j;
  j["unit"] = "GFLOPs = 1e9 multiply-accumulates";
  j["mode"] = to_string(r.mode);
  j["T"] = r.frames;
  j["r"] = r.filter;
  j["ffres_layers"] = r.ffres_layers;
  j["encoded_frames"] = r.encoded_frames;
  j["restored_frames"] = r.restored_frames;
  j["per_frame_macs"] = {{"patch_embed", r.per_frame.patch_embed},
                         {"attention", r.per_frame.attention},
                         {"mlp", r.per_frame.mlp},
                         {"output_proj", r.per_frame.output_proj},
                         {"total", r.per_frame.total()}};
  j["per_frame_gflops"] = to_gflops(r.per_frame.total());
  auto& st = j["stages_macs"] = nlohmann::json::array();
  for (const auto& [n, m] : r.stages) st.push_back({{"stage", n}, {"macs", m}, {"gflops", to_gflops(m)}});
  j["encoder_stage_gflops"] = to_gflops(r.encoder_stage());
  j["ffres_gflops"] = to_gflops(r.stage("ffres"));
  j["supervision_raw_gflops"] = to_gflops(r.supervision_raw);
  j["supervision_train_equiv_gflops"] = to_gflops(r.supervision_train_equiv);
  j["total_macs"] = r.total();
  j["total_gflops"] = to_gflops(r.total());
  j["baseline_total_gflops"] = to_gflops(r.baseline_total);
  j["encoder_ratio"] = r.encoder_ratio();
  j["total_ratio"] = r.total_ratio();
  j["encoder_share"] = r.encoder_share();
  return j;
}

inline std::string cost_csv_header() {
  return "mode,T,r,encoded_frames,restored_frames,per_frame_macs,patch_embed,attention,mlp,output_proj,ffres,"
         "supervision_raw,supervision_train_equiv,total,baseline_total";
}

/// Fixed-column row, integer MACs only so the output is bit-stable.
inline std::string cost_csv_row(const CostReport& r) {
  std::ostringstream os;
  os << to_string(r.mode) << ',' << r.frames << ',' << r.filter << ',' << r.encoded_frames << ','
     << r.restored_frames << ',' << r.per_frame.total() << ',' << r.stage("patch_embed") << ','
     << r.stage("attention") << ',' << r.stage("mlp") << ',' << r.stage("output_proj") << ',' << r.stage("ffres")
     << ',' << r.supervision_raw << ',' << r.supervision_train_equiv << ',' << r.total() << ','
     << r.baseline_total;
  return os.str();
}

}  // namespace sllm
