// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end training / evaluation / benchmarking of the sample-less
// pipeline and its ablation variants.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sllm/costmodel.hpp"
#include "sllm/datagen.hpp"
#include "sllm/encoder.hpp"
#include "sllm/errors.hpp"
#include "sllm/ffres.hpp"
#include "sllm/labels_augment.hpp"
#include "sllm/numerics.hpp"
#include "sllm/recognition.hpp"
#include "sllm/sampling.hpp"

namespace sllm {

inline constexpr int kReportSchemaVersion = 1;

enum class Variant { baseline, sllm, sllm_no_supervision, sllm_no_ffres, sllm_no_augment };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::sllm: return "sllm";
    case Variant::sllm_no_supervision: return "sllm_no_supervision";
    case Variant::sllm_no_ffres: return "sllm_no_ffres";
    case Variant::sllm_no_augment: return "sllm_no_augment";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::baseline, Variant::sllm, Variant::sllm_no_supervision, Variant::sllm_no_ffres,
                    Variant::sllm_no_augment}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "'");
}

inline std::string to_string(Paradigm p) { return p == Paradigm::matching ? "matching" : "classification"; }

inline Paradigm parse_paradigm(const std::string& s) {
  if (s == "matching") return Paradigm::matching;
  if (s == "classification") return Paradigm::classification;
  throw ConfigError("unknown paradigm '" + s + "'");
}

/// What a variant does with frames.
struct VariantTraits {
  bool drops_frames = true;  // encode retained frames only
  bool restores = true;      // run FFRes on the triples
  bool supervised = true;    // add β·restoration loss against frozen targets
  bool augmented_labels = true;
};

inline VariantTraits traits(Variant v) {
  switch (v) {
    case Variant::baseline: return {false, false, false, true};
    case Variant::sllm: return {true, true, true, true};
    case Variant::sllm_no_supervision: return {true, true, false, true};
    case Variant::sllm_no_ffres: return {true, false, false, true};
    case Variant::sllm_no_augment: return {true, true, true, false};
  }
  return {};
}

struct RunConfig {
  EncoderConfig encoder;
  std::size_t frames = 16;  // T
  std::size_t filter = 2;   // r
  std::size_t restore_per_gap = 0;
  std::size_t ffres_layers = kDefaultFFResLayers;
  double beta = 1.0;
  Paradigm paradigm = Paradigm::matching;
  Variant variant = Variant::sllm;
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  // data
  std::size_t videos_per_class = 250;
  double train_fraction = 0.8;
  double noise_std = 0.02;
  std::uint64_t label_seed = 11;
  std::string caption_template = std::string(kDefaultTemplate);
  std::string manifest;  // augmented captions; empty = template only
  // paths / modes
  std::string corpus;
  std::string checkpoint;
  bool probe_cosine = false;
  std::size_t bench_videos = 32;
  std::size_t bench_warmup = 3;
  std::size_t bench_reps = 10;

  void validate() const {
    encoder.validate();
    if (frames < 2) throw ConfigError("frames must be >= 2");
    if (filter < 2 && variant != Variant::baseline) throw ConfigError("r must be >= 2");
    if (ffres_layers == 0) throw ConfigError("ffres_layers must be >= 1");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
    if (bench_warmup < 3 || bench_reps < 10) throw ConfigError("bench needs >= 3 warmup and >= 10 timed runs");
  }

  SynthSpec synth_spec() const {
    SynthSpec s;
    s.videos_per_class = videos_per_class;
    s.frames = frames;
    s.height = encoder.height;
    s.width = encoder.width;
    s.noise_std = noise_std;
    s.seed = seed;
    return s;
  }
};

// ---------------------------------------------------------------------------
// flat `key = value` config

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size() || v.front() == '-') {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

inline double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Applies one setting; unknown keys are errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>> setters = {
      {"height", [](RunConfig& c, auto& k, auto& v) { c.encoder.height = to_size(k, v); }},
      {"width", [](RunConfig& c, auto& k, auto& v) { c.encoder.width = to_size(k, v); }},
      {"patch", [](RunConfig& c, auto& k, auto& v) { c.encoder.patch = to_size(k, v); }},
      {"hidden", [](RunConfig& c, auto& k, auto& v) { c.encoder.hidden = to_size(k, v); }},
      {"encoder_layers", [](RunConfig& c, auto& k, auto& v) { c.encoder.layers = to_size(k, v); }},
      {"feature_dim", [](RunConfig& c, auto& k, auto& v) { c.encoder.out = to_size(k, v); }},
      {"heads", [](RunConfig& c, auto& k, auto& v) { c.encoder.heads = to_size(k, v); }},
      {"encoder_seed", [](RunConfig& c, auto& k, auto& v) { c.encoder.seed = to_size(k, v); }},
      {"frames", [](RunConfig& c, auto& k, auto& v) { c.frames = to_size(k, v); }},
      {"r", [](RunConfig& c, auto& k, auto& v) { c.filter = to_size(k, v); }},
      {"restore_per_gap", [](RunConfig& c, auto& k, auto& v) { c.restore_per_gap = to_size(k, v); }},
      {"ffres_layers", [](RunConfig& c, auto& k, auto& v) { c.ffres_layers = to_size(k, v); }},
      {"beta", [](RunConfig& c, auto& k, auto& v) { c.beta = to_real(k, v); }},
      {"paradigm", [](RunConfig& c, auto&, auto& v) { c.paradigm = parse_paradigm(v); }},
      {"variant", [](RunConfig& c, auto&, auto& v) { c.variant = parse_variant(v); }},
      {"lr", [](RunConfig& c, auto& k, auto& v) { c.lr = to_real(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_size(k, v); }},
      {"workers", [](RunConfig& c, auto& k, auto& v) { c.workers = to_size(k, v); }},
      {"videos_per_class", [](RunConfig& c, auto& k, auto& v) { c.videos_per_class = to_size(k, v); }},
      {"train_fraction", [](RunConfig& c, auto& k, auto& v) { c.train_fraction = to_real(k, v); }},
      {"noise_std", [](RunConfig& c, auto& k, auto& v) { c.noise_std = to_real(k, v); }},
      {"label_seed", [](RunConfig& c, auto& k, auto& v) { c.label_seed = to_size(k, v); }},
      {"caption_template", [](RunConfig& c, auto&, auto& v) { c.caption_template = v; }},
      {"manifest", [](RunConfig& c, auto&, auto& v) { c.manifest = v; }},
      {"corpus", [](RunConfig& c, auto&, auto& v) { c.corpus = v; }},
      {"checkpoint", [](RunConfig& c, auto&, auto& v) { c.checkpoint = v; }},
      {"probe_cosine", [](RunConfig& c, auto& k, auto& v) { c.probe_cosine = to_bool(k, v); }},
      {"bench_videos", [](RunConfig& c, auto& k, auto& v) { c.bench_videos = to_size(k, v); }},
      {"bench_warmup", [](RunConfig& c, auto& k, auto& v) { c.bench_warmup = to_size(k, v); }},
      {"bench_reps", [](RunConfig& c, auto& k, auto& v) { c.bench_reps = to_size(k, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(c, key, value);
}

inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  return parse_config(is, std::move(base));
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"height", c.encoder.height},
          {"width", c.encoder.width},
          {"patch", c.encoder.patch},
          {"hidden", c.encoder.hidden},
          {"encoder_layers", c.encoder.layers},
          {"feature_dim", c.encoder.out},
          {"heads", c.encoder.heads},
          {"encoder_seed", c.encoder.seed},
          {"frames", c.frames},
          {"r", c.filter},
          {"restore_per_gap", c.restore_per_gap},
          {"ffres_layers", c.ffres_layers},
          {"beta", c.beta},
          {"paradigm", to_string(c.paradigm)},
          {"variant", to_string(c.variant)},
          {"lr", c.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"workers", c.workers},
          {"videos_per_class", c.videos_per_class},
          {"train_fraction", c.train_fraction},
          {"noise_std", c.noise_std},
          {"label_seed", c.label_seed},
          {"caption_template", c.caption_template},
          {"manifest", c.manifest}};
}

// ---------------------------------------------------------------------------
// frame features

/// Lazily encoded per-frame features of one corpus. Counts real encoder calls.
class FeatureBank {
 public:
  FeatureBank(const FrozenWeights& weights, const Corpus& corpus)
      : weights_(&weights), corpus_(&corpus), cache_(corpus.videos.size()) {
    for (auto& v : cache_) v.resize(corpus.frames);
  }

  /// Feature of 1-based frame `frame` of video `video`.
  const FeatureVec& get(std::size_t video, std::size_t frame) {
    auto& slot = cache_.at(video).at(frame - 1);
    if (!slot) {
      slot = encode(*weights_, corpus_->videos[video].frames[frame - 1]);
      ++calls_;
    }
    return *slot;
  }

  /// Read-only access; the frame must already be encoded.
  const FeatureVec& cached(std::size_t video, std::size_t frame) const {
    const auto& slot = cache_.at(video).at(frame - 1);
    if (!slot) throw ConsistencyError("feature bank: frame not encoded");
    return *slot;
  }

  std::size_t encoder_calls() const { return calls_; }
  const Corpus& corpus() const { return *corpus_; }
  const FrozenWeights& weights() const { return *weights_; }

 private:
  const FrozenWeights* weights_;
  const Corpus* corpus_;
  std::vector<std::vector<std::optional<FeatureVec>>> cache_;
  std::size_t calls_ = 0;
};

/// Frames a variant encodes at inference (1-based).
inline std::vector<std::size_t> inference_frames(const RunConfig& cfg, const PartitionPlan& plan) {
  if (!traits(cfg.variant).drops_frames) {
    std::vector<std::size_t> all(cfg.frames);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i + 1;
    return all;
  }
  return plan.retained;
}

// ---------------------------------------------------------------------------
// model

struct Model {
  FFResParams ffres;
  HeadParams heads;
  LabelSet labels;
  PartitionPlan plan;
};

inline CaptionProvider caption_provider(const RunConfig& cfg) {
  if (!traits(cfg.variant).augmented_labels || cfg.manifest.empty()) {
    return CaptionProvider::from_template(cfg.caption_template);
  }
  return CaptionProvider::from_file(cfg.manifest, cfg.caption_template);
}

inline Model init_model(const RunConfig& cfg, const std::vector<std::string>& label_names) {
  Model m;
  m.ffres = init_params(cfg.encoder.out, cfg.ffres_layers, cfg.seed ^ 0xFF5EEDULL);
  m.heads = init_heads(cfg.encoder.out, label_names.size(), cfg.seed ^ 0x4EADULL);
  m.labels = make_label_set(label_names, caption_provider(cfg), cfg.encoder.out, cfg.label_seed);
  m.plan = make_plan(cfg.frames, std::max<std::size_t>(cfg.filter, 2), cfg.restore_per_gap);
  return m;
}

/// The interleaved feature sequence for one video plus what backward needs.
struct SequenceForward {
  std::vector<FeatureVec> sequence;
  RestorationBatch batch;
  RestorationForward restored;
  std::vector<std::size_t> restored_slots;  // position in `sequence` of each triple
};

/// Builds the head input for one video. `feature` returns the frozen feature
/// of a 1-based frame; targets are attached when `with_targets` is set.
template <class FeatureFn>
SequenceForward build_sequence(const RunConfig& cfg, const Model& model, FeatureFn&& feature, bool with_targets) {
  SequenceForward out;
  const VariantTraits tr = traits(cfg.variant);
  if (!tr.drops_frames) {
    for (std::size_t j = 1; j <= cfg.frames; ++j) out.sequence.push_back(feature(j));
    return out;
  }
  const PartitionPlan& plan = model.plan;
  std::vector<FeatureVec> retained;
  retained.reserve(plan.retained.size());
  for (std::size_t j : plan.retained) retained.push_back(feature(j));
  if (!tr.restores) {
    out.sequence = std::move(retained);
    return out;
  }
  std::map<std::size_t, std::size_t> pos_of;
  for (std::size_t i = 0; i < plan.retained.size(); ++i) pos_of[plan.retained[i]] = i;
  for (const auto& t : plan.triples) {
    RestorationRecord rec;
    rec.left = retained[pos_of.at(t.left)];
    rec.right = retained[pos_of.at(t.right)];
    rec.lambda = t.lambda;
    if (with_targets) rec.target = feature(t.middle);
    out.batch.items.push_back(std::move(rec));
  }
  out.restored = forward(model.ffres, out.batch);
  std::map<std::size_t, FeatureVec> restored_map;
  for (std::size_t i = 0; i < plan.triples.size(); ++i) restored_map[plan.triples[i].middle] = out.restored.predicted[i];
  out.sequence = interleave(plan, retained, restored_map);
  const auto order = interleave_indices(plan);
  for (const auto& t : plan.triples) {
    out.restored_slots.push_back(
        static_cast<std::size_t>(std::find(order.begin(), order.end(), t.middle) - order.begin()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradients

struct ModelGrads {
  FFResGrads ffres;
  HeadGrads heads;
  double head_loss = 0.0;
  std::size_t restoration_terms = 0;

  static ModelGrads zeros_like(const Model& m) {
    ModelGrads g;
    g.ffres.value_proj.assign(m.ffres.num_layers(), Matrix(m.ffres.dim(), m.ffres.dim()));
    g.heads = HeadGrads::zeros_like(m.heads);
    return g;
  }
  void accumulate(const ModelGrads& o) {
    for (std::size_t l = 0; l < ffres.value_proj.size(); ++l) add_inplace(ffres.value_proj[l], o.ffres.value_proj[l]);
    ffres.restoration_loss += o.ffres.restoration_loss;
    heads.accumulate(o.heads);
    head_loss += o.head_loss;
    restoration_terms += o.restoration_terms;
  }
  void scale_by(double s) {
    for (auto& m : ffres.value_proj)
      for (double& v : m.data()) v *= s;
    heads.scale_by(s);
  }
};

/// Loss and gradients of one labelled video: head loss + β·Σ restoration loss.
template <class FeatureFn>
ModelGrads video_gradients(const RunConfig& cfg, const Model& model, FeatureFn&& feature, std::size_t label) {
  const VariantTraits tr = traits(cfg.variant);
  const bool supervised = tr.supervised && tr.restores;
  SequenceForward seq = build_sequence(cfg, model, feature, supervised);
  ModelGrads g = ModelGrads::zeros_like(model);
  HeadResult head = head_forward_backward(seq.sequence, label, model.labels, model.heads, cfg.paradigm);
  g.head_loss = head.loss;
  g.heads = std::move(head.grads);
  if (!seq.batch.items.empty()) {
    std::vector<FeatureVec> upstream;
    upstream.reserve(seq.restored_slots.size());
    for (std::size_t slot : seq.restored_slots) upstream.push_back(head.feature_grads[slot]);
    g.ffres = backward(model.ffres, seq.batch, seq.restored, upstream, supervised ? cfg.beta : 0.0);
    if (supervised) g.restoration_terms = seq.batch.items.size();
  }
  return g;
}

inline void apply_update(Model& m, const ModelGrads& g, AdamState& state, double lr) {
  std::vector<Matrix*> ps;
  std::vector<const Matrix*> gs;
  for (std::size_t l = 0; l < m.ffres.num_layers(); ++l) {
    ps.push_back(&m.ffres.value_proj[l]);
    gs.push_back(&g.ffres.value_proj[l]);
  }
  const auto hp = head_matrices(m.heads);
  const auto hq = g.heads.all();
  ps.insert(ps.end(), hp.begin(), hp.end());
  gs.insert(gs.end(), hq.begin(), hq.end());
  AdamConfig ac;
  ac.lr = lr;
  adam_step(ps, gs, state, ac);
  ++m.ffres.version;
}

// ---------------------------------------------------------------------------
// reports

struct EpochStats {
  double head_loss = 0.0;
  double restoration_loss = 0.0;  // mean per restored frame; 0 when unsupervised
};

struct RunReport {
  RunConfig config;
  std::size_t test_videos = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> mean_restored_cosine;
  std::vector<EpochStats> epochs;
  double encoder_calls_per_video = 0.0;
  std::size_t plan_encoder_calls_per_video = 0;
  std::size_t train_encoder_calls = 0;
  CostReport cost;
  // wall clock
  double train_seconds = 0.0;
  double infer_seconds = 0.0;
  double train_throughput = 0.0;  // videos/s (features + updates, all epochs)
  double infer_throughput = 0.0;  // videos/s
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = to_json(r.config);
  j["seed"] = r.config.seed;
  j["test_videos"] = r.test_videos;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  j["mean_restored_cosine"] = r.mean_restored_cosine ? nlohmann::json(*r.mean_restored_cosine) : nlohmann::json();
  auto& ep = j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs) ep.push_back({{"head_loss", e.head_loss}, {"restoration_loss", e.restoration_loss}});
  j["encoder_calls_per_video"] = r.encoder_calls_per_video;
  j["plan_encoder_calls_per_video"] = r.plan_encoder_calls_per_video;
  j["train_encoder_calls"] = r.train_encoder_calls;
  j["cost"] = to_json(r.cost);
  j["timing"] = {{"train_seconds", r.train_seconds},
                 {"infer_seconds", r.infer_seconds},
                 {"train_throughput_videos_per_s", r.train_throughput},
                 {"infer_throughput_videos_per_s", r.infer_throughput}};
  return j;
}

inline std::string report_csv_header() {
  return "variant,paradigm,seed,T,r,top1,top5,mean_restored_cosine,encoder_calls_per_video,"
         "train_videos_per_s,infer_videos_per_s,gflops_per_video";
}

inline std::string report_csv_row(const RunReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << to_string(r.config.variant) << ',' << to_string(r.config.paradigm) << ',' << r.config.seed << ','
     << r.config.frames << ',' << r.config.filter << ',' << r.top1 << ',' << r.top5 << ','
     << (r.mean_restored_cosine ? std::to_string(*r.mean_restored_cosine) : std::string()) << ','
     << r.encoder_calls_per_video << ',' << r.train_throughput << ',' << r.infer_throughput << ','
     << to_gflops(r.cost.total());
  return os.str();
}

/// Relative changes of `candidate` against `reference`:
///   ΔACC = top1_c − top1_r,   ΔEfficiency = (V_c − V_r) / V_r.
struct Deltas {
  double delta_top1 = 0.0;
  double delta_top5 = 0.0;
  double delta_infer_efficiency = 0.0;
  double delta_train_efficiency = 0.0;
};

inline Deltas compute_deltas(const RunReport& candidate, const RunReport& reference) {
  auto rel = [](double c, double r) { return r > 0.0 ? (c - r) / r : 0.0; };
  return {candidate.top1 - reference.top1, candidate.top5 - reference.top5,
          rel(candidate.infer_throughput, reference.infer_throughput),
          rel(candidate.train_throughput, reference.train_throughput)};
}

inline nlohmann::json to_json(const Deltas& d) {
  return {{"delta_top1", d.delta_top1},
          {"delta_top5", d.delta_top5},
          {"delta_infer_efficiency", d.delta_infer_efficiency},
          {"delta_train_efficiency", d.delta_train_efficiency}};
}

inline CostReport cost_for(const RunConfig& cfg, bool training) {
  PipelineMode mode = PipelineMode::baseline;
  if (cfg.variant != Variant::baseline) mode = training ? PipelineMode::sllm_train : PipelineMode::sllm_infer;
  CostReport rep = pipeline_cost(cfg.encoder, cfg.frames, std::max<std::size_t>(cfg.filter, 2), mode,
                                 cfg.ffres_layers, cfg.restore_per_gap);
  if (cfg.variant == Variant::sllm_no_ffres) {
    // plain frame drop: no restoration, no supervision
    std::erase_if(rep.stages, [](const auto& s) { return s.first == "ffres" || s.first == "supervision"; });
    rep.restored_frames = 0;
    rep.supervision_raw = rep.supervision_train_equiv = 0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// evaluation

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> mean_restored_cosine;
  std::size_t encoder_calls = 0;  // inference path only
  std::size_t probe_calls = 0;    // extra encodes for the cosine probe
  double seconds = 0.0;
};

/// Inference over `corpus` with real (counted) frame encoding. Discarded
/// frames are encoded only for the cosine probe, outside the timed region.
inline EvalResult evaluate(const RunConfig& cfg, const Model& model, const FrozenWeights& weights,
                           const Corpus& corpus, bool probe_cosine) {
  using clock = std::chrono::steady_clock;
  EvalResult res;
  if (corpus.videos.empty()) return res;
  FeatureBank bank(weights, corpus);
  std::size_t hit1 = 0;
  std::size_t hit5 = 0;
  double cos_sum = 0.0;
  std::size_t cos_n = 0;
  double seconds = 0.0;
  for (std::size_t v = 0; v < corpus.videos.size(); ++v) {
    const auto t0 = clock::now();
    const SequenceForward seq = build_sequence(
        cfg, model, [&](std::size_t j) -> const FeatureVec& { return bank.get(v, j); }, false);
    const FeatureVec vid = video_feature(seq.sequence, model.heads);
    const FeatureVec scores = cfg.paradigm == Paradigm::matching ? match_scores(vid, model.labels, model.heads)
                                                                 : class_logits(vid, model.heads);
    seconds += std::chrono::duration<double>(clock::now() - t0).count();
    const std::size_t label = corpus.videos[v].label;
    hit1 += argmax(scores) == label ? 1 : 0;
    hit5 += in_top_k(scores, label, 5) ? 1 : 0;
    if (probe_cosine) {
      const std::size_t before = bank.encoder_calls();
      for (std::size_t i = 0; i < seq.restored.predicted.size(); ++i) {
        cos_sum += cosine(seq.restored.predicted[i], bank.get(v, model.plan.triples[i].middle));
        ++cos_n;
      }
      res.probe_calls += bank.encoder_calls() - before;
    }
  }
  res.encoder_calls = bank.encoder_calls() - res.probe_calls;
  const double n = static_cast<double>(corpus.videos.size());
  res.top1 = static_cast<double>(hit1) / n;
  res.top5 = static_cast<double>(hit5) / n;
  if (probe_cosine && cos_n > 0) res.mean_restored_cosine = cos_sum / static_cast<double>(cos_n);
  res.seconds = seconds;
  return res;
}

// ---------------------------------------------------------------------------
// training

struct TrainResult {
  Model model;
  std::vector<EpochStats> epochs;
  std::size_t encoder_calls = 0;
  double seconds = 0.0;
};

/// Trains FFRes + heads over `train` with the frozen encoder. Frame features
/// come from `bank` (which must wrap `train`); all frames the variant needs
/// are encoded once up front since the encoder never changes.
inline TrainResult train_model(const RunConfig& cfg, FeatureBank& bank) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const Corpus& train = bank.corpus();
  if (train.videos.empty()) throw ConfigError("train: empty training split");
  if (train.frames != cfg.frames) throw ConfigError("train: corpus T differs from config T");
  const auto t0 = clock::now();
  const std::size_t calls_before = bank.encoder_calls();
  TrainResult res;
  res.model = init_model(cfg, train.label_names);
  Model& model = res.model;
  const VariantTraits tr = traits(cfg.variant);

  std::vector<std::size_t> needed = inference_frames(cfg, model.plan);
  if (tr.restores && tr.supervised) {
    for (const auto& t : model.plan.triples) needed.push_back(t.middle);
  }
  for (std::size_t v = 0; v < train.videos.size(); ++v)
    for (std::size_t j : needed) bank.get(v, j);
  res.encoder_calls = bank.encoder_calls() - calls_before;

  AdamState adam;
  const std::size_t n = train.videos.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng rng(cfg.seed, 0xE9000000ULL + epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    EpochStats stats;
    std::size_t restoration_terms = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::size_t shards = std::min(cfg.workers, end - start);
      std::vector<ModelGrads> partial(shards, ModelGrads::zeros_like(model));
      auto run_shard = [&](std::size_t s) {
        const std::size_t len = end - start;
        const std::size_t a = start + s * len / shards;
        const std::size_t b = start + (s + 1) * len / shards;
        for (std::size_t i = a; i < b; ++i) {
          const std::size_t v = order[i];
          partial[s].accumulate(video_gradients(
              cfg, model, [&](std::size_t j) -> const FeatureVec& { return bank.cached(v, j); },
              train.videos[v].label));
        }
      };
      if (shards == 1) {
        run_shard(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t s = 0; s < shards; ++s) pool.emplace_back(run_shard, s);
        for (auto& t : pool) t.join();
      }
      ModelGrads total = ModelGrads::zeros_like(model);
      for (const auto& p : partial) total.accumulate(p);
      stats.head_loss += total.head_loss;
      stats.restoration_loss += total.ffres.restoration_loss;
      restoration_terms += total.restoration_terms;
      total.scale_by(1.0 / static_cast<double>(end - start));
      apply_update(model, total, adam, cfg.lr);
    }
    stats.head_loss /= static_cast<double>(n);
    stats.restoration_loss = restoration_terms ? stats.restoration_loss / static_cast<double>(restoration_terms) : 0.0;
    res.epochs.push_back(stats);
  }
  res.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// checkpoints: <base>.ffres (SLFR) and <base>.heads (SLHD)

inline void save_heads(const HeadParams& h, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write("SLHD", 4);
  const auto e = static_cast<std::uint32_t>(h.w_vid.rows());
  const auto m = static_cast<std::uint32_t>(h.w_cls.cols());
  os.write(reinterpret_cast<const char*>(&e), 4);
  os.write(reinterpret_cast<const char*>(&m), 4);
  os.write(reinterpret_cast<const char*>(&h.logit_scale), 8);
  for (const Matrix* mat : {&h.w_vid, &h.w_motion_a, &h.w_motion_b, &h.w_txt, &h.w_cls, &h.b_cls}) {
    os.write(reinterpret_cast<const char*>(mat->data().data()), static_cast<std::streamsize>(mat->size() * 8));
  }
  if (!os) throw FormatError("write failed: " + path);
}

inline HeadParams load_heads(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  std::uint32_t e = 0;
  std::uint32_t m = 0;
  HeadParams h;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&e), 4);
  is.read(reinterpret_cast<char*>(&m), 4);
  is.read(reinterpret_cast<char*>(&h.logit_scale), 8);
  if (!is || std::string(magic, 4) != "SLHD") throw FormatError(path + ": not a head checkpoint");
  if (e == 0 || m < 2 || e > 65536 || m > 65536) throw FormatError(path + ": implausible head header");
  h.w_vid = Matrix(e, e);
  h.w_motion_a = Matrix(e, e);
  h.w_motion_b = Matrix(e, e);
  h.w_txt = Matrix(e, e);
  h.w_cls = Matrix(e, m);
  h.b_cls = Matrix(1, m);
  for (Matrix* mat : head_matrices(h)) {
    is.read(reinterpret_cast<char*>(mat->data().data()), static_cast<std::streamsize>(mat->size() * 8));
  }
  if (!is) throw FormatError(path + ": truncated head checkpoint");
  return h;
}

inline void save_model(const Model& m, const std::string& base) {
  save_ffres(m.ffres, base + ".ffres");
  save_heads(m.heads, base + ".heads");
}

/// Loads a checkpoint and checks it against the config and label set.
inline Model load_model(const RunConfig& cfg, const std::string& base, const std::vector<std::string>& label_names) {
  Model m = init_model(cfg, label_names);
  FFResParams f = load_ffres(base + ".ffres");
  HeadParams h = load_heads(base + ".heads");
  if (f.dim() != cfg.encoder.out || f.num_layers() != cfg.ffres_layers) {
    throw ConfigError("checkpoint FFRes shape (E=" + std::to_string(f.dim()) + ", L=" + std::to_string(f.num_layers()) +
                      ") does not match config");
  }
  if (h.w_vid.rows() != cfg.encoder.out || h.w_cls.cols() != label_names.size()) {
    throw ConfigError("checkpoint head shape does not match config/labels");
  }
  m.ffres = std::move(f);
  m.heads = std::move(h);
  return m;
}

// ---------------------------------------------------------------------------
// top-level runs

struct Splits {
  Corpus train;
  Corpus test;
};

inline Splits split_corpus(const RunConfig& cfg, const Corpus& corpus) {
  auto [tr, te] = split(corpus, cfg.train_fraction, cfg.seed);
  return {std::move(tr), std::move(te)};
}

inline RunReport make_report(const RunConfig& cfg, const TrainResult& tr, const EvalResult& ev,
                             std::size_t train_videos, std::size_t test_videos) {
  RunReport rep;
  rep.config = cfg;
  rep.test_videos = test_videos;
  rep.top1 = ev.top1;
  rep.top5 = ev.top5;
  rep.mean_restored_cosine = ev.mean_restored_cosine;
  rep.epochs = tr.epochs;
  rep.train_encoder_calls = tr.encoder_calls;
  rep.encoder_calls_per_video =
      test_videos ? static_cast<double>(ev.encoder_calls) / static_cast<double>(test_videos) : 0.0;
  const Model& m = tr.model;
  rep.plan_encoder_calls_per_video = inference_frames(cfg, m.plan).size();
  rep.cost = cost_for(cfg, false);
  rep.train_seconds = tr.seconds;
  rep.infer_seconds = ev.seconds;
  rep.train_throughput = tr.seconds > 0 ? static_cast<double>(train_videos * std::max<std::size_t>(cfg.epochs, 1)) / tr.seconds : 0.0;
  rep.infer_throughput = ev.seconds > 0 ? static_cast<double>(test_videos) / ev.seconds : 0.0;
  return rep;
}

/// Train on the train split, evaluate on the test split.
inline std::pair<RunReport, Model> run_train(const RunConfig& cfg, const Corpus& corpus,
                                             FeatureBank* shared_train_bank = nullptr) {
  cfg.validate();
  const FrozenWeights weights = build_encoder(cfg.encoder);
  const Splits s = split_corpus(cfg, corpus);
  TrainResult tr;
  if (shared_train_bank) {
    tr = train_model(cfg, *shared_train_bank);
  } else {
    FeatureBank bank(weights, s.train);
    tr = train_model(cfg, bank);
  }
  const EvalResult ev = evaluate(cfg, tr.model, weights, s.test, cfg.probe_cosine);
  RunReport rep = make_report(cfg, tr, ev, s.train.videos.size(), s.test.videos.size());
  rep.cost = cost_for(cfg, true);
  return {std::move(rep), std::move(tr.model)};
}

inline RunReport run_eval(const RunConfig& cfg, const Corpus& corpus, const Model& model) {
  cfg.validate();
  const FrozenWeights weights = build_encoder(cfg.encoder);
  const Splits s = split_corpus(cfg, corpus);
  const EvalResult ev = evaluate(cfg, model, weights, s.test, cfg.probe_cosine);
  TrainResult empty;
  empty.model = model;
  return make_report(cfg, empty, ev, 0, s.test.videos.size());
}

struct BenchResult {
  double median_seconds = 0.0;
  double videos_per_second = 0.0;
  std::vector<double> samples;
  std::size_t videos = 0;
};

/// Median wall-clock of inference over the first `bench_videos` test videos.
inline BenchResult run_bench(const RunConfig& cfg, const Corpus& corpus, const Model& model) {
  cfg.validate();
  const FrozenWeights weights = build_encoder(cfg.encoder);
  Splits s = split_corpus(cfg, corpus);
  Corpus subset = s.test;
  if (subset.videos.size() > cfg.bench_videos) subset.videos.resize(cfg.bench_videos);
  BenchResult br;
  br.videos = subset.videos.size();
  for (std::size_t i = 0; i < cfg.bench_warmup; ++i) evaluate(cfg, model, weights, subset, false);
  for (std::size_t i = 0; i < cfg.bench_reps; ++i) {
    br.samples.push_back(evaluate(cfg, model, weights, subset, false).seconds);
  }
  std::vector<double> sorted = br.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  br.median_seconds = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  br.videos_per_second = br.median_seconds > 0 ? static_cast<double>(br.videos) / br.median_seconds : 0.0;
  return br;
}

}  // namespace sllm
