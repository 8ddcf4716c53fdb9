// SPDX-License-Identifier: Apache-2.0
#pragma once

// Caption providers for action names and the inter-label similarity report.
// Captions come from offline sources only: a prompt template or a
// pre-generated manifest of explanatory captions.

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"
#include "sllm/recognition.hpp"

namespace sllm {

inline constexpr std::string_view kDefaultTemplate = "a video of {}";

class CaptionProvider {
 public:
  enum class Kind { template_, file };

  static CaptionProvider from_template(std::string tmpl = std::string(kDefaultTemplate)) {
    CaptionProvider p;
    p.kind_ = Kind::template_;
    p.template_ = std::move(tmpl);
    p.validate_template();
    return p;
  }

  static CaptionProvider from_entries(const std::vector<ManifestEntry>& entries,
                                      std::string fallback = std::string(kDefaultTemplate)) {
    CaptionProvider p;
    p.kind_ = Kind::file;
    p.template_ = std::move(fallback);
    p.validate_template();
    for (const auto& e : entries)
      if (!e.caption.empty()) p.captions_[e.name] = e.caption;
    return p;
  }

  static CaptionProvider from_file(const std::string& path, std::string fallback = std::string(kDefaultTemplate)) {
    return from_entries(read_manifest(path), std::move(fallback));
  }

  Kind kind() const { return kind_; }
  const std::string& template_string() const { return template_; }

  std::string caption(std::string_view action_name) const {
    if (action_name.empty()) throw ConfigError("caption: empty action name");
    if (kind_ == Kind::file) {
      if (auto it = captions_.find(std::string(action_name)); it != captions_.end()) return it->second;
    }
    std::string out = template_;
    out.replace(out.find("{}"), 2, action_name);
    return out;
  }

 private:
  void validate_template() const {
    const auto first = template_.find("{}");
    if (first == std::string::npos || template_.find("{}", first + 2) != std::string::npos) {
      throw ConfigError("caption template must contain exactly one {} slot: '" + template_ + "'");
    }
  }

  Kind kind_ = Kind::template_;
  std::string template_;
  std::map<std::string, std::string, std::less<>> captions_;
};

inline std::string caption(const CaptionProvider& provider, std::string_view action_name) {
  return provider.caption(action_name);
}

inline LabelSet make_label_set(const std::vector<std::string>& names, const CaptionProvider& provider, std::size_t dim,
                               std::uint64_t seed) {
  std::vector<std::string> caps;
  caps.reserve(names.size());
  for (const auto& n : names) caps.push_back(provider.caption(n));
  return make_label_set(names, std::move(caps), dim, seed);
}

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;
};

struct LabelSimilarityReport {
  std::vector<std::string> names;
  Matrix similarity;                              // M x M cosine
  std::vector<std::vector<Neighbor>> neighbors;  // top-k per label, self excluded
  double mean_off_diagonal = 0.0;
};

inline LabelSimilarityReport label_similarity_report(const LabelSet& labels, std::size_t top_k = 10) {
  const std::size_t m = labels.size();
  if (m < 2) throw ConfigError("label_similarity_report: need at least 2 labels");
  LabelSimilarityReport rep;
  rep.names = labels.names;
  rep.similarity = Matrix(m, m);
  std::vector<FeatureVec> unit(m);
  for (std::size_t i = 0; i < m; ++i) unit[i] = l2_normalize(labels.embeddings.row(i));
  double off = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    rep.similarity(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double c = std::clamp(dot(unit[i], unit[j]), -1.0, 1.0);
      rep.similarity(i, j) = c;
      rep.similarity(j, i) = c;
      off += 2.0 * c;
    }
  }
  rep.mean_off_diagonal = off / static_cast<double>(m * (m - 1));
  const std::size_t k = std::min(top_k, m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<Neighbor> row;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) row.push_back({j, rep.similarity(i, j)});
    std::stable_sort(row.begin(), row.end(),
                     [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; });
    row.resize(k);
    rep.neighbors.push_back(std::move(row));
  }
  return rep;
}

inline nlohmann::json to_json(const LabelSimilarityReport& rep) {
  nlohmann::json j;
  j["labels"] = rep.names;
  j["mean_off_diagonal"] = rep.mean_off_diagonal;
  auto& mat = j["similarity"] = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.similarity.rows(); ++i) mat.push_back(rep.similarity.row_vec(i));
  auto& nb = j["neighbors"] = nlohmann::json::object();
  for (std::size_t i = 0; i < rep.names.size(); ++i) {
    auto& arr = nb[rep.names[i]] = nlohmann::json::array();
    for (const auto& n : rep.neighbors[i]) arr.push_back({{"label", rep.names[n.index]}, {"cosine", n.similarity}});
  }
  return j;
}

/// Long-form CSV: one row per ordered label pair.
inline std::string to_csv(const LabelSimilarityReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "label_a,label_b,cosine\n";
  for (std::size_t i = 0; i < rep.names.size(); ++i)
    for (std::size_t j = 0; j < rep.names.size(); ++j)
      os << '"' << rep.names[i] << "\",\"" << rep.names[j] << "\"," << rep.similarity(i, j) << '\n';
  return os.str();
}

}  // namespace sllm
