#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitmm/dataset.hpp"
#include "gaitmm/params.hpp"
#include "gaitmm/tensor.hpp"

namespace gaitmm {

struct GaitEmbedding {
  StripMatrix strips;  // num_strips x embed_dim
  int subject_id = 0;
  int view_deg = 0;
  Condition condition = Condition::kNM;
  int seq_index = 0;
};

// Runs the whole sequence (truncated to a multiple of 3 frames) as one clip. Returns nothing and
// fills *warning when fewer than 3 frames remain.
std::optional<GaitEmbedding> extract_embedding(const SilhouetteSequence& seq, const ModelParams& params,
                                               std::string* warning = nullptr);

struct EmbeddingSet {
  std::vector<GaitEmbedding> items;
  std::vector<std::string> warnings;
};

EmbeddingSet extract_embeddings(const Dataset& data, std::span<const std::size_t> indices,
                                const ModelParams& params);

// Mean over strips of the per-strip Euclidean distance.
double pairwise_distance(const StripMatrix& a, const StripMatrix& b);
inline double pairwise_distance(const GaitEmbedding& a, const GaitEmbedding& b) {
  return pairwise_distance(a.strips, b.strips);
}

struct ConditionReport {
  Condition condition = Condition::kNM;
  std::vector<int> views;                  // probe rows and gallery columns
  std::vector<std::vector<double>> cells;  // [probe][gallery]; NaN on the diagonal and where no probe exists
  std::vector<double> row_means;
  double mean = 0.0;
};

struct RankOneReport {
  std::vector<ConditionReport> conditions;
  double overall_mean = 0.0;

  // Means over off-diagonal cells only.
  void recompute_means();
  const ConditionReport* find(Condition c) const;
};

// For every probe view v and gallery view w != v, a probe is correct when its nearest gallery
// embedding of view w belongs to the same subject. Equal distances resolve to the gallery entry
// with the smallest (subject, condition, sequence) key, independent of input order.
RankOneReport rank1_matrix(std::span<const GaitEmbedding> gallery, std::span<const GaitEmbedding> probes,
                           const SplitProtocol& protocol);

// rank1_<COND>.csv per condition (header probe_view,<views...>,mean) and summary.csv (condition,mean).
void emit_report(const RankOneReport& report, const std::string& dir);

void save_embeddings(const std::string& path, std::span<const GaitEmbedding> embeddings);
std::vector<GaitEmbedding> load_embeddings(const std::string& path);

struct Evaluation {
  RankOneReport report;
  EmbeddingSet gallery;
  EmbeddingSet probes;
};

// Gallery and probe extraction for the dataset's protocol followed by rank-1 scoring.
Evaluation evaluate(const Dataset& data, const ModelParams& params);

}  // namespace gaitmm
