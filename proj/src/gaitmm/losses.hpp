#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gaitmm/tensor.hpp"

namespace gaitmm {

// P subjects x K sequences; embeddings[i] is num_strips x embed_dim.
struct LabeledEmbeddingBatch {
  std::vector<StripMatrix> embeddings;
  std::vector<int> labels;
};

struct TripletResult {
  double loss = 0.0;
  double nonzero_fraction = 0.0;
  std::size_t triplets = 0;        // valid (a, p, n) triplets across all strips
  std::vector<StripMatrix> grad;   // filled when requested
};

// Batch-all triplet loss. Per strip: every (a, p, n) with label(a) = label(p) != label(n), a != p,
// contributes max(0, d(a,p) - d(a,n) + margin) with Euclidean d. The strip loss is the mean over
// triplets with nonzero loss; strips are averaged.
TripletResult triplet_loss(std::span<const StripMatrix> embeddings, std::span<const int> labels, double margin,
                           bool want_grad = false);
inline TripletResult triplet_loss(const LabeledEmbeddingBatch& batch, double margin, bool want_grad = false) {
  return triplet_loss(batch.embeddings, batch.labels, margin, want_grad);
}

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<StripMatrix> grad;
};

// Softmax cross-entropy per strip, averaged over strips and items.
CrossEntropyResult cross_entropy_loss(std::span<const StripMatrix> logits, std::span<const int> labels,
                                      bool want_grad = false);

struct LossReport {
  double triplet = 0.0;
  double cross_entropy = 0.0;
  double total = 0.0;
  double nonzero_triplet_fraction = 0.0;
};

struct LossWeights {
  double triplet = 1.0;
  double cross_entropy = 1.0;
};

struct CombinedLoss {
  LossReport report;
  std::vector<StripMatrix> grad_embeddings;
  std::vector<StripMatrix> grad_logits;
};

CombinedLoss combined_loss(std::span<const StripMatrix> embeddings, std::span<const StripMatrix> logits,
                           std::span<const int> labels, double margin, const LossWeights& weights = {},
                           bool want_grad = false);

}  // namespace gaitmm
