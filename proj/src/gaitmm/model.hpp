#pragma once

#include <span>
#include <vector>

#include "gaitmm/params.hpp"
#include "gaitmm/tensor.hpp"

namespace gaitmm {

// Shapes observed while running one clip through the network.
struct ForwardTrace {
  std::vector<Shape4> block_outputs;
  int post_msma_frames = -1;  // -1 when the MSMA stage is ablated
};

// Activations kept for the backward pass of one clip.
struct ForwardCache {
  std::vector<FeatureMap> block_inputs;
  std::vector<FeatureMap> block_preacts;
  FeatureMap msma_input;
  bool msma_applied = false;
  FeatureMap final_activation;
  FeatureMap pooled;
  StripMatrix gem_out;
  StripMatrix embedding;
};

struct ItemOutput {
  StripMatrix embedding;  // num_strips x embed_dim
  StripMatrix logits;     // num_strips x num_classes
};

// FFSL blocks -> MSMA -> remaining FFSL blocks -> TP -> GeM -> SeFC, plus per-strip classifiers.
// `clip` is input_channels x frames x input_height x input_width.
ItemOutput forward_item(const ModelParams& params, const FeatureMap& clip, ForwardCache* cache = nullptr,
                        ForwardTrace* trace = nullptr);

// Accumulates dL/dparams into `grads` (same layout as params.values()).
void backward_item(const ModelParams& params, const ForwardCache& cache, const StripMatrix& grad_embedding,
                   const StripMatrix& grad_logits, std::span<double> grads);

struct BatchOutput {
  std::vector<StripMatrix> embeddings;
  std::vector<StripMatrix> logits;
  ForwardTrace trace;  // of the first item
};

BatchOutput gaitmm_forward(std::span<const FeatureMap> batch, const ModelParams& params);

}  // namespace gaitmm
