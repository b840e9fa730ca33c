#pragma once

#include <span>
#include <variant>
#include <vector>

#include "gaitmm/conv3d.hpp"
#include "gaitmm/tensor.hpp"

namespace gaitmm {

// ---------------------------------------------------------------------------
// Full-body / part-level motion extractors
// ---------------------------------------------------------------------------

using PartFilter = std::variant<Conv3dWeights, DepthwiseSeparable3dWeights>;
using PartFilterGrads = std::variant<Conv3dGrads, DepthwiseSeparable3dGrads>;

// One independent filter per horizontal body part, top to bottom.
struct PartFilterBank {
  std::vector<PartFilter> banks;
  int k_parts() const { return static_cast<int>(banks.size()); }
};

struct PartFilterBankGrads {
  std::vector<PartFilterGrads> banks;
};

// Shape-preserving 3x3x3 convolution over the whole body.
FeatureMap bme_forward(const FeatureMap& x, const Conv3dWeights& w);

// Splits the height axis into k equal slabs, convolves slab j with banks[j] only (each slab is zero
// padded on its own) and stacks the results back top to bottom.
FeatureMap pme_forward(const FeatureMap& x, const PartFilterBank& bank);
FeatureMap pme_backward(const FeatureMap& x, const PartFilterBank& bank, const FeatureMap& grad_out,
                        const PartFilterBankGrads& grads, bool want_input_grad = true);

FeatureMap leaky_relu(const FeatureMap& z, double slope);
// grad *= leaky'(z), in place.
void leaky_relu_backward_inplace(const FeatureMap& z, double slope, FeatureMap& grad);

// leaky(bme(x) + pme(x)); with use_pme = false only the body path is used.
FeatureMap ffsl_forward(const FeatureMap& x, const Conv3dWeights& w, const PartFilterBank& bank, bool use_pme,
                        double leaky_slope = 0.01);

// ---------------------------------------------------------------------------
// Temporal compression
// ---------------------------------------------------------------------------

inline constexpr int kLmaWindow = 3;

struct LmaParams {
  double p1 = 0.5;  // weight on the window max
  double p2 = 0.5;  // weight on the window mean
};

struct LmaGrads {
  double p1 = 0.0;
  double p2 = 0.0;
};

// Non-overlapping windows of 3 frames: out[t] = p1 * max(x[3t..3t+2]) + p2 * mean(x[3t..3t+2]).
FeatureMap lma_forward(const FeatureMap& x, const LmaParams& p);
FeatureMap lma_backward(const FeatureMap& x, const LmaParams& p, const FeatureMap& grad_out, LmaGrads& g);

struct MsmaParams {
  LmaParams global_lma;
  std::vector<LmaParams> part_lmas;
  int l_parts() const { return static_cast<int>(part_lmas.size()); }
};

struct MsmaGrads {
  LmaGrads global_lma;
  std::vector<LmaGrads> part_lmas;
};

// Global LMA over the whole map plus per-slab LMAs over l horizontal parts, summed.
FeatureMap msma_forward(const FeatureMap& x, const MsmaParams& mp);
FeatureMap msma_backward(const FeatureMap& x, const MsmaParams& mp, const FeatureMap& grad_out, MsmaGrads& g);

// ---------------------------------------------------------------------------
// Head
// ---------------------------------------------------------------------------

// Max over frames; the result keeps a unit frame axis (C x 1 x H x W).
FeatureMap temporal_pool(const FeatureMap& x);
FeatureMap temporal_pool_backward(const FeatureMap& x, const FeatureMap& grad_out);

inline constexpr double kGemEpsilon = 1e-6;

// Power mean over horizontal bands: out(s, c) = mean(max(v, eps)^delta)^(1/delta).
// Input is C x 1 x H x W; output is num_strips x C.
StripMatrix gem_pool(const FeatureMap& pooled, double delta, int num_strips, double eps = kGemEpsilon);

struct GemBackward {
  FeatureMap grad_input;
  double grad_delta = 0.0;
};
GemBackward gem_backward(const FeatureMap& pooled, double delta, int num_strips, const StripMatrix& grad_out,
                         double eps = kGemEpsilon);

// Affine map in_dim -> out_dim, weight row-major [out][in].
template <class T>
struct LinearView {
  int out_dim = 0;
  int in_dim = 0;
  std::span<T> weight;
  std::span<T> bias;
};
using LinearWeights = LinearView<const double>;
using LinearGrads = LinearView<double>;

struct HeadParams {
  double gem_delta = 6.5;
  std::vector<LinearWeights> sefc_weights;        // channels -> embed_dim, one per strip
  std::vector<LinearWeights> classifier_weights;  // embed_dim -> num_classes, one per strip
};

// Row s of the result is maps[s] applied to row s of `in`.
StripMatrix strip_linear_forward(const StripMatrix& in, std::span<const LinearWeights> maps);
// Accumulates into grads; returns dL/d(in).
StripMatrix strip_linear_backward(const StripMatrix& in, std::span<const LinearWeights> maps,
                                  const StripMatrix& grad_out, std::span<const LinearGrads> grads);

StripMatrix sefc_forward(const StripMatrix& strips, const HeadParams& hp);

}  // namespace gaitmm
