#include "gaitmm/model.hpp"

#include <string>

#include "gaitmm/error.hpp"
#include "gaitmm/parallel.hpp"

namespace gaitmm {
namespace {

template <class Fn>
auto at_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), stage + ": " + e.what());
  }
}

std::string block_name(int b) { return "block " + std::to_string(b + 1); }

PartFilterBankGrads pme_grads(const ParamViews<double>& g, int block) {
  PartFilterBankGrads out;
  for (auto& part : g.pme(block)) out.banks.push_back(part);
  return out;
}

}  // namespace

ItemOutput forward_item(const ModelParams& params, const FeatureMap& clip, ForwardCache* cache,
                        ForwardTrace* trace) {
  const ModelConfig& cfg = params.config();
  if (clip.channels() != cfg.input_channels || clip.height() != cfg.input_height ||
      clip.width() != cfg.input_width) {
    fail(ErrorKind::kShape, "input clip " + clip.shape().str() + " does not match the configured " +
                                std::to_string(cfg.input_channels) + "xDx" + std::to_string(cfg.input_height) +
                                "x" + std::to_string(cfg.input_width));
  }
  if (!clip.all_finite()) fail(ErrorKind::kNumeric, "input clip contains non-finite values");
  if (cache != nullptr) *cache = ForwardCache{};

  FeatureMap x = clip;
  for (int b = 0; b < cfg.num_ffsl_blocks; ++b) {
    if (cfg.ablation.use_msma && b == cfg.msma_after_block) {
      FeatureMap compressed = at_stage("msma", [&] { return msma_forward(x, params.msma()); });
      if (cache != nullptr) {
        cache->msma_input = std::move(x);
        cache->msma_applied = true;
      }
      x = std::move(compressed);
      if (trace != nullptr) trace->post_msma_frames = x.frames();
    }
    FeatureMap z = at_stage(block_name(b), [&] {
      FeatureMap sum = bme_forward(x, params.bme(b));
      if (cfg.ablation.use_pme) sum += pme_forward(x, params.pme(b));
      return sum;
    });
    FeatureMap y = leaky_relu(z, cfg.leaky_slope);
    if (trace != nullptr) trace->block_outputs.push_back(y.shape());
    if (cache != nullptr) {
      cache->block_inputs.push_back(std::move(x));
      cache->block_preacts.push_back(std::move(z));
    }
    x = std::move(y);
  }

  const HeadParams head = params.head();
  FeatureMap pooled = temporal_pool(x);
  StripMatrix gem = at_stage("gem", [&] { return gem_pool(pooled, head.gem_delta, cfg.num_strips, cfg.gem_eps); });
  ItemOutput out;
  out.embedding = at_stage("sefc", [&] { return sefc_forward(gem, head); });
  out.logits = strip_linear_forward(out.embedding, head.classifier_weights);
  if (cache != nullptr) {
    cache->final_activation = std::move(x);
    cache->pooled = std::move(pooled);
    cache->gem_out = std::move(gem);
    cache->embedding = out.embedding;
  }
  return out;
}

void backward_item(const ModelParams& params, const ForwardCache& cache, const StripMatrix& grad_embedding,
                   const StripMatrix& grad_logits, std::span<double> grads) {
  const ModelConfig& cfg = params.config();
  if (grads.size() != params.values().size()) fail(ErrorKind::kConfig, "gradient buffer has the wrong size");
  if (cache.block_inputs.size() != static_cast<std::size_t>(cfg.num_ffsl_blocks)) {
    fail(ErrorKind::kConfig, "backward_item needs a cache filled by forward_item");
  }
  const HeadParams head = params.head();
  ParamViews<double> g(params.layout(), grads);

  std::vector<LinearGrads> cls_grads, sefc_grads;
  for (int s = 0; s < cfg.num_strips; ++s) {
    cls_grads.push_back(g.classifier(s));
    sefc_grads.push_back(g.sefc(s));
  }
  StripMatrix d_emb = grad_embedding;
  d_emb += strip_linear_backward(cache.embedding, head.classifier_weights, grad_logits, cls_grads);
  StripMatrix d_gem = strip_linear_backward(cache.gem_out, head.sefc_weights, d_emb, sefc_grads);
  GemBackward gem = gem_backward(cache.pooled, head.gem_delta, cfg.num_strips, d_gem, cfg.gem_eps);
  g.gem_delta() += gem.grad_delta;
  FeatureMap d_x = temporal_pool_backward(cache.final_activation, gem.grad_input);

  for (int b = cfg.num_ffsl_blocks - 1; b >= 0; --b) {
    const FeatureMap& xin = cache.block_inputs[b];
    leaky_relu_backward_inplace(cache.block_preacts[b], cfg.leaky_slope, d_x);
    const bool need_input = b > 0;
    FeatureMap d_in = conv3d_backward(xin, params.bme(b), d_x, g.bme(b), need_input);
    if (cfg.ablation.use_pme) {
      FeatureMap d_part = pme_backward(xin, params.pme(b), d_x, pme_grads(g, b), need_input);
      if (need_input) d_in += d_part;
    }
    if (cache.msma_applied && b == cfg.msma_after_block) {
      MsmaGrads mg;
      mg.part_lmas.assign(cfg.l_parts, LmaGrads{});
      d_in = msma_backward(cache.msma_input, params.msma(), d_in, mg);
      g.lma_p1(-1) += mg.global_lma.p1;
      g.lma_p2(-1) += mg.global_lma.p2;
      for (int j = 0; j < cfg.l_parts; ++j) {
        g.lma_p1(j) += mg.part_lmas[j].p1;
        g.lma_p2(j) += mg.part_lmas[j].p2;
      }
    }
    d_x = std::move(d_in);
  }
}

BatchOutput gaitmm_forward(std::span<const FeatureMap> batch, const ModelParams& params) {
  BatchOutput out;
  out.embeddings.resize(batch.size());
  out.logits.resize(batch.size());
  std::vector<ForwardTrace> traces(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    try {
      ItemOutput item = forward_item(params, batch[i], nullptr, &traces[i]);
      out.embeddings[i] = std::move(item.embedding);
      out.logits[i] = std::move(item.logits);
    } catch (const Error& e) {
      throw Error(e.kind(), "batch item " + std::to_string(i) + ": " + e.what());
    }
  });
  if (!traces.empty()) out.trace = traces.front();
  return out;
}

}  // namespace gaitmm
