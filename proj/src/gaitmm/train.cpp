#include "gaitmm/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>

#include "gaitmm/error.hpp"
#include "gaitmm/parallel.hpp"

namespace fs = std::filesystem;

namespace gaitmm {

double lr_schedule(int iteration, const TrainConfig& cfg) {
  return iteration < cfg.decay_at ? cfg.base_lr : cfg.decayed_lr;
}

std::size_t activation_bytes(const ModelConfig& cfg, int frames) {
  const std::size_t plane = static_cast<std::size_t>(cfg.input_height) * cfg.input_width;
  std::size_t doubles = 0;
  std::size_t t = frames;
  int channels = cfg.input_channels;
  for (int b = 0; b < cfg.num_ffsl_blocks; ++b) {
    if (cfg.ablation.use_msma && b == cfg.msma_after_block) {
      doubles += channels * t * plane;
      t /= 3;
    }
    const int out = cfg.stage_channels.at(b);
    doubles += (static_cast<std::size_t>(channels) + out) * t * plane;
    channels = out;
  }
  doubles += static_cast<std::size_t>(channels) * t * plane + static_cast<std::size_t>(channels) * plane;
  return doubles * sizeof(double);
}

namespace {

constexpr std::size_t kActivationBudget = std::size_t{2} << 30;

}  // namespace

GradientPass compute_gradients(const ModelParams& params, std::span<const FeatureMap> clips,
                               std::span<const int> labels, const TrainConfig& cfg) {
  const std::size_t batch = clips.size();
  if (batch == 0) fail(ErrorKind::kData, "empty training batch");
  const bool recompute =
      cfg.recompute_activations ||
      activation_bytes(params.config(), clips[0].frames()) * batch > kActivationBudget;

  std::vector<ItemOutput> outputs(batch);
  std::vector<ForwardCache> caches(recompute ? 0 : batch);
  parallel_for(batch, [&](std::size_t i) {
    outputs[i] = forward_item(params, clips[i], recompute ? nullptr : &caches[i]);
  });
  std::vector<StripMatrix> embeddings(batch), logits(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    embeddings[i] = std::move(outputs[i].embedding);
    logits[i] = std::move(outputs[i].logits);
  }

  GradientPass pass;
  pass.loss = combined_loss(embeddings, logits, labels, cfg.margin, {cfg.triplet_weight, cfg.ce_weight}, true);
  const std::size_t n = params.values().size();
  pass.grads.assign(n, 0.0);
  if (!std::isfinite(pass.loss.report.total)) return pass;

  const std::size_t lanes = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), batch);
  std::vector<AlignedVector> scratch(lanes, AlignedVector(n));
  for (std::size_t start = 0; start < batch; start += lanes) {
    const std::size_t count = std::min(lanes, batch - start);
    parallel_for(count, [&](std::size_t j) {
      const std::size_t i = start + j;
      std::fill(scratch[j].begin(), scratch[j].end(), 0.0);
      if (recompute) {
        ForwardCache cache;
        forward_item(params, clips[i], &cache);
        backward_item(params, cache, pass.loss.grad_embeddings[i], pass.loss.grad_logits[i], scratch[j]);
      } else {
        backward_item(params, caches[i], pass.loss.grad_embeddings[i], pass.loss.grad_logits[i], scratch[j]);
        caches[i] = ForwardCache{};
      }
    });
    for (std::size_t j = 0; j < count; ++j) {
      for (std::size_t k = 0; k < n; ++k) pass.grads[k] += scratch[j][k];
    }
  }
  return pass;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const TrainConfig& cfg) {
  const std::size_t n = params.size();
  if (grads.size() != n) fail(ErrorKind::kShape, "gradient size does not match parameter count");
  if (state.m.size() != n) state.m.assign(n, 0.0);
  if (state.v.size() != n) state.v.assign(n, 0.0);
  double scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grads[i] + cfg.weight_decay * params[i];
      sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = (grads[i] + cfg.weight_decay * params[i]) * scale;
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

namespace {

bool finite_span(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string first_bad_entry(const ModelParams& params, std::span<const double> buffer) {
  for (const auto& e : params.layout().entries()) {
    if (!finite_span(buffer.subspan(e.offset, e.size))) return e.name;
  }
  return {};
}

// Walks the network in execution order and names the first tensor holding a NaN or Inf.
std::string first_non_finite_tensor(const ModelParams& params, std::span<const FeatureMap> clips) {
  const std::string bad_param = first_bad_entry(params, params.values());
  if (!bad_param.empty()) return "parameter " + bad_param;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string item = "item " + std::to_string(i) + " ";
    if (!clips[i].all_finite()) return item + "input clip";
    ForwardCache cache;
    ItemOutput out;
    try {
      out = forward_item(params, clips[i], &cache);
    } catch (const Error& e) {
      return item + "forward (" + e.what() + ")";
    }
    for (std::size_t b = 0; b < cache.block_preacts.size(); ++b) {
      if (!cache.block_inputs[b].all_finite()) return item + "block " + std::to_string(b + 1) + " input";
      if (!cache.block_preacts[b].all_finite()) return item + "block " + std::to_string(b + 1) + " pre-activation";
    }
    if (cache.msma_applied && !cache.msma_input.all_finite()) return item + "msma input";
    if (!cache.final_activation.all_finite()) return item + "final activation";
    if (!cache.pooled.all_finite()) return item + "temporal pool";
    if (!all_finite(cache.gem_out)) return item + "gem output";
    if (!all_finite(out.embedding)) return item + "embedding";
    if (!all_finite(out.logits)) return item + "logits";
  }
  return "loss";
}

}  // namespace

LossReport train_step(ModelParams& params, const TrainingBatch& batch, AdamState& adam, double lr,
                      const TrainConfig& cfg) {
  GradientPass pass = compute_gradients(params, batch.clips, batch.labels, cfg);
  if (!std::isfinite(pass.loss.report.total)) {
    fail(ErrorKind::kNumeric,
         "non-finite loss; first non-finite tensor: " + first_non_finite_tensor(params, batch.clips));
  }
  const std::string bad_grad = first_bad_entry(params, pass.grads);
  if (!bad_grad.empty()) fail(ErrorKind::kNumeric, "non-finite gradient for " + bad_grad);
  adam_update(params.values(), pass.grads, adam, lr, cfg);
  return pass.loss.report;
}

namespace {

std::string csv_row(int iteration, const LossReport& r, double lr) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", iteration, r.triplet, r.cross_entropy,
                r.total, r.nonzero_triplet_fraction, lr);
  return buf;
}

std::string checkpoint_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%07d.ckpt", iteration);
  return buf;
}

}  // namespace

TrainSummary run_training(TrainingState& state, const Dataset& data, const TrainOptions& options) {
  const RunConfig& cfg = state.cfg;
  require_valid(cfg);
  const std::vector<std::size_t> pool = data.train_indices();
  if (pool.empty()) fail(ErrorKind::kData, "no training sequences (need at least " +
                                               std::to_string(data.min_train_frames) + " frames each)");
  const std::map<int, int> labels = data.train_labels();
  if (static_cast<int>(labels.size()) > cfg.model.num_classes) {
    fail(ErrorKind::kConfig, "num_classes (" + std::to_string(cfg.model.num_classes) +
                                 ") is smaller than the number of training subjects (" +
                                 std::to_string(labels.size()) + ")");
  }

  const bool on_disk = !options.out_dir.empty();
  std::ofstream csv;
  if (on_disk) {
    fs::create_directories(options.out_dir);
    const fs::path csv_path = fs::path(options.out_dir) / options.loss_csv;
    const bool append = state.iteration > 0 && fs::exists(csv_path);
    csv.open(csv_path, append ? std::ios::app : std::ios::trunc);
    if (!csv) fail(ErrorKind::kIo, "cannot write '" + csv_path.string() + "'");
    if (!append) csv << kLossCsvHeader << '\n' << std::flush;
  }
  auto save = [&](const std::string& name) {
    const std::string path = (fs::path(options.out_dir) / name).string();
    save_checkpoint(state, path);
    return path;
  };

  TrainSummary summary;
  summary.first_iteration = state.iteration;
  const int end = cfg.train.iterations;

  // The sampler stream is advanced by a cursor that may run one batch ahead of the optimizer;
  // state.sampler always holds the stream position right after the last consumed batch.
  Rng cursor = state.sampler;
  auto draw = [&] {
    return sample_training_batch(data, pool, labels, cfg.train.P, cfg.train.K, cfg.train.D, cursor,
                                 cfg.model.input_height, cfg.model.input_width);
  };
  const bool prefetch = worker_threads() > 1;
  std::future<TrainingBatch> ahead;
  if (prefetch && state.iteration < end) ahead = std::async(std::launch::async, draw);

  while (state.iteration < end) {
    TrainingBatch batch = prefetch ? ahead.get() : draw();
    const Rng after = cursor;
    if (prefetch && state.iteration + 1 < end) ahead = std::async(std::launch::async, draw);

    const double lr = lr_schedule(state.iteration, cfg.train);
    LossReport report;
    try {
      report = train_step(state.params, batch, state.adam, lr, cfg.train);
    } catch (const Error& e) {
      if (on_disk && e.kind() == ErrorKind::kNumeric) {
        const std::string path = save("abort.ckpt");
        throw Error(e.kind(), std::string(e.what()) + " (iteration " + std::to_string(state.iteration) +
                                  ", state saved to " + path + ")");
      }
      throw;
    }
    if (on_disk) csv << csv_row(state.iteration, report, lr) << std::flush;
    if (options.on_step) options.on_step(state.iteration, report, lr);
    summary.losses.push_back(report);
    state.sampler = after;
    ++state.iteration;
    if (on_disk && cfg.train.checkpoint_every > 0 && state.iteration % cfg.train.checkpoint_every == 0 &&
        state.iteration < end) {
      save(checkpoint_name(state.iteration));
    }
  }
  summary.last_iteration = state.iteration;
  if (on_disk) summary.final_checkpoint = save("final.ckpt");
  return summary;
}

}  // namespace gaitmm
