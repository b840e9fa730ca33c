#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gaitmm/checkpoint.hpp"
#include "gaitmm/dataset.hpp"
#include "gaitmm/losses.hpp"
#include "gaitmm/model.hpp"

namespace gaitmm {

// base_lr before decay_at, decayed_lr from decay_at on.
double lr_schedule(int iteration, const TrainConfig& cfg);

struct GradientPass {
  CombinedLoss loss;
  AlignedVector grads;  // laid out like params.values()
};

// Forward, combined loss and backward over one batch. Gradients are reduced in item order,
// so the result does not depend on the number of worker threads.
GradientPass compute_gradients(const ModelParams& params, std::span<const FeatureMap> clips,
                               std::span<const int> labels, const TrainConfig& cfg);

// Per-item activation memory of one training clip, in bytes.
std::size_t activation_bytes(const ModelConfig& cfg, int frames);

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const TrainConfig& cfg);

// One optimization step. A non-finite loss or gradient aborts with the name of the first
// non-finite tensor; params and optimizer state are left untouched in that case.
LossReport train_step(ModelParams& params, const TrainingBatch& batch, AdamState& adam, double lr,
                      const TrainConfig& cfg);

struct TrainOptions {
  std::string out_dir;                 // checkpoints and the loss CSV; empty keeps everything in memory
  std::string loss_csv = "loss.csv";
  std::function<void(int iteration, const LossReport&, double lr)> on_step;
};

struct TrainSummary {
  int first_iteration = 0;
  int last_iteration = 0;
  std::vector<LossReport> losses;  // one per step run
  std::string final_checkpoint;
};

// Runs from state.iteration up to cfg.train.iterations. Appends to the loss CSV when resuming,
// checkpoints every checkpoint_every iterations and at the end, and writes abort.ckpt before
// rethrowing a numeric failure.
TrainSummary run_training(TrainingState& state, const Dataset& data, const TrainOptions& options = {});

inline constexpr const char* kLossCsvHeader = "iter,triplet,ce,total,nonzero_frac,lr";

}  // namespace gaitmm
