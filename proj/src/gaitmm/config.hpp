#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gaitmm {

enum class PmeMode { kStandard, kDepthwiseSeparable };

const char* pme_mode_name(PmeMode mode);
PmeMode parse_pme_mode(const std::string& s);

struct AblationFlags {
  bool use_pme = true;
  bool use_msma = true;
  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  int input_channels = 1;
  int input_height = 64;
  int input_width = 44;
  int num_ffsl_blocks = 3;
  std::vector<int> stage_channels{32, 64, 128};
  int k_parts = 8;
  int l_parts = 8;
  int msma_after_block = 2;  // MSMA sits between block msma_after_block and the next one (1-based)
  PmeMode pme_mode = PmeMode::kStandard;
  int num_strips = 16;
  int embed_dim = 256;
  int num_classes = 74;
  double leaky_slope = 0.01;
  double gem_delta_init = 6.5;
  double gem_eps = 1e-6;
  double lma_init = 0.5;
  AblationFlags ablation;

  int output_channels() const { return stage_channels.empty() ? 0 : stage_channels.back(); }
  bool operator==(const ModelConfig&) const = default;

  // Six blocks with the MSMA after the fourth, for large multi-view corpora.
  static ModelConfig large_dataset();
};

struct TrainConfig {
  int iterations = 80000;
  double base_lr = 1e-4;
  int decay_at = 70000;
  double decayed_lr = 1e-5;
  double margin = 0.2;
  int P = 8;
  int K = 8;
  int D = 30;
  std::uint64_t seed = 0;
  int checkpoint_every = 10000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  double triplet_weight = 1.0;
  double ce_weight = 1.0;
  int min_train_frames = 15;
  bool recompute_activations = false;  // trade compute for memory in the backward pass

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool operator==(const RunConfig&) const = default;

  // Small, CPU-friendly configuration used by CI and the synthetic end-to-end run.
  static RunConfig desk_preset();
};

// Every violated invariant as a human-readable line; empty when valid.
std::vector<std::string> validate(const ModelConfig& cfg);
std::vector<std::string> validate(const RunConfig& cfg);
// Throws a configuration error listing all violations.
void require_valid(const ModelConfig& cfg);
void require_valid(const RunConfig& cfg);

// Sectioned plain-text format, one typed entry per line:
//
//   [model]
//   int   k_parts = 8
//   ints  stage_channels = 32,64,128
//   [train]
//   real  base_lr = 0.0001
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string dump_config(const RunConfig& cfg);

// `key` is "section.name"; value is parsed according to the key's declared type.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();

}  // namespace gaitmm
