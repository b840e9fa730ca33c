#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaitmm/config.hpp"
#include "gaitmm/params.hpp"
#include "gaitmm/rng.hpp"

namespace gaitmm {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// Everything needed to continue a run exactly where it stopped.
struct TrainingState {
  RunConfig cfg;
  ModelParams params;
  AdamState adam;
  Rng sampler;
  int iteration = 0;

  // Initial weights and sampler stream derived from cfg.train.seed.
  static TrainingState fresh(const RunConfig& cfg);
};

inline constexpr char kCheckpointMagic[9] = "GAITMMCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Magic, version, a JSON header (config dump, iteration, sampler state, parameter layout) and the raw
// parameter and moment arrays. Written to a temporary file and renamed into place.
void save_checkpoint(const TrainingState& state, const std::string& path);
TrainingState load_checkpoint(const std::string& path);

}  // namespace gaitmm
