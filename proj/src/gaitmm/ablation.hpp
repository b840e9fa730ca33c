#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gaitmm/eval.hpp"
#include "gaitmm/train.hpp"

namespace gaitmm {

struct AblationRow {
  std::string name;  // "BME", "BME+PME", "BME+MSMA", "full"
  AblationFlags flags;
  ParamCount parameters;
  LossReport final_loss;
  RankOneReport report;
};

std::vector<AblationFlags> ablation_matrix();
std::string ablation_name(const AblationFlags& flags);

// Trains and evaluates every row from the same seed. With a non-empty out_dir each row gets its own
// subdirectory (checkpoints, loss CSV, rank-1 CSVs) and ablation.csv summarizes the matrix.
std::vector<AblationRow> run_ablation_matrix(const RunConfig& base, const Dataset& data, const std::string& out_dir,
                                             const std::function<void(const std::string&)>& log = {});

}  // namespace gaitmm
