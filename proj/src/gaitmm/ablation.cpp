#include "gaitmm/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gaitmm/error.hpp"

namespace fs = std::filesystem;

namespace gaitmm {

std::vector<AblationFlags> ablation_matrix() { return {{false, false}, {true, false}, {false, true}, {true, true}}; }

std::string ablation_name(const AblationFlags& flags) {
  if (flags.use_pme && flags.use_msma) return "full";
  if (flags.use_pme) return "BME+PME";
  if (flags.use_msma) return "BME+MSMA";
  return "BME";
}

std::vector<AblationRow> run_ablation_matrix(const RunConfig& base, const Dataset& data, const std::string& out_dir,
                                             const std::function<void(const std::string&)>& log) {
  std::vector<AblationRow> rows;
  for (const AblationFlags& flags : ablation_matrix()) {
    RunConfig cfg = base;
    cfg.model.ablation = flags;
    AblationRow row;
    row.name = ablation_name(flags);
    row.flags = flags;
    row.parameters = count_parameters(cfg.model);
    if (log) log("training " + row.name + " (" + std::to_string(row.parameters.total) + " parameters)");

    TrainingState state = TrainingState::fresh(cfg);
    TrainOptions options;
    std::string row_dir;
    if (!out_dir.empty()) {
      row_dir = (fs::path(out_dir) / row.name).string();
      options.out_dir = row_dir;
    }
    const TrainSummary summary = run_training(state, data, options);
    if (!summary.losses.empty()) row.final_loss = summary.losses.back();
    row.report = evaluate(data, state.params).report;
    if (!row_dir.empty()) emit_report(row.report, row_dir);
    if (log) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s: mean rank-1 %.4f", row.name.c_str(), row.report.overall_mean);
      log(buf);
    }
    rows.push_back(std::move(row));
  }

  if (!out_dir.empty()) {
    std::ofstream os(fs::path(out_dir) / "ablation.csv", std::ios::trunc);
    if (!os) fail(ErrorKind::kIo, "cannot write ablation summary in '" + out_dir + "'");
    os << "config,use_pme,use_msma,parameters,final_total_loss";
    if (!rows.empty()) {
      for (const auto& c : rows.front().report.conditions) os << ',' << condition_name(c.condition);
    }
    os << ",mean\n";
    for (const auto& r : rows) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", r.final_loss.total);
      os << r.name << ',' << r.flags.use_pme << ',' << r.flags.use_msma << ',' << r.parameters.total << ',' << buf;
      for (const auto& c : r.report.conditions) {
        std::snprintf(buf, sizeof(buf), "%.6f", c.mean);
        os << ',' << buf;
      }
      std::snprintf(buf, sizeof(buf), "%.6f", r.report.overall_mean);
      os << ',' << buf << '\n';
    }
  }
  return rows;
}

}  // namespace gaitmm
