#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gaitmm/gaitmm.h"

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 configuration, 3 data or protocol, 4 numeric, 5 i/o.
int exit_code(gaitmm_status s) {
  switch (s) {
    case GAITMM_OK: return 0;
    case GAITMM_ERR_CONFIG:
    case GAITMM_ERR_SHAPE:
    case GAITMM_ERR_PARAMETER:
    case GAITMM_ERR_INVALID_ARGUMENT: return 2;
    case GAITMM_ERR_DATA:
    case GAITMM_ERR_PROTOCOL:
    case GAITMM_ERR_STRUCTURAL: return 3;
    case GAITMM_ERR_NUMERIC: return 4;
    case GAITMM_ERR_IO: return 5;
    default: return 1;
  }
}

struct Failure {
  gaitmm_status status;
};

void check(gaitmm_status s, const std::string& what) {
  if (s == GAITMM_OK) return;
  std::cerr << "gaitmm: " << what << ": " << gaitmm_status_name(s) << ": " << gaitmm_last_error() << '\n';
  throw Failure{s};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Config = Handle<gaitmm_config, gaitmm_config_free>;
using DatasetHandle = Handle<gaitmm_dataset, gaitmm_dataset_free>;
using Trainer = Handle<gaitmm_trainer, gaitmm_trainer_free>;
using Report = Handle<gaitmm_report, gaitmm_report_free>;

std::string dump(const gaitmm_config* cfg) {
  size_t n = 0;
  check(gaitmm_config_dump(cfg, nullptr, 0, &n), "dumping config");
  std::string s(n + 1, '\0');
  check(gaitmm_config_dump(cfg, s.data(), s.size(), &n), "dumping config");
  s.resize(n);
  return s;
}

std::string get(const gaitmm_config* cfg, const std::string& key) {
  char buf[256];
  size_t n = 0;
  check(gaitmm_config_get(cfg, key.c_str(), buf, sizeof(buf), &n), "reading " + key);
  return buf;
}

nlohmann::json counts_json(const gaitmm_param_counts& c) {
  return {{"total", c.total}, {"bme", c.bme},   {"pme", c.pme},
          {"msma", c.msma},   {"gem", c.gem},   {"sefc", c.sefc}, {"classifier", c.classifier}};
}

void write_manifest(const std::string& out_dir, nlohmann::json manifest) {
  fs::create_directories(out_dir);
  manifest["output_dir"] = out_dir;
  manifest["version"] = gaitmm_version();
  const fs::path path = fs::path(out_dir) / "manifest.json";
  std::ofstream os(path, std::ios::trunc);
  os << manifest.dump(2) << '\n';
  if (!os) {
    std::cerr << "gaitmm: cannot write " << path << '\n';
    throw Failure{GAITMM_ERR_IO};
  }
}

void apply_overrides(gaitmm_config* cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "gaitmm: --set expects section.key=value, got '" << kv << "'\n";
      throw Failure{GAITMM_ERR_CONFIG};
    }
    check(gaitmm_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
}

void load_run_config(Config& cfg, const std::string& path, const std::string& preset,
                     const std::vector<std::string>& sets) {
  if (!path.empty()) {
    check(gaitmm_config_load(path.c_str(), cfg.out()), "loading " + path);
  } else if (preset == "desk") {
    check(gaitmm_config_desk(cfg.out()), "desk preset");
  } else {
    check(gaitmm_config_default(cfg.out()), "default config");
  }
  apply_overrides(cfg.get(), sets);
  check(gaitmm_config_validate(cfg.get()), "invalid configuration");
}

void load_data(DatasetHandle& ds, const std::string& root, const std::string& protocol, int min_frames) {
  check(gaitmm_dataset_load(root.c_str(), protocol.c_str(), min_frames, ds.out()), "loading " + root);
  gaitmm_dataset_info info{};
  check(gaitmm_dataset_get_info(ds.get(), &info), "dataset info");
  std::printf("dataset: %llu sequences, %llu subjects, %llu train / %llu gallery / %llu probe\n",
              static_cast<unsigned long long>(info.sequences), static_cast<unsigned long long>(info.subjects),
              static_cast<unsigned long long>(info.train_sequences),
              static_cast<unsigned long long>(info.gallery_sequences),
              static_cast<unsigned long long>(info.probe_sequences));
  if (info.warnings > 0) {
    std::fprintf(stderr, "dataset: %llu malformed entries skipped\n", static_cast<unsigned long long>(info.warnings));
    for (size_t i = 0; i < 5; ++i) {
      const char* w = gaitmm_dataset_warning(ds.get(), i);
      if (w == nullptr) break;
      std::fprintf(stderr, "  %s\n", w);
    }
  }
  if (info.dropped_frames > 0 || info.empty_sequences > 0) {
    std::fprintf(stderr, "dataset: %llu frames without foreground dropped, %llu empty sequences skipped\n",
                 static_cast<unsigned long long>(info.dropped_frames),
                 static_cast<unsigned long long>(info.empty_sequences));
  }
}

void print_report(const gaitmm_report* r) {
  for (size_t i = 0; i < gaitmm_report_num_conditions(r); ++i) {
    std::printf("%s rank-1 mean: %.4f\n", gaitmm_report_condition_name(r, i), gaitmm_report_condition_mean(r, i));
  }
  std::printf("overall rank-1 mean: %.4f\n", gaitmm_report_overall_mean(r));
}

struct StepLog {
  int every = 50;
};

void on_step(int iteration, const gaitmm_loss* loss, double lr, void* user) {
  const int every = static_cast<StepLog*>(user)->every;
  if (every > 0 && (iteration + 1) % every == 0) {
    std::printf("iter %6d  triplet %.5f  ce %.5f  total %.5f  nonzero %.3f  lr %.1e\n", iteration + 1,
                loss->triplet, loss->cross_entropy, loss->total, loss->nonzero_fraction, lr);
    std::fflush(stdout);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaitmm: silhouette gait recognition training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gaitmm_version()));

  gaitmm_synth_options synth{};
  gaitmm_synth_options_default(&synth);
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth-data", "Render a synthetic multi-view silhouette corpus");
  cmd_synth->add_option("--out", synth_out, "Output directory")->required();
  cmd_synth->add_option("--subjects", synth.subjects, "Number of subjects")->capture_default_str();
  cmd_synth->add_option("--views", synth.views, "Number of views")->capture_default_str();
  cmd_synth->add_option("--view-step", synth.view_step, "Degrees between views")->capture_default_str();
  cmd_synth->add_option("--seqs-per-cond", synth.seqs_per_condition, "Sequences per condition")->capture_default_str();
  cmd_synth->add_option("--nm-seqs", synth.nm_seqs, "NM sequences per subject (-1: --seqs-per-cond)")
      ->capture_default_str();
  cmd_synth->add_option("--frames", synth.frames, "Frames per sequence")->capture_default_str();
  cmd_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  std::string config_path, preset = "default", data_dir, out_dir, resume, protocol = "synth";
  std::vector<std::string> sets;
  int log_every = 50;
  long long seed = -1;
  auto* cmd_train = app.add_subcommand("train", "Train a model");
  cmd_train->add_option("--config", config_path, "Config file");
  cmd_train->add_option("--preset", preset, "Built-in config when --config is absent")
      ->check(CLI::IsMember({"default", "desk"}))
      ->capture_default_str();
  cmd_train->add_option("--data", data_dir, "Dataset root")->required();
  cmd_train->add_option("--protocol", protocol, "casia_b_lt, oumvlp or synth")->capture_default_str();
  cmd_train->add_option("--out", out_dir, "Output directory")->required();
  cmd_train->add_option("--resume", resume, "Checkpoint to continue from");
  cmd_train->add_option("--set", sets, "Override a config entry (section.key=value)");
  cmd_train->add_option("--seed", seed, "Override train.seed");
  cmd_train->add_option("--log-every", log_every, "Print the loss every N iterations")->capture_default_str();

  std::string checkpoint;
  auto* cmd_eval = app.add_subcommand("eval", "Cross-view rank-1 evaluation");
  cmd_eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  cmd_eval->add_option("--data", data_dir, "Dataset root")->required();
  cmd_eval->add_option("--protocol", protocol, "casia_b_lt, oumvlp or synth")->capture_default_str();
  cmd_eval->add_option("--out", out_dir, "Output directory")->required();

  auto* cmd_params = app.add_subcommand("params", "Parameter counts for standard and depthwise-separable PME");
  cmd_params->add_option("--config", config_path, "Config file");
  cmd_params->add_option("--preset", preset, "Built-in config when --config is absent")
      ->check(CLI::IsMember({"default", "desk"}))
      ->capture_default_str();
  cmd_params->add_option("--set", sets, "Override a config entry (section.key=value)");

  auto* cmd_ablation = app.add_subcommand("ablation", "Train and evaluate BME / BME+PME / BME+MSMA / full");
  cmd_ablation->add_option("--config", config_path, "Config file");
  cmd_ablation->add_option("--preset", preset, "Built-in config when --config is absent")
      ->check(CLI::IsMember({"default", "desk"}))
      ->capture_default_str();
  cmd_ablation->add_option("--data", data_dir, "Dataset root")->required();
  cmd_ablation->add_option("--protocol", protocol, "casia_b_lt, oumvlp or synth")->capture_default_str();
  cmd_ablation->add_option("--out", out_dir, "Output directory")->required();
  cmd_ablation->add_option("--set", sets, "Override a config entry (section.key=value)");
  cmd_ablation->add_option("--seed", seed, "Override train.seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_synth->parsed()) {
      write_manifest(synth_out, {{"command", "synth-data"},
                                 {"seed", synth.seed},
                                 {"subjects", synth.subjects},
                                 {"views", synth.views},
                                 {"view_step", synth.view_step},
                                 {"seqs_per_condition", synth.seqs_per_condition},
                                 {"nm_seqs", synth.nm_seqs},
                                 {"frames", synth.frames}});
      uint64_t written = 0;
      check(gaitmm_synth_write(synth_out.c_str(), &synth, &written), "writing corpus");
      std::printf("wrote %llu sequences to %s\n", static_cast<unsigned long long>(written), synth_out.c_str());
      return 0;
    }

    if (cmd_train->parsed()) {
      Trainer trainer;
      if (!resume.empty()) {
        check(gaitmm_trainer_load(resume.c_str(), trainer.out()), "loading " + resume);
        for (const auto& kv : sets) {
          const auto eq = kv.find('=');
          check(gaitmm_trainer_set(trainer.get(), kv.substr(0, eq).c_str(),
                                   eq == std::string::npos ? "" : kv.substr(eq + 1).c_str()),
                "--set " + kv);
        }
      } else {
        Config cfg;
        if (seed >= 0) sets.push_back("train.seed=" + std::to_string(seed));
        load_run_config(cfg, config_path, preset, sets);
        check(gaitmm_trainer_create(cfg.get(), trainer.out()), "initializing model");
      }
      Config resolved;
      check(gaitmm_trainer_config(trainer.get(), resolved.out()), "reading config");
      gaitmm_param_counts counts{};
      check(gaitmm_count_parameters(resolved.get(), &counts), "counting parameters");
      write_manifest(out_dir, {{"command", "train"},
                               {"config_path", config_path},
                               {"preset", config_path.empty() ? preset : ""},
                               {"data", data_dir},
                               {"protocol", protocol},
                               {"resume", resume},
                               {"seed", get(resolved.get(), "train.seed")},
                               {"start_iteration", gaitmm_trainer_iteration(trainer.get())},
                               {"parameters", counts_json(counts)},
                               {"config", dump(resolved.get())}});
      std::printf("parameters: %llu\n", static_cast<unsigned long long>(counts.total));
      DatasetHandle ds;
      load_data(ds, data_dir, protocol, std::stoi(get(resolved.get(), "train.min_train_frames")));
      StepLog log{log_every};
      check(gaitmm_train(trainer.get(), ds.get(), out_dir.c_str(), on_step, &log), "training");
      std::printf("trained to iteration %d; checkpoint %s\n", gaitmm_trainer_iteration(trainer.get()),
                  (fs::path(out_dir) / "final.ckpt").c_str());
      return 0;
    }

    if (cmd_eval->parsed()) {
      Trainer trainer;
      check(gaitmm_trainer_load(checkpoint.c_str(), trainer.out()), "loading " + checkpoint);
      Config resolved;
      check(gaitmm_trainer_config(trainer.get(), resolved.out()), "reading config");
      write_manifest(out_dir, {{"command", "eval"},
                               {"checkpoint", checkpoint},
                               {"data", data_dir},
                               {"protocol", protocol},
                               {"seed", get(resolved.get(), "train.seed")},
                               {"config", dump(resolved.get())}});
      DatasetHandle ds;
      load_data(ds, data_dir, protocol, std::stoi(get(resolved.get(), "train.min_train_frames")));
      Report report;
      check(gaitmm_evaluate(trainer.get(), ds.get(), out_dir.c_str(), report.out()), "evaluation");
      print_report(report.get());
      return 0;
    }

    if (cmd_params->parsed()) {
      Config standard, separable;
      load_run_config(standard, config_path, preset, sets);
      check(gaitmm_config_clone(standard.get(), separable.out()), "copying config");
      check(gaitmm_config_set(standard.get(), "model.pme_mode", "standard"), "pme_mode");
      check(gaitmm_config_set(separable.get(), "model.pme_mode", "depthwise_separable"), "pme_mode");
      gaitmm_param_counts s{}, d{};
      check(gaitmm_count_parameters(standard.get(), &s), "counting parameters");
      check(gaitmm_count_parameters(separable.get(), &d), "counting parameters");
      std::printf("%-12s %14s %14s\n", "module", "standard", "dw");
      const std::pair<const char*, std::pair<uint64_t, uint64_t>> rows[] = {
          {"bme", {s.bme, d.bme}},    {"pme", {s.pme, d.pme}},          {"msma", {s.msma, d.msma}},
          {"gem", {s.gem, d.gem}},    {"sefc", {s.sefc, d.sefc}},       {"classifier", {s.classifier, d.classifier}},
          {"total", {s.total, d.total}}};
      for (const auto& [name, v] : rows) {
        std::printf("%-12s %14llu %14llu\n", name, static_cast<unsigned long long>(v.first),
                    static_cast<unsigned long long>(v.second));
      }
      return 0;
    }

    if (cmd_ablation->parsed()) {
      Config cfg;
      if (seed >= 0) sets.push_back("train.seed=" + std::to_string(seed));
      load_run_config(cfg, config_path, preset, sets);
      write_manifest(out_dir, {{"command", "ablation"},
                               {"config_path", config_path},
                               {"preset", config_path.empty() ? preset : ""},
                               {"data", data_dir},
                               {"protocol", protocol},
                               {"seed", get(cfg.get(), "train.seed")},
                               {"config", dump(cfg.get())}});
      DatasetHandle ds;
      load_data(ds, data_dir, protocol, std::stoi(get(cfg.get(), "train.min_train_frames")));
      gaitmm_ablation_row rows[4];
      size_t count = 0;
      auto log = [](const char* m, void*) {
        std::printf("%s\n", m);
        std::fflush(stdout);
      };
      check(gaitmm_run_ablation(cfg.get(), ds.get(), out_dir.c_str(), log, nullptr, rows, 4, &count), "ablation");
      std::printf("%-10s %12s %12s %10s\n", "config", "parameters", "final_loss", "rank1");
      for (size_t i = 0; i < count; ++i) {
        std::printf("%-10s %12llu %12.5f %10.4f\n", rows[i].name, static_cast<unsigned long long>(rows[i].parameters),
                    rows[i].final_total_loss, rows[i].mean_rank1);
      }
      return 0;
    }
  } catch (const Failure& f) {
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "gaitmm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
