#include "gaitmm/gaitmm.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "gaitmm/ablation.hpp"
#include "gaitmm/checkpoint.hpp"
#include "gaitmm/config.hpp"
#include "gaitmm/dataset.hpp"
#include "gaitmm/error.hpp"
#include "gaitmm/eval.hpp"
#include "gaitmm/model.hpp"
#include "gaitmm/train.hpp"

#ifndef GAITMM_VERSION_STRING
#define GAITMM_VERSION_STRING "0.1.0"
#endif

struct gaitmm_config {
  gaitmm::RunConfig cfg;
};
struct gaitmm_dataset {
  gaitmm::Dataset data;
};
struct gaitmm_trainer {
  gaitmm::TrainingState state;
};
struct gaitmm_report {
  gaitmm::RankOneReport report;
};

namespace {

thread_local std::string last_error;

gaitmm_status status_of(gaitmm::ErrorKind kind) {
  using gaitmm::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig: return GAITMM_ERR_CONFIG;
    case ErrorKind::kShape: return GAITMM_ERR_SHAPE;
    case ErrorKind::kParameter: return GAITMM_ERR_PARAMETER;
    case ErrorKind::kData: return GAITMM_ERR_DATA;
    case ErrorKind::kStructural: return GAITMM_ERR_STRUCTURAL;
    case ErrorKind::kProtocol: return GAITMM_ERR_PROTOCOL;
    case ErrorKind::kNumeric: return GAITMM_ERR_NUMERIC;
    case ErrorKind::kIo: return GAITMM_ERR_IO;
  }
  return GAITMM_ERR_INTERNAL;
}

template <class Fn>
gaitmm_status guarded(Fn&& fn) {
  last_error.clear();
  try {
    fn();
    return GAITMM_OK;
  } catch (const gaitmm::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return GAITMM_ERR_INTERNAL;
}

gaitmm_status invalid(const char* what) {
  last_error = std::string("invalid argument: ") + what;
  return GAITMM_ERR_INVALID_ARGUMENT;
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size();
  if (buf != nullptr && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

gaitmm::SynthCorpusOptions synth_options(const gaitmm_synth_options* o) {
  gaitmm::SynthCorpusOptions s;
  s.subjects = o->subjects;
  s.views = o->views;
  s.view_step = o->view_step;
  s.seqs_per_condition = o->seqs_per_condition;
  s.nm_seqs = o->nm_seqs;
  s.frames = o->frames;
  s.seed = o->seed;
  return s;
}

template <class T, class... Args>
gaitmm_status make_handle(T** out, Args&&... args) {
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] { *out = new T{std::forward<Args>(args)...}; });
}

}  // namespace

extern "C" {

const char* gaitmm_last_error(void) { return last_error.c_str(); }

const char* gaitmm_status_name(gaitmm_status status) {
  switch (status) {
    case GAITMM_OK: return "ok";
    case GAITMM_ERR_INTERNAL: return "internal error";
    case GAITMM_ERR_CONFIG: return "configuration error";
    case GAITMM_ERR_DATA: return "data error";
    case GAITMM_ERR_NUMERIC: return "numeric error";
    case GAITMM_ERR_IO: return "i/o error";
    case GAITMM_ERR_PROTOCOL: return "protocol error";
    case GAITMM_ERR_SHAPE: return "shape error";
    case GAITMM_ERR_PARAMETER: return "parameter error";
    case GAITMM_ERR_STRUCTURAL: return "structural error";
    case GAITMM_ERR_INVALID_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

const char* gaitmm_version(void) { return GAITMM_VERSION_STRING; }

gaitmm_status gaitmm_config_default(gaitmm_config** out) { return make_handle(out, gaitmm::RunConfig{}); }

gaitmm_status gaitmm_config_desk(gaitmm_config** out) { return make_handle(out, gaitmm::RunConfig::desk_preset()); }

gaitmm_status gaitmm_config_parse(const char* text, gaitmm_config** out) {
  if (text == nullptr) return invalid("null config text");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] { *out = new gaitmm_config{gaitmm::parse_config(text)}; });
}

gaitmm_status gaitmm_config_load(const char* path, gaitmm_config** out) {
  if (path == nullptr) return invalid("null path");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] { *out = new gaitmm_config{gaitmm::load_config(path)}; });
}

gaitmm_status gaitmm_config_clone(const gaitmm_config* cfg, gaitmm_config** out) {
  if (cfg == nullptr) return invalid("null config");
  return make_handle(out, cfg->cfg);
}

gaitmm_status gaitmm_config_set(gaitmm_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr) return invalid("null config, key or value");
  return guarded([&] { gaitmm::set_config_value(cfg->cfg, key, value); });
}

gaitmm_status gaitmm_config_get(const gaitmm_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  if (cfg == nullptr || key == nullptr) return invalid("null config or key");
  return guarded([&] { copy_out(gaitmm::get_config_value(cfg->cfg, key), buf, cap, needed); });
}

gaitmm_status gaitmm_config_dump(const gaitmm_config* cfg, char* buf, size_t cap, size_t* needed) {
  if (cfg == nullptr) return invalid("null config");
  return guarded([&] { copy_out(gaitmm::dump_config(cfg->cfg), buf, cap, needed); });
}

gaitmm_status gaitmm_config_validate(const gaitmm_config* cfg) {
  if (cfg == nullptr) return invalid("null config");
  return guarded([&] { gaitmm::require_valid(cfg->cfg); });
}

void gaitmm_config_free(gaitmm_config* cfg) { delete cfg; }

gaitmm_status gaitmm_count_parameters(const gaitmm_config* cfg, gaitmm_param_counts* out) {
  if (cfg == nullptr || out == nullptr) return invalid("null config or output");
  return guarded([&] {
    using gaitmm::ParamModule;
    const gaitmm::ParamCount c = gaitmm::count_parameters(cfg->cfg.model);
    out->total = c.total;
    out->bme = c.of(ParamModule::kBme);
    out->pme = c.of(ParamModule::kPme);
    out->msma = c.of(ParamModule::kMsma);
    out->gem = c.of(ParamModule::kGem);
    out->sefc = c.of(ParamModule::kSefc);
    out->classifier = c.of(ParamModule::kClassifier);
  });
}

void gaitmm_synth_options_default(gaitmm_synth_options* opts) {
  if (opts == nullptr) return;
  const gaitmm::SynthCorpusOptions d;
  opts->subjects = d.subjects;
  opts->views = d.views;
  opts->view_step = d.view_step;
  opts->seqs_per_condition = d.seqs_per_condition;
  opts->nm_seqs = d.nm_seqs;
  opts->frames = d.frames;
  opts->seed = d.seed;
}

gaitmm_status gaitmm_synth_write(const char* out_dir, const gaitmm_synth_options* opts, uint64_t* sequences_written) {
  if (out_dir == nullptr || opts == nullptr) return invalid("null output directory or options");
  return guarded([&] {
    const auto summary = gaitmm::write_synthetic_corpus(out_dir, synth_options(opts));
    if (sequences_written != nullptr) *sequences_written = summary.sequences;
  });
}

gaitmm_status gaitmm_dataset_load(const char* root, const char* protocol, int min_train_frames,
                                  gaitmm_dataset** out) {
  if (root == nullptr || protocol == nullptr) return invalid("null root or protocol");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] {
    gaitmm::LoadOptions options;
    options.min_train_frames = min_train_frames;
    const auto split = gaitmm::SplitProtocol::by_name(gaitmm::parse_protocol(protocol));
    *out = new gaitmm_dataset{gaitmm::load_dataset(root, split, options)};
  });
}

gaitmm_status gaitmm_dataset_synth(const gaitmm_synth_options* opts, gaitmm_dataset** out) {
  if (opts == nullptr) return invalid("null options");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] {
    *out = new gaitmm_dataset{gaitmm::make_dataset(gaitmm::generate_synthetic_sequences(synth_options(opts)),
                                                   gaitmm::SplitProtocol::synth())};
  });
}

gaitmm_status gaitmm_dataset_get_info(const gaitmm_dataset* ds, gaitmm_dataset_info* out) {
  if (ds == nullptr || out == nullptr) return invalid("null dataset or output");
  return guarded([&] {
    out->sequences = ds->data.sequences.size();
    out->subjects = ds->data.subjects().size();
    out->train_sequences = ds->data.train_indices().size();
    out->gallery_sequences = ds->data.gallery_indices().size();
    out->probe_sequences = ds->data.probe_indices().size();
    out->warnings = ds->data.stats.warnings;
    out->dropped_frames = ds->data.stats.dropped_frames;
    out->empty_sequences = ds->data.stats.empty_sequences;
  });
}

const char* gaitmm_dataset_warning(const gaitmm_dataset* ds, size_t i) {
  if (ds == nullptr || i >= ds->data.stats.messages.size()) return nullptr;
  return ds->data.stats.messages[i].c_str();
}

void gaitmm_dataset_free(gaitmm_dataset* ds) { delete ds; }

gaitmm_status gaitmm_trainer_create(const gaitmm_config* cfg, gaitmm_trainer** out) {
  if (cfg == nullptr) return invalid("null config");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] { *out = new gaitmm_trainer{gaitmm::TrainingState::fresh(cfg->cfg)}; });
}

gaitmm_status gaitmm_trainer_load(const char* checkpoint, gaitmm_trainer** out) {
  if (checkpoint == nullptr) return invalid("null checkpoint path");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] { *out = new gaitmm_trainer{gaitmm::load_checkpoint(checkpoint)}; });
}

gaitmm_status gaitmm_trainer_save(const gaitmm_trainer* t, const char* checkpoint) {
  if (t == nullptr || checkpoint == nullptr) return invalid("null trainer or path");
  return guarded([&] { gaitmm::save_checkpoint(t->state, checkpoint); });
}

int gaitmm_trainer_iteration(const gaitmm_trainer* t) { return t == nullptr ? -1 : t->state.iteration; }

gaitmm_status gaitmm_trainer_config(const gaitmm_trainer* t, gaitmm_config** out) {
  if (t == nullptr) return invalid("null trainer");
  return make_handle(out, t->state.cfg);
}

gaitmm_status gaitmm_trainer_set(gaitmm_trainer* t, const char* key, const char* value) {
  if (t == nullptr || key == nullptr || value == nullptr) return invalid("null trainer, key or value");
  if (std::strncmp(key, "train.", 6) != 0) {
    last_error = std::string("only [train] keys can change on an existing state (got '") + key + "')";
    return GAITMM_ERR_CONFIG;
  }
  return guarded([&] {
    gaitmm::RunConfig cfg = t->state.cfg;
    gaitmm::set_config_value(cfg, key, value);
    gaitmm::require_valid(cfg);
    t->state.cfg = cfg;
  });
}

gaitmm_status gaitmm_trainer_num_parameters(const gaitmm_trainer* t, uint64_t* out) {
  if (t == nullptr || out == nullptr) return invalid("null trainer or output");
  *out = t->state.params.values().size();
  return GAITMM_OK;
}

gaitmm_status gaitmm_trainer_get_parameters(const gaitmm_trainer* t, double* out, size_t cap) {
  if (t == nullptr || out == nullptr) return invalid("null trainer or output");
  const auto v = t->state.params.values();
  if (cap < v.size()) return invalid("output buffer too small");
  std::copy(v.begin(), v.end(), out);
  return GAITMM_OK;
}

void gaitmm_trainer_free(gaitmm_trainer* t) { delete t; }

gaitmm_status gaitmm_train(gaitmm_trainer* t, const gaitmm_dataset* ds, const char* out_dir,
                           gaitmm_step_callback callback, void* user) {
  if (t == nullptr || ds == nullptr) return invalid("null trainer or dataset");
  return guarded([&] {
    gaitmm::TrainOptions options;
    if (out_dir != nullptr) options.out_dir = out_dir;
    if (callback != nullptr) {
      options.on_step = [&](int iteration, const gaitmm::LossReport& r, double lr) {
        const gaitmm_loss loss{r.triplet, r.cross_entropy, r.total, r.nonzero_triplet_fraction};
        callback(iteration, &loss, lr, user);
      };
    }
    gaitmm::run_training(t->state, ds->data, options);
  });
}

gaitmm_status gaitmm_embed_clip(const gaitmm_trainer* t, const double* clip, int frames, double* out, size_t cap) {
  if (t == nullptr || clip == nullptr || out == nullptr) return invalid("null trainer, clip or output");
  if (frames <= 0) return invalid("frames must be positive");
  const gaitmm::ModelConfig& m = t->state.cfg.model;
  if (cap < static_cast<size_t>(m.num_strips) * m.embed_dim) return invalid("output buffer too small");
  return guarded([&] {
    gaitmm::FeatureMap x(m.input_channels, frames, m.input_height, m.input_width);
    std::copy(clip, clip + x.values().size(), x.data());
    const gaitmm::ItemOutput y = gaitmm::forward_item(t->state.params, x);
    std::copy(y.embedding.data(), y.embedding.data() + y.embedding.size(), out);
  });
}

gaitmm_status gaitmm_evaluate(const gaitmm_trainer* t, const gaitmm_dataset* ds, const char* out_dir,
                              gaitmm_report** out) {
  if (t == nullptr || ds == nullptr) return invalid("null trainer or dataset");
  if (out == nullptr) return invalid("null output handle");
  *out = nullptr;
  return guarded([&] {
    gaitmm::Evaluation ev = gaitmm::evaluate(ds->data, t->state.params);
    if (out_dir != nullptr) {
      gaitmm::emit_report(ev.report, out_dir);
      std::vector<gaitmm::GaitEmbedding> all = ev.gallery.items;
      all.insert(all.end(), ev.probes.items.begin(), ev.probes.items.end());
      gaitmm::save_embeddings((std::filesystem::path(out_dir) / "embeddings.json").string(), all);
    }
    *out = new gaitmm_report{std::move(ev.report)};
  });
}

size_t gaitmm_report_num_conditions(const gaitmm_report* r) { return r == nullptr ? 0 : r->report.conditions.size(); }

const char* gaitmm_report_condition_name(const gaitmm_report* r, size_t i) {
  if (r == nullptr || i >= r->report.conditions.size()) return nullptr;
  return gaitmm::condition_name(r->report.conditions[i].condition);
}

double gaitmm_report_condition_mean(const gaitmm_report* r, size_t i) {
  if (r == nullptr || i >= r->report.conditions.size()) return std::nan("");
  return r->report.conditions[i].mean;
}

size_t gaitmm_report_num_views(const gaitmm_report* r, size_t i) {
  if (r == nullptr || i >= r->report.conditions.size()) return 0;
  return r->report.conditions[i].views.size();
}

int gaitmm_report_view(const gaitmm_report* r, size_t i, size_t v) {
  if (gaitmm_report_num_views(r, i) <= v) return -1;
  return r->report.conditions[i].views[v];
}

double gaitmm_report_cell(const gaitmm_report* r, size_t i, size_t probe, size_t gallery) {
  const size_t n = gaitmm_report_num_views(r, i);
  if (probe >= n || gallery >= n) return std::nan("");
  return r->report.conditions[i].cells[probe][gallery];
}

double gaitmm_report_overall_mean(const gaitmm_report* r) {
  return r == nullptr ? std::nan("") : r->report.overall_mean;
}

void gaitmm_report_free(gaitmm_report* r) { delete r; }

gaitmm_status gaitmm_run_ablation(const gaitmm_config* cfg, const gaitmm_dataset* ds, const char* out_dir,
                                  gaitmm_log_callback log, void* user, gaitmm_ablation_row* rows, size_t cap,
                                  size_t* count) {
  if (cfg == nullptr || ds == nullptr) return invalid("null config or dataset");
  if (rows == nullptr || cap < 4) return invalid("rows must hold 4 entries");
  return guarded([&] {
    std::function<void(const std::string&)> sink;
    if (log != nullptr) sink = [&](const std::string& m) { log(m.c_str(), user); };
    const auto result = gaitmm::run_ablation_matrix(cfg->cfg, ds->data, out_dir == nullptr ? "" : out_dir, sink);
    for (size_t i = 0; i < result.size(); ++i) {
      gaitmm_ablation_row& row = rows[i];
      std::memset(&row, 0, sizeof(row));
      std::strncpy(row.name, result[i].name.c_str(), sizeof(row.name) - 1);
      row.use_pme = result[i].flags.use_pme;
      row.use_msma = result[i].flags.use_msma;
      row.parameters = result[i].parameters.total;
      row.final_total_loss = result[i].final_loss.total;
      row.mean_rank1 = result[i].report.overall_mean;
    }
    if (count != nullptr) *count = result.size();
  });
}

}  // extern "C"
