#ifndef GAITMM_GAITMM_H_
#define GAITMM_GAITMM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(GAITMM_BUILDING_LIBRARY)
#define GAITMM_API __attribute__((visibility("default")))
#else
#define GAITMM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gaitmm_status {
  GAITMM_OK = 0,
  GAITMM_ERR_INTERNAL = 1,
  GAITMM_ERR_CONFIG = 2,
  GAITMM_ERR_DATA = 3,
  GAITMM_ERR_NUMERIC = 4,
  GAITMM_ERR_IO = 5,
  GAITMM_ERR_PROTOCOL = 6,
  GAITMM_ERR_SHAPE = 7,
  GAITMM_ERR_PARAMETER = 8,
  GAITMM_ERR_STRUCTURAL = 9,
  GAITMM_ERR_INVALID_ARGUMENT = 10
} gaitmm_status;

typedef struct gaitmm_config gaitmm_config;
typedef struct gaitmm_dataset gaitmm_dataset;
typedef struct gaitmm_trainer gaitmm_trainer;
typedef struct gaitmm_report gaitmm_report;

/* Message of the last failed call on this thread; empty when none. */
GAITMM_API const char* gaitmm_last_error(void);
GAITMM_API const char* gaitmm_status_name(gaitmm_status status);
GAITMM_API const char* gaitmm_version(void);

/* Configuration. String outputs follow the snprintf convention: *needed receives the full
   length (without terminator) and at most cap - 1 bytes are copied. */
GAITMM_API gaitmm_status gaitmm_config_default(gaitmm_config** out);
GAITMM_API gaitmm_status gaitmm_config_desk(gaitmm_config** out);
GAITMM_API gaitmm_status gaitmm_config_parse(const char* text, gaitmm_config** out);
GAITMM_API gaitmm_status gaitmm_config_load(const char* path, gaitmm_config** out);
GAITMM_API gaitmm_status gaitmm_config_clone(const gaitmm_config* cfg, gaitmm_config** out);
GAITMM_API gaitmm_status gaitmm_config_set(gaitmm_config* cfg, const char* key, const char* value);
GAITMM_API gaitmm_status gaitmm_config_get(const gaitmm_config* cfg, const char* key, char* buf, size_t cap,
                                           size_t* needed);
GAITMM_API gaitmm_status gaitmm_config_dump(const gaitmm_config* cfg, char* buf, size_t cap, size_t* needed);
/* GAITMM_ERR_CONFIG with every violation in gaitmm_last_error() when invalid. */
GAITMM_API gaitmm_status gaitmm_config_validate(const gaitmm_config* cfg);
GAITMM_API void gaitmm_config_free(gaitmm_config* cfg);

typedef struct gaitmm_param_counts {
  uint64_t total;
  uint64_t bme;
  uint64_t pme;
  uint64_t msma;
  uint64_t gem;
  uint64_t sefc;
  uint64_t classifier;
} gaitmm_param_counts;

GAITMM_API gaitmm_status gaitmm_count_parameters(const gaitmm_config* cfg, gaitmm_param_counts* out);

typedef struct gaitmm_synth_options {
  int subjects;
  int views;
  int view_step;
  int seqs_per_condition;
  int nm_seqs; /* -1: same as seqs_per_condition */
  int frames;
  uint64_t seed;
} gaitmm_synth_options;

GAITMM_API void gaitmm_synth_options_default(gaitmm_synth_options* opts);
GAITMM_API gaitmm_status gaitmm_synth_write(const char* out_dir, const gaitmm_synth_options* opts,
                                            uint64_t* sequences_written);

/* Datasets. protocol is "casia_b_lt", "oumvlp" or "synth". */
GAITMM_API gaitmm_status gaitmm_dataset_load(const char* root, const char* protocol, int min_train_frames,
                                             gaitmm_dataset** out);
GAITMM_API gaitmm_status gaitmm_dataset_synth(const gaitmm_synth_options* opts, gaitmm_dataset** out);

typedef struct gaitmm_dataset_info {
  uint64_t sequences;
  uint64_t subjects;
  uint64_t train_sequences;
  uint64_t gallery_sequences;
  uint64_t probe_sequences;
  uint64_t warnings;
  uint64_t dropped_frames;
  uint64_t empty_sequences;
} gaitmm_dataset_info;

GAITMM_API gaitmm_status gaitmm_dataset_get_info(const gaitmm_dataset* ds, gaitmm_dataset_info* out);
/* i-th loader warning, or NULL. */
GAITMM_API const char* gaitmm_dataset_warning(const gaitmm_dataset* ds, size_t i);
GAITMM_API void gaitmm_dataset_free(gaitmm_dataset* ds);

/* Training state: configuration, weights, optimizer moments and sampler position. */
GAITMM_API gaitmm_status gaitmm_trainer_create(const gaitmm_config* cfg, gaitmm_trainer** out);
GAITMM_API gaitmm_status gaitmm_trainer_load(const char* checkpoint, gaitmm_trainer** out);
GAITMM_API gaitmm_status gaitmm_trainer_save(const gaitmm_trainer* t, const char* checkpoint);
GAITMM_API int gaitmm_trainer_iteration(const gaitmm_trainer* t);
GAITMM_API gaitmm_status gaitmm_trainer_config(const gaitmm_trainer* t, gaitmm_config** out);
/* Sets a [train] key of the state's configuration (e.g. extending iterations before a resume). */
GAITMM_API gaitmm_status gaitmm_trainer_set(gaitmm_trainer* t, const char* key, const char* value);
GAITMM_API gaitmm_status gaitmm_trainer_num_parameters(const gaitmm_trainer* t, uint64_t* out);
GAITMM_API gaitmm_status gaitmm_trainer_get_parameters(const gaitmm_trainer* t, double* out, size_t cap);
GAITMM_API void gaitmm_trainer_free(gaitmm_trainer* t);

typedef struct gaitmm_loss {
  double triplet;
  double cross_entropy;
  double total;
  double nonzero_fraction;
} gaitmm_loss;

typedef void (*gaitmm_step_callback)(int iteration, const gaitmm_loss* loss, double lr, void* user);

/* Trains up to the configured iteration count. out_dir may be NULL (nothing written). */
GAITMM_API gaitmm_status gaitmm_train(gaitmm_trainer* t, const gaitmm_dataset* ds, const char* out_dir,
                                      gaitmm_step_callback callback, void* user);

/* Embeds one clip laid out as channels x frames x height x width. out holds num_strips * embed_dim. */
GAITMM_API gaitmm_status gaitmm_embed_clip(const gaitmm_trainer* t, const double* clip, int frames, double* out,
                                           size_t cap);

/* Rank-1 evaluation on the dataset's protocol; out_dir (optional) receives the CSV report and
   embeddings.json. */
GAITMM_API gaitmm_status gaitmm_evaluate(const gaitmm_trainer* t, const gaitmm_dataset* ds, const char* out_dir,
                                         gaitmm_report** out);
GAITMM_API size_t gaitmm_report_num_conditions(const gaitmm_report* r);
GAITMM_API const char* gaitmm_report_condition_name(const gaitmm_report* r, size_t i);
GAITMM_API double gaitmm_report_condition_mean(const gaitmm_report* r, size_t i);
GAITMM_API size_t gaitmm_report_num_views(const gaitmm_report* r, size_t i);
GAITMM_API int gaitmm_report_view(const gaitmm_report* r, size_t i, size_t v);
/* NaN on the diagonal and for views without probes. */
GAITMM_API double gaitmm_report_cell(const gaitmm_report* r, size_t i, size_t probe, size_t gallery);
GAITMM_API double gaitmm_report_overall_mean(const gaitmm_report* r);
GAITMM_API void gaitmm_report_free(gaitmm_report* r);

typedef struct gaitmm_ablation_row {
  char name[16];
  int use_pme;
  int use_msma;
  uint64_t parameters;
  double final_total_loss;
  double mean_rank1;
} gaitmm_ablation_row;

typedef void (*gaitmm_log_callback)(const char* message, void* user);

/* Four rows: BME, BME+PME, BME+MSMA, full. rows must hold 4 entries. */
GAITMM_API gaitmm_status gaitmm_run_ablation(const gaitmm_config* cfg, const gaitmm_dataset* ds,
                                             const char* out_dir, gaitmm_log_callback log, void* user,
                                             gaitmm_ablation_row* rows, size_t cap, size_t* count);

#ifdef __cplusplus
}
#endif

#endif  // GAITMM_GAITMM_H_
