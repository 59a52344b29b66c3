/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the attention-stabilized MIL library.
 *
 * Every fallible call returns an asmil_status. On failure the message is
 * available from asmil_last_error() on the same thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * asmil_string_free(). Handles are released with their *_free function;
 * passing NULL to a free function is a no-op.
 */
#ifndef ASMIL_ASMIL_H
#define ASMIL_ASMIL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef ASMIL_BUILDING_LIBRARY
#    define ASMIL_API __declspec(dllexport)
#  else
#    define ASMIL_API __declspec(dllimport)
#  endif
#else
#  define ASMIL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum asmil_status {
  ASMIL_OK = 0,
  ASMIL_ERR_ARGUMENT = 1, /* NULL handle or malformed argument */
  ASMIL_ERR_SHAPE = 2,
  ASMIL_ERR_DOMAIN = 3,
  ASMIL_ERR_CONTRACT = 4,
  ASMIL_ERR_CONFIG = 5,
  ASMIL_ERR_PARSE = 6,
  ASMIL_ERR_SCHEMA = 7,
  ASMIL_ERR_IO = 8,
  ASMIL_ERR_NUMERIC = 9,
  ASMIL_ERR_INTERNAL = 10
} asmil_status;

typedef struct asmil_dataset asmil_dataset;
typedef struct asmil_config asmil_config;
typedef struct asmil_model asmil_model;

ASMIL_API const char* asmil_version(void);
ASMIL_API const char* asmil_last_error(void);
ASMIL_API const char* asmil_status_name(asmil_status status);
ASMIL_API void asmil_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

typedef struct asmil_synthetic_spec {
  size_t n_bags;
  size_t min_instances;
  size_t max_instances;
  size_t dim;
  double witness_rate;
  double signal_shift;
  double noise_scale;
  uint64_t seed;
} asmil_synthetic_spec;

ASMIL_API void asmil_synthetic_spec_default(asmil_synthetic_spec* spec);

/* format: "bagds", "bagcsv", "svmlight-bag" or "c45-musk". */
ASMIL_API asmil_status asmil_dataset_load(const char* path, const char* format,
                                          asmil_dataset** out);
ASMIL_API asmil_status asmil_dataset_generate(const asmil_synthetic_spec* spec,
                                              asmil_dataset** out);
/* Writes the bagds text format. */
ASMIL_API asmil_status asmil_dataset_save(const asmil_dataset* ds, const char* path);
ASMIL_API size_t asmil_dataset_size(const asmil_dataset* ds);
ASMIL_API size_t asmil_dataset_dim(const asmil_dataset* ds);
ASMIL_API size_t asmil_dataset_num_classes(const asmil_dataset* ds);
/* `id` stays valid while the dataset lives. */
ASMIL_API asmil_status asmil_dataset_bag(const asmil_dataset* ds, size_t index, const char** id,
                                         int* label, size_t* instances);
ASMIL_API void asmil_dataset_free(asmil_dataset* ds);

/* ---- configuration ----------------------------------------------------- */

ASMIL_API asmil_status asmil_config_new(asmil_config** out);
ASMIL_API asmil_status asmil_config_load(const char* path, asmil_config** out);
ASMIL_API asmil_status asmil_config_parse(const char* text, asmil_config** out);
ASMIL_API asmil_status asmil_config_set(asmil_config* cfg, const char* key, const char* value);
ASMIL_API asmil_status asmil_config_to_string(const asmil_config* cfg, char** out);
ASMIL_API void asmil_config_free(asmil_config* cfg);

/* ---- training ---------------------------------------------------------- */

/* Receives one metrics record (a JSON object) per completed epoch. */
typedef void (*asmil_epoch_callback)(const char* record_json, void* user);

/* Trains from scratch. `val` may be NULL. */
ASMIL_API asmil_status asmil_train(const asmil_config* cfg, const asmil_dataset* train,
                                   const asmil_dataset* val, asmil_epoch_callback on_epoch,
                                   void* user, asmil_model** out);
/* Continues a loaded checkpoint for at most `max_epochs` more epochs (0 = to
 * the configured total). The datasets must be the ones it was trained on. */
ASMIL_API asmil_status asmil_model_resume(asmil_model* model, const asmil_dataset* train,
                                          const asmil_dataset* val, size_t max_epochs,
                                          asmil_epoch_callback on_epoch, void* user);
/* Trains for at most `max_epochs` epochs (0 = all), leaving a resumable model. */
ASMIL_API asmil_status asmil_train_partial(const asmil_config* cfg, const asmil_dataset* train,
                                           const asmil_dataset* val, size_t max_epochs,
                                           asmil_epoch_callback on_epoch, void* user,
                                           asmil_model** out);
ASMIL_API asmil_status asmil_model_save(const asmil_model* model, const char* path);
ASMIL_API asmil_status asmil_model_load(const char* path, asmil_model** out);
ASMIL_API size_t asmil_model_epoch(const asmil_model* model);
/* Accuracy, macro-F1, macro-AUC and per-bag predictions as JSON. */
ASMIL_API asmil_status asmil_model_evaluate(const asmil_model* model, const asmil_dataset* ds,
                                            char** report_json);
/* Attention rows recorded for the probe bags during this process's training. */
ASMIL_API asmil_status asmil_model_trace(const asmil_model* model, char** trace_json);
ASMIL_API void asmil_model_free(asmil_model* model);

/* ---- diagnostics ------------------------------------------------------- */

/* Stability curves and concentration statistics from an attention trace. */
ASMIL_API asmil_status asmil_diagnose(const char* trace_json, size_t window, char** report_json);

typedef struct asmil_theorem_spec {
  double tau;
  double gamma;
  size_t high;
  size_t low;
  size_t n_mid;
  size_t samples;
  uint64_t seed;
  double temperature; /* for the softmax low-mass check */
  double epsilon;     /* <= 0 selects the NSF-achieved suppression target */
  double kappa;       /* <= 0 selects the NSF-achieved equalization target */
} asmil_theorem_spec;

ASMIL_API void asmil_theorem_spec_default(asmil_theorem_spec* spec);
ASMIL_API asmil_status asmil_verify_theorem(const asmil_theorem_spec* spec, char** report_json);

/* Fraction of affinely dependent bags, with a witness norm check per bag. */
ASMIL_API asmil_status asmil_affine_check(const asmil_dataset* ds, double tol,
                                          char** report_json);

/* Stratified k-fold cross-validation. Records passed to `on_epoch` carry a
 * "fold" field. */
ASMIL_API asmil_status asmil_cross_validate(const asmil_config* cfg, const asmil_dataset* ds,
                                            size_t folds, uint64_t split_seed,
                                            asmil_epoch_callback on_epoch, void* user,
                                            char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* ASMIL_ASMIL_H */
