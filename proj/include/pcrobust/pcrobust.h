/* C interface to the pcrobust library. Every call returns a pcr_status; on
 * failure pcr_last_error() describes it (thread-local, valid until the next
 * call on the same thread). Handles are opaque and owned by the caller. */
#ifndef PCROBUST_H
#define PCROBUST_H

#include <stddef.h>
#include <stdint.h>

#if defined(PCR_BUILDING_LIBRARY)
#define PCR_API __attribute__((visibility("default")))
#else
#define PCR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcr_status {
  PCR_OK = 0,
  PCR_ERR_CONFIG = 1,
  PCR_ERR_PARSE = 2,
  PCR_ERR_DEGENERATE = 3,
  PCR_ERR_NUMERICAL = 4,
  PCR_ERR_DIVERGENCE = 5,
  PCR_ERR_INSUFFICIENT_DATA = 6,
  PCR_ERR_UNSUPPORTED = 7,
  PCR_ERR_IO = 8,
  PCR_ERR_SCHEMA = 9,
  PCR_ERR_INVALID_ARGUMENT = 10,
  PCR_ERR_INTERNAL = 11
} pcr_status;

typedef struct pcr_experiment pcr_experiment;
typedef struct pcr_dataset pcr_dataset;
typedef struct pcr_model pcr_model;

PCR_API const char* pcr_version(void);
PCR_API const char* pcr_last_error(void);
PCR_API const char* pcr_status_name(pcr_status status);

/* Experiment configuration. */
PCR_API pcr_status pcr_experiment_load(const char* path, pcr_experiment** out);
PCR_API pcr_status pcr_experiment_parse(const char* json_text, pcr_experiment** out);
PCR_API void pcr_experiment_free(pcr_experiment* exp);
/* Replaces the seed list with the single given seed. */
PCR_API pcr_status pcr_experiment_set_seed(pcr_experiment* exp, uint64_t seed);
PCR_API pcr_status pcr_experiment_set_serial(pcr_experiment* exp, int serial);
/* Writes the normalized configuration as JSON. *needed receives the size
 * including the terminator; buf may be NULL to query it. */
PCR_API pcr_status pcr_experiment_to_json(const pcr_experiment* exp, char* buf, size_t len,
                                          size_t* needed);

/* Runs every arm and seed; the run directory path is copied into buf. */
PCR_API pcr_status pcr_experiment_run(const pcr_experiment* exp, const char* output_root,
                                      char* run_dir, size_t len);
/* Benchmarks the configured attacks on each checkpoint and writes the report
 * under output_root; the report directory path is copied into buf. */
PCR_API pcr_status pcr_experiment_bench(const pcr_experiment* exp, const char* const* checkpoints,
                                        size_t num_checkpoints, const char* output_root,
                                        char* report_dir, size_t len);
/* Regenerates plots/ for an existing run directory. */
PCR_API pcr_status pcr_emit_plots(const char* run_dir);

/* Synthetic datasets. */
PCR_API pcr_status pcr_dataset_generate(const pcr_experiment* exp, pcr_dataset** out);
PCR_API pcr_status pcr_dataset_load(const char* path, pcr_dataset** out);
PCR_API pcr_status pcr_dataset_save(const pcr_dataset* ds, const char* path, int binary);
PCR_API void pcr_dataset_free(pcr_dataset* ds);
PCR_API size_t pcr_dataset_size(const pcr_dataset* ds);
PCR_API int pcr_dataset_num_classes(const pcr_dataset* ds);
/* Point count and label of cloud i; coords (3 * points doubles, row-major)
 * may be NULL. */
PCR_API pcr_status pcr_dataset_cloud(const pcr_dataset* ds, size_t i, size_t* points, int* label,
                                     double* coords, size_t coords_len);

/* Classifier checkpoints. */
PCR_API pcr_status pcr_model_load(const char* path, pcr_model** out);
PCR_API void pcr_model_free(pcr_model* model);
PCR_API int pcr_model_num_classes(const pcr_model* model);
PCR_API pcr_status pcr_model_predict(const pcr_model* model, const double* coords, size_t points,
                                     int* label);
PCR_API pcr_status pcr_model_accuracy(const pcr_model* model, const pcr_dataset* ds,
                                      double* accuracy);

#ifdef __cplusplus
}
#endif

#endif /* PCROBUST_H */
