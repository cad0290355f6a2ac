#ifndef SMCDO_SMCDO_H
#define SMCDO_SMCDO_H

/* C interface to the smcdo library: spatial Monte Carlo dropout inference,
 * training and calibration metrics. Every function returns a status code;
 * on failure smcdo_last_error() describes the problem (per thread). Tensors
 * are fp64, NCHW, contiguous. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SMCDO_API __declspec(dllexport)
#else
#define SMCDO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2..4 double as CLI exit codes. */
typedef enum smcdo_status {
  SMCDO_OK = 0,
  SMCDO_ERR_INTERNAL = 1,
  SMCDO_ERR_CONFIG = 2,
  SMCDO_ERR_DATA = 3,
  SMCDO_ERR_NUMERIC = 4,
  SMCDO_ERR_DIMENSION = 5,
  SMCDO_ERR_ARGUMENT = 6,
  SMCDO_ERR_STATE = 7,
  SMCDO_ERR_IO = 8
} smcdo_status;

typedef struct smcdo_model smcdo_model;
typedef struct smcdo_output smcdo_output;

SMCDO_API const char* smcdo_version(void);
/* Message of the last failed call on this thread, "" if none. */
SMCDO_API const char* smcdo_last_error(void);

/* ---- models ---- */

/* arch_json: the "arch" object of an experiment config (unknown keys are
 * rejected). rate_train and rate_inf set the dropout sites. */
SMCDO_API int smcdo_model_create(const char* arch_json, double rate_train, double rate_inf, smcdo_model** out);
/* Loads <path>.bin together with its .json sidecar. */
SMCDO_API int smcdo_model_load(const char* checkpoint_path, smcdo_model** out);
SMCDO_API int smcdo_model_save(const smcdo_model* model, const char* weights_path);
SMCDO_API void smcdo_model_free(smcdo_model* model);

SMCDO_API int smcdo_model_set_inference_rate(smcdo_model* model, double rate);
SMCDO_API int smcdo_model_dropout_sites(const smcdo_model* model, size_t* out);
SMCDO_API int smcdo_model_parameter_count(const smcdo_model* model, size_t* out);
/* Output extents for an input of n x c x h x w. */
SMCDO_API int smcdo_model_output_shape(const smcdo_model* model, const size_t input_shape[4], size_t out_shape[4]);

/* ---- inference ---- */

SMCDO_API int smcdo_run_vanilla(const smcdo_model* model, const double* input, const size_t shape[4],
                                smcdo_output** out);
/* num_samples full stochastic passes. */
SMCDO_API int smcdo_run_mcdo(const smcdo_model* model, const double* input, const size_t shape[4],
                             size_t num_samples, uint64_t seed, smcdo_output** out);
/* Deterministic backbone once, then num_samples branches in one batch; fused
 * != 0 skips dropped channels inside the convolutions. */
SMCDO_API int smcdo_run_branched(const smcdo_model* model, const double* input, const size_t shape[4],
                                 size_t num_samples, uint64_t seed, int fused, smcdo_output** out);

SMCDO_API int smcdo_output_shape(const smcdo_output* out, size_t shape[4]);
SMCDO_API size_t smcdo_output_num_samples(const smcdo_output* out);
/* Pointers stay valid until smcdo_output_free. */
SMCDO_API const double* smcdo_output_mean_probs(const smcdo_output* out);
SMCDO_API const double* smcdo_output_entropy(const smcdo_output* out);   /* N x 1 x H x W */
SMCDO_API const double* smcdo_output_variance(const smcdo_output* out);  /* same shape as mean */
SMCDO_API void smcdo_output_free(smcdo_output* out);

/* ---- metrics ----
 * probs: n x k x h x w probabilities; labels: one per position (n*h*w). */

SMCDO_API int smcdo_metric_accuracy(const double* probs, const size_t shape[4], const int* labels, double* out);
SMCDO_API int smcdo_metric_ece(const double* probs, const size_t shape[4], const int* labels, size_t bins,
                               double* out);
SMCDO_API int smcdo_metric_nll(const double* probs, const size_t shape[4], const int* labels, double* out);
/* Binary masks of equal length. */
SMCDO_API int smcdo_metric_dice(const int* predicted, const int* truth, size_t count, double* out);

/* ---- data ---- */

/* Two-class CIFAR-format stand-in dataset (see README). */
SMCDO_API int smcdo_write_synthetic_cifar(const char* path, size_t count, uint64_t seed);

/* ---- commands ---- */

typedef struct smcdo_command_options {
  const char* config_path;
  const char* const* checkpoints; /* may be NULL */
  size_t num_checkpoints;
  const char* out_dir;            /* NULL keeps the config value */
  int has_seed;
  uint64_t seed;
  size_t threads;                 /* 0 means 1 */
  int verbose;                    /* progress on stderr */
} smcdo_command_options;

/* Runs train | eval | sweep | bench | corrupt-preview. Returns 0, 2 (config),
 * 3 (data), 4 (numeric) or 1; the message is also printed to stderr. */
SMCDO_API int smcdo_command_run(const char* command, const smcdo_command_options* options);

#ifdef __cplusplus
}
#endif

#endif
