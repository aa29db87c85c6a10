#ifndef SELFEVO_SELFEVO_H
#define SELFEVO_SELFEVO_H

/* C interface to the selfevo library.
 *
 * Every fallible call returns a selfevo_status. On failure the message is
 * available from selfevo_last_error() on the same thread until the next call.
 * Strings returned through char** are owned by the caller and released with
 * selfevo_string_free(). Handles are released with their *_free function;
 * passing NULL to a free function is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SELFEVO_BUILDING_LIBRARY)
#    define SELFEVO_API __declspec(dllexport)
#  else
#    define SELFEVO_API __declspec(dllimport)
#  endif
#else
#  define SELFEVO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum selfevo_status {
  SELFEVO_OK = 0,
  SELFEVO_INVALID_ARGUMENT = 1,
  SELFEVO_IO = 2,
  SELFEVO_PARSE = 3,
  SELFEVO_MISSING_KEY = 4,
  SELFEVO_LABEL_LEAK = 5,
  SELFEVO_NUMERIC = 6,
  SELFEVO_INTERNAL = 7
} selfevo_status;

typedef struct selfevo_dataset selfevo_dataset;
typedef struct selfevo_policy selfevo_policy;

/* Greedy-decoding scores as percentages with 2 decimals. */
typedef struct selfevo_metrics {
  double accuracy; /* closed questions */
  double recall;   /* open questions */
  double rouge1;   /* open questions */
  size_t n_closed;
  size_t n_open;
} selfevo_metrics;

SELFEVO_API const char* selfevo_version(void);
SELFEVO_API const char* selfevo_last_error(void);
SELFEVO_API const char* selfevo_status_name(selfevo_status status);
SELFEVO_API void selfevo_string_free(char* s);

/* Library defaults as JSON. */
SELFEVO_API selfevo_status selfevo_default_spec(char** out_json);
SELFEVO_API selfevo_status selfevo_default_config(char** out_json);
/* The seeded benchmark: {"spec":{...},"target_accuracy":x,"config":{...}}. */
SELFEVO_API selfevo_status selfevo_benchmark(char** out_json);

/* spec_json may be NULL or partial; missing keys take library defaults. */
SELFEVO_API selfevo_status selfevo_dataset_generate(const char* spec_json, selfevo_dataset** out);
SELFEVO_API selfevo_status selfevo_dataset_load(const char* dataset_path, const char* vocab_path,
                                                selfevo_dataset** out);
SELFEVO_API selfevo_status selfevo_dataset_save(const selfevo_dataset* data, const char* dataset_path,
                                                const char* vocab_path);
SELFEVO_API size_t selfevo_dataset_size(const selfevo_dataset* data);
SELFEVO_API size_t selfevo_dataset_vocab_size(const selfevo_dataset* data);
SELFEVO_API size_t selfevo_dataset_feature_dim(const selfevo_dataset* data);
SELFEVO_API void selfevo_dataset_free(selfevo_dataset* data);

SELFEVO_API selfevo_status selfevo_policy_fit_base(const selfevo_dataset* data, double target_accuracy,
                                                   selfevo_policy** out);
/* When `expect` is non-NULL the checkpoint must carry its vocabulary fingerprint. */
SELFEVO_API selfevo_status selfevo_policy_load(const char* path, const selfevo_dataset* expect,
                                               selfevo_policy** out);
SELFEVO_API selfevo_status selfevo_policy_save(const selfevo_policy* policy, const char* path);
SELFEVO_API uint64_t selfevo_policy_fingerprint(const selfevo_policy* policy);
SELFEVO_API void selfevo_policy_free(selfevo_policy* policy);

/* Runs the label-free loop from `base`. config_json may be NULL or partial.
 * run_log_path and metrics_csv_path may be NULL. Evaluation snapshots are
 * recorded only when every instance carries a gold answer. */
SELFEVO_API selfevo_status selfevo_evolve(const selfevo_dataset* data, const selfevo_policy* base,
                                          const char* config_json, const char* run_log_path,
                                          const char* metrics_csv_path, selfevo_policy** out);

SELFEVO_API selfevo_status selfevo_evaluate(const selfevo_policy* policy, const selfevo_dataset* data,
                                            selfevo_metrics* out);

/* Pseudo-label hit rates of FPL and majority voting for each n. Sampler and
 * encoder settings come from config_json (NULL for defaults). */
SELFEVO_API selfevo_status selfevo_hitrate(const selfevo_policy* policy, const selfevo_dataset* data,
                                           const size_t* n_values, size_t n_count, uint64_t seed,
                                           const char* config_json, char** out_json);

/* Base, ttrl, fpl_only, hsr_only and full variants from the same base. */
SELFEVO_API selfevo_status selfevo_ablate(const selfevo_dataset* data, const selfevo_policy* base,
                                          const char* config_json, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
