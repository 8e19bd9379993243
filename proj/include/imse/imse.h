#ifndef IMSE_IMSE_H
#define IMSE_IMSE_H

#include <stddef.h>

#if defined(IMSE_BUILDING)
#define IMSE_API __attribute__((visibility("default")))
#else
#define IMSE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. 0 is success; the rest mirror the library's error kinds. */
typedef enum imse_status {
  IMSE_OK = 0,
  IMSE_SINGULAR_COVARIANCE = 1,
  IMSE_UNKNOWN_BLOCK,
  IMSE_UNSTABLE_CLOSED_LOOP,
  IMSE_DIMENSION_MISMATCH,
  IMSE_POWER_CAP_EXCEEDED,
  IMSE_CALLBACK_FAILURE,
  IMSE_UNSUPPORTED_ESTIMATOR,
  IMSE_DEGENERATE_WEIGHTS,
  IMSE_HORIZON_MISMATCH,
  IMSE_MARGINAL_EIGENVALUE,
  IMSE_ILL_CONDITIONED_TRANSFORM,
  IMSE_NO_CONVERGENCE,
  IMSE_NOT_DETECTABLE,
  IMSE_NOT_PSD,
  IMSE_NO_SPLIT_AVAILABLE,
  IMSE_MARGINAL_MONODROMY,
  IMSE_VALIDATION_FAILURE,
  IMSE_SINGULAR_STEP,
  IMSE_NUMERICAL_BLOWUP,
  IMSE_MODE_MISMATCH,
  IMSE_NON_FINITE_STATE,
  IMSE_INSUFFICIENT_SAMPLES,
  IMSE_DIMENSION_TOO_HIGH,
  IMSE_SCHEMA_ERROR,
  IMSE_UNKNOWN_PARAMETER,
  IMSE_INVALID_ARGUMENT,
  IMSE_IO_ERROR,
  IMSE_INTERNAL_ERROR = 99
} imse_status;

typedef struct imse_scenario imse_scenario;
typedef struct imse_record imse_record;

typedef struct imse_run_options {
  int threads; /* 0: IMSE_THREADS or hardware concurrency */
  int bits;    /* nonzero: report information in bits */
} imse_run_options;

IMSE_API const char* imse_version(void);
IMSE_API const char* imse_status_string(int status);
/* Message of the last failure on the calling thread. */
IMSE_API const char* imse_last_error(void);
IMSE_API void imse_set_threads(int threads);

IMSE_API int imse_scenario_load_file(const char* path, imse_scenario** out);
IMSE_API int imse_scenario_load_builtin(const char* name, imse_scenario** out);
IMSE_API int imse_scenario_parse(const char* json_text, imse_scenario** out);
/* `name` is a top-level key or a JSON pointer; `json_value` is a JSON literal. */
IMSE_API int imse_scenario_set_param(imse_scenario* scenario, const char* name,
                                     const char* json_value);
IMSE_API int imse_scenario_name(const imse_scenario* scenario, const char** out);
IMSE_API void imse_scenario_free(imse_scenario* scenario);

IMSE_API int imse_run(const imse_scenario* scenario, const imse_run_options* options,
                      imse_record** out);
/* Caller frees *out with imse_string_free. */
IMSE_API int imse_record_report_json(const imse_record* record, int include_wall_time,
                                     char** out);
IMSE_API int imse_record_violation(const imse_record* record, int* violated);
IMSE_API int imse_record_write(const imse_record* record, const char* dir);
IMSE_API void imse_record_free(imse_record* record);

/* `values` is a comma-separated list of JSON literals. */
IMSE_API int imse_sweep(const imse_scenario* scenario, const char* param, const char* values,
                        const imse_run_options* options, char** csv_out);
IMSE_API void imse_string_free(char* s);

IMSE_API size_t imse_builtin_count(void);
IMSE_API const char* imse_builtin_name(size_t index);
IMSE_API const char* imse_builtin_description(size_t index);
IMSE_API const char* imse_builtin_json(size_t index);

/* sum over |lambda| > 1 of log|lambda| for a row-major n x n matrix. */
IMSE_API int imse_unstable_spectrum_rate(const double* a_row_major, size_t n, double* out);
/* [2(n+1)]^{-1} sum log det(Sigma_i + I) over `steps` row-major dim x dim blocks. */
IMSE_API int imse_capacity(const double* covariances, size_t dim, size_t steps, double* out);

#ifdef __cplusplus
}
#endif

#endif
