#ifndef COMPRSMA_H
#define COMPRSMA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// The four compared schemes.
typedef enum CrScheme {
  CR_SCHEME_RSMA_MA = 0,
  CR_SCHEME_RSMA_FPA = 1,
  CR_SCHEME_SDMA_MA = 2,
  CR_SCHEME_SDMA_FPA = 3,
} CrScheme;

// Status codes returned by every fallible function.
typedef enum CrStatus {
  CR_STATUS_OK = 0,
  CR_STATUS_NULL_POINTER = 1,
  CR_STATUS_INVALID_ARGUMENT = 2,
  CR_STATUS_CONFIG = 3,
  CR_STATUS_SHAPE = 4,
  CR_STATUS_NUMERIC_FAULT = 5,
  CR_STATUS_PARSE = 6,
  CR_STATUS_IO = 7,
  CR_STATUS_BUFFER_TOO_SMALL = 8,
  CR_STATUS_PANIC = 9,
} CrStatus;

// Optimizer, scenario and experiment settings.
typedef struct CrConfig CrConfig;

// Best point found by an optimizer run.
typedef struct CrResult CrResult;

// One channel realization.
typedef struct CrScenario CrScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library from the same thread.
const char *cr_last_error(void);

// Static description of a status code.
const char *cr_status_str(enum CrStatus status);

// Library version as a static string.
const char *cr_version(void);

// New config holding the defaults.
//
// # Safety
// `out` must be valid for writes.
enum CrStatus cr_config_new(struct CrConfig **out);

// Sets one `key = value` setting, using the config-file keys.
//
// # Safety
// `cfg` must come from [`cr_config_new`]; `key` and `value` must be
// NUL-terminated strings.
enum CrStatus cr_config_set(struct CrConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must come from [`cr_config_new`] or be null.
void cr_config_free(struct CrConfig *cfg);

// Samples a realization from the scenario settings of `cfg` (defaults when
// `cfg` is null).
//
// # Safety
// `cfg` must be null or a live config; `out` must be valid for writes.
enum CrStatus cr_scenario_sample(const struct CrConfig *cfg,
                                 uint64_t seed,
                                 struct CrScenario **out);

// Parses a realization from the text format written by [`cr_scenario_dump`].
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid for writes.
enum CrStatus cr_scenario_load(const char *text, struct CrScenario **out);

// Writes the realization as text, NUL-terminated. `len` receives the
// required size including the terminator.
//
// # Safety
// `s` must be a live scenario; `buf` must hold `cap` bytes; `len` must
// be valid for writes.
enum CrStatus cr_scenario_dump(const struct CrScenario *s, char *buf, size_t cap, size_t *len);

// BS count, antennas per BS and user count.
//
// # Safety
// `s` must be a live scenario; the outputs must be valid for writes.
enum CrStatus cr_scenario_dims(const struct CrScenario *s,
                               size_t *n_bs,
                               size_t *n_antennas,
                               size_t *n_users);

// # Safety
// `s` must come from this library or be null.
void cr_scenario_free(struct CrScenario *s);

// Runs the meta-learning optimizer for `scheme` (a [`CrScheme`] value).
//
// # Safety
// `s` must be a live scenario, `cfg` null or a live config, `out` valid
// for writes.
enum CrStatus cr_optimize(const struct CrScenario *s,
                          const struct CrConfig *cfg,
                          int scheme,
                          struct CrResult **out);

// Runs the multi-start projected gradient ascent oracle.
//
// # Safety
// As [`cr_optimize`].
enum CrStatus cr_oracle(const struct CrScenario *s,
                        const struct CrConfig *cfg,
                        int scheme,
                        size_t starts,
                        struct CrResult **out);

// # Safety
// `r` must be a live result; `out` valid for writes.
enum CrStatus cr_result_sum_rate(const struct CrResult *r, double *out);

// 1 if the result satisfies every constraint, 0 if not, -1 for null.
//
// # Safety
// `r` must be a live result or null.
int cr_result_feasible(const struct CrResult *r);

// Per-user total rates.
//
// # Safety
// `r` must be a live result; `buf` must hold `cap` values.
enum CrStatus cr_result_user_rates(const struct CrResult *r, double *buf, size_t cap, size_t *len);

// Common-rate portions.
//
// # Safety
// As [`cr_result_user_rates`].
enum CrStatus cr_result_common(const struct CrResult *r, double *buf, size_t cap, size_t *len);

// Antenna positions as `x0, y0, x1, y1, …` (m).
//
// # Safety
// As [`cr_result_user_rates`].
enum CrStatus cr_result_positions(const struct CrResult *r, double *buf, size_t cap, size_t *len);

// Precoders as interleaved `re, im` pairs, BS by BS, each an
// `I × (K+1)` matrix in row-major order with the common column first.
//
// # Safety
// As [`cr_result_user_rates`].
enum CrStatus cr_result_precoders(const struct CrResult *r, double *buf, size_t cap, size_t *len);

// # Safety
// `r` must come from this library or be null.
void cr_result_free(struct CrResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMPRSMA_H */
