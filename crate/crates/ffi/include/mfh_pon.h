#ifndef MFH_PON_H
#define MFH_PON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfhStatus {
  MFH_STATUS_OK = 0,
  MFH_STATUS_NULL_ARGUMENT = 1,
  MFH_STATUS_INVALID_UTF8 = 2,
  MFH_STATUS_PARSE_ERROR = 3,
  MFH_STATUS_VALIDATION_ERROR = 4,
  /**
   * A model invariant broke during a run.
   */
  MFH_STATUS_INVARIANT_VIOLATION = 5,
  MFH_STATUS_IO = 6,
  MFH_STATUS_OUT_OF_RANGE = 7,
  MFH_STATUS_PANIC = 8,
} MfhStatus;

/**
 * Per-row statistic selector for [`mfh_results_stat`]. Delays are in ps.
 */
typedef enum MfhStat {
  MFH_STAT_SAMPLES = 0,
  MFH_STAT_MIN = 1,
  MFH_STAT_P1 = 2,
  MFH_STAT_P25 = 3,
  MFH_STAT_P50 = 4,
  MFH_STAT_P75 = 5,
  MFH_STAT_P99 = 6,
  MFH_STAT_P99999 = 7,
  MFH_STAT_MAX = 8,
  MFH_STAT_MEAN = 9,
  MFH_STAT_OFFERED_LOAD_BPS = 10,
  MFH_STAT_GUARANTEED_BPS = 11,
} MfhStat;

/**
 * Opaque run configuration.
 */
typedef struct MfhConfig MfhConfig;

/**
 * Opaque pooled results of one run.
 */
typedef struct MfhResults MfhResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The shipped preset. Never null.
 */
struct MfhConfig *mfh_config_default(void);

/**
 * Loads an INI file (overlaid on the preset) or a `.json` sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MfhStatus mfh_config_from_file(const char *path, struct MfhConfig **out);

/**
 * Parses INI text overlaid on the preset.
 *
 * # Safety
 * `ini` must be a NUL-terminated string; `out` must be writable.
 */
enum MfhStatus mfh_config_from_str(const char *ini, struct MfhConfig **out);

/**
 * # Safety
 * `cfg` must come from this library; `name` must be NUL-terminated.
 */
enum MfhStatus mfh_config_set_scheme(struct MfhConfig *cfg, const char *name);

/**
 * # Safety
 * `cfg` must come from this library.
 */
enum MfhStatus mfh_config_set_b_factor(struct MfhConfig *cfg, double b);

/**
 * Simulated seconds per replication.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum MfhStatus mfh_config_set_duration(struct MfhConfig *cfg, double seconds);

/**
 * # Safety
 * `cfg` must come from this library.
 */
enum MfhStatus mfh_config_set_replications(struct MfhConfig *cfg, uint32_t replications);

/**
 * # Safety
 * `cfg` must come from this library.
 */
enum MfhStatus mfh_config_set_seed(struct MfhConfig *cfg, uint64_t seed);

/**
 * Resolved configuration as JSON; free with [`mfh_string_free`]. Null on error.
 *
 * # Safety
 * `cfg` must come from this library.
 */
char *mfh_config_json(const struct MfhConfig *cfg);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. Null is a no-op.
 */
void mfh_config_free(struct MfhConfig *cfg);

/**
 * Runs every replication and pools the results.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
enum MfhStatus mfh_run(const struct MfhConfig *cfg, struct MfhResults **out);

/**
 * Number of rows (one per MFH ONU plus the conventional class). 0 for null.
 *
 * # Safety
 * `res` must come from this library or be null.
 */
size_t mfh_results_row_count(const struct MfhResults *res);

/**
 * Class label of row `row`, e.g. `mfh-onu0` or `conventional`. Owned by `res`.
 *
 * # Safety
 * `res` must come from this library or be null.
 */
const char *mfh_results_row_class(const struct MfhResults *res, size_t row);

/**
 * Reads one statistic. A row with no samples reports `Samples` as 0 and
 * `OutOfRange` for the delay statistics.
 *
 * # Safety
 * `res` must come from this library; `value` must be writable.
 */
enum MfhStatus mfh_results_stat(const struct MfhResults *res,
                                size_t row,
                                enum MfhStat stat,
                                double *value);

/**
 * Results in the CLI's CSV format; free with [`mfh_string_free`]. Null on error.
 *
 * # Safety
 * `res` must come from this library.
 */
char *mfh_results_csv(const struct MfhResults *res);

/**
 * # Safety
 * `res` must come from this library and not be used afterwards. Null is a no-op.
 */
void mfh_results_free(struct MfhResults *res);

/**
 * # Safety
 * `s` must come from a string-returning call of this library. Null is a no-op.
 */
void mfh_string_free(char *s);

/**
 * Message for the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *mfh_last_error(void);

const char *mfh_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFH_PON_H */
