#ifndef APNEA_SCREEN_H
#define APNEA_SCREEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum ApneaStatus {
  APNEA_STATUS_OK = 0,
  APNEA_STATUS_IO = 1,
  APNEA_STATUS_INVALID = 2,
  APNEA_STATUS_DATABASE_TOO_SMALL = 3,
  APNEA_STATUS_UNKNOWN_SUBJECT = 4,
  APNEA_STATUS_MISSING_ANNOTATIONS = 5,
  APNEA_STATUS_NULL_POINTER = 6,
  APNEA_STATUS_PANIC = 7,
} ApneaStatus;

typedef enum ApneaSeverity {
  APNEA_SEVERITY_NORMAL = 0,
  APNEA_SEVERITY_MILD = 1,
  APNEA_SEVERITY_MODERATE = 2,
  APNEA_SEVERITY_SEVERE = 3,
} ApneaSeverity;

/**
 * Loaded subject database.
 */
typedef struct ApneaDatabase ApneaDatabase;

/**
 * Result of screening one subject.
 */
typedef struct ApneaScreening ApneaScreening;

/**
 * A detected event; `desat_correction` is 1 when the event came from the
 * desaturation rule rather than the classifier.
 */
typedef struct ApneaEvent {
  double start_s;
  double duration_s;
  uint8_t desat_correction;
} ApneaEvent;

/**
 * A time span in seconds.
 */
typedef struct ApneaSpan {
  double start_s;
  double duration_s;
} ApneaSpan;

typedef struct ApneaEventScore {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  double ppv;
  double recall;
  double f1;
} ApneaEventScore;

/**
 * Per-class values are NaN when undefined.
 */
typedef struct ApneaSeverityMetrics {
  double accuracy;
  double sensitivity[4];
  double ppv[4];
} ApneaSeverityMetrics;

/**
 * Undefined values are NaN; an infinite LR+ is `INFINITY`.
 */
typedef struct ApneaBinaryStats {
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
  double sensitivity;
  double specificity;
  double accuracy;
  double lr_plus;
  double lr_minus;
  uint8_t degenerate;
} ApneaBinaryStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *apnea_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void apnea_string_free(char *s);

/**
 * Loads every subject directory under `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ApneaStatus apnea_database_load(const char *path, struct ApneaDatabase **out);

/**
 * # Safety
 * `db` must come from [`apnea_database_load`] and not have been freed.
 */
void apnea_database_free(struct ApneaDatabase *db);

/**
 * Number of subjects; 0 for NULL.
 *
 * # Safety
 * `db` must be NULL or a live database handle.
 */
size_t apnea_database_len(const struct ApneaDatabase *db);

/**
 * Copies the id of subject `index` (sorted by id) into a new string.
 *
 * # Safety
 * `db` must be a live handle; `out` must be writable.
 */
enum ApneaStatus apnea_database_subject_id(const struct ApneaDatabase *db,
                                           size_t index,
                                           char **out);

/**
 * Screens `subject_id` against the other annotated subjects of `db`.
 * `config_json` may be NULL for defaults.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated; `out` writable.
 */
enum ApneaStatus apnea_screen_subject(const struct ApneaDatabase *db,
                                      const char *subject_id,
                                      const char *config_json,
                                      struct ApneaScreening **out);

/**
 * # Safety
 * `s` must come from [`apnea_screen_subject`] and not have been freed.
 */
void apnea_screening_free(struct ApneaScreening *s);

/**
 * Events per recording hour; NaN for NULL.
 *
 * # Safety
 * `s` must be NULL or a live screening handle.
 */
double apnea_screening_rei(const struct ApneaScreening *s);

/**
 * # Safety
 * `s` must be a live screening handle; `out` writable.
 */
enum ApneaStatus apnea_screening_severity(const struct ApneaScreening *s, enum ApneaSeverity *out);

/**
 * Number of detected events; 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live screening handle.
 */
size_t apnea_screening_event_count(const struct ApneaScreening *s);

/**
 * # Safety
 * `s` must be a live screening handle; `out` writable.
 */
enum ApneaStatus apnea_screening_event(const struct ApneaScreening *s,
                                       size_t index,
                                       struct ApneaEvent *out);

/**
 * Event-by-event score. Both arrays must be sorted and disjoint; either may
 * be NULL when its length is 0.
 *
 * # Safety
 * Arrays must hold the stated number of elements; `out` writable.
 */
enum ApneaStatus apnea_match_events(const struct ApneaSpan *detected,
                                    size_t n_detected,
                                    const struct ApneaSpan *annotated,
                                    size_t n_annotated,
                                    struct ApneaEventScore *out);

/**
 * `matrix` is 16 counts in row-major order, rows predicted and columns
 * expert severity.
 *
 * # Safety
 * `matrix` must hold 16 values; `out` writable.
 */
enum ApneaStatus apnea_severity_metrics(const uint64_t *matrix, struct ApneaSeverityMetrics *out);

/**
 * Screening statistics at the moderate cutoff.
 *
 * # Safety
 * `matrix` must hold 16 values; `out` writable.
 */
enum ApneaStatus apnea_binary_screening(const uint64_t *matrix, struct ApneaBinaryStats *out);

/**
 * Leave-one-out evaluation; writes the report as a JSON string.
 * `jobs` = 0 uses every core.
 *
 * # Safety
 * `db` must be a live handle; `config_json` NULL or NUL-terminated; `out`
 * writable. Free the result with [`apnea_string_free`].
 */
enum ApneaStatus apnea_loocv_json(const struct ApneaDatabase *db,
                                  const char *config_json,
                                  uint32_t jobs,
                                  char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APNEA_SCREEN_H */
