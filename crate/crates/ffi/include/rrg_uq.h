#ifndef RRG_UQ_H
#define RRG_UQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RrgLabel {
  RRG_LABEL_ANAT_DP = 0,
  RRG_LABEL_OBS_DP = 1,
  RRG_LABEL_OBS_U = 2,
  RRG_LABEL_OBS_DA = 3,
} RrgLabel;

typedef enum RrgStatus {
  RRG_STATUS_OK = 0,
  RRG_STATUS_NULL_POINTER = 1,
  RRG_STATUS_INVALID_UTF8 = 2,
  RRG_STATUS_INVALID_ARGUMENT = 3,
  RRG_STATUS_DEGENERATE_INPUT = 4,
  RRG_STATUS_INSUFFICIENT_DATA = 5,
  RRG_STATUS_PANIC = 6,
} RrgStatus;

/**
 * Opaque set of entity-label pairs.
 */
typedef struct RrgLabelSet RrgLabelSet;

/**
 * Opaque lexicon handle.
 */
typedef struct RrgLexicon RrgLexicon;

typedef struct RrgEntityF1 {
  double precision;
  double recall;
  double f1;
} RrgEntityF1;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy of the last error raised on this thread, or null. Free with
 * [`rrg_string_free`].
 */
char *rrg_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rrg_string_free(char *s);

/**
 * The bundled radiology lexicon. Never null.
 */
struct RrgLexicon *rrg_lexicon_default(void);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out_lexicon` must be writable.
 */
enum RrgStatus rrg_lexicon_from_json(const char *json, struct RrgLexicon **out_lexicon);

/**
 * # Safety
 * `lexicon` must come from this library and not have been freed.
 */
void rrg_lexicon_free(struct RrgLexicon *lexicon);

/**
 * An empty label set. Never null.
 */
struct RrgLabelSet *rrg_label_set_new(void);

/**
 * # Safety
 * `set` must be a live handle; `entity` a NUL-terminated string.
 */
enum RrgStatus rrg_label_set_insert(struct RrgLabelSet *set,
                                    const char *entity,
                                    enum RrgLabel label);

/**
 * Number of distinct pairs; 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t rrg_label_set_len(const struct RrgLabelSet *set);

/**
 * The set as a JSON array of `{"entity", "label"}` objects. Free the string
 * with [`rrg_string_free`].
 *
 * # Safety
 * `set` must be a live handle; `out_json` must be writable.
 */
enum RrgStatus rrg_label_set_to_json(const struct RrgLabelSet *set, char **out_json);

/**
 * # Safety
 * `set` must come from this library and not have been freed.
 */
void rrg_label_set_free(struct RrgLabelSet *set);

/**
 * Extracts entity-label pairs from `input` into a new set.
 *
 * # Safety
 * `lexicon` must be a live handle, `input` NUL-terminated, `out_set` writable.
 */
enum RrgStatus rrg_extract(const struct RrgLexicon *lexicon,
                           const char *input,
                           struct RrgLabelSet **out_set);

/**
 * One minus the mean of `n` pairwise scores.
 *
 * # Safety
 * `scores` must point to `n` doubles; `out_u` must be writable.
 */
enum RrgStatus rrg_report_vro(const double *scores, size_t n, double *out_u);

/**
 * Sentence uncertainty against `n` sample sets.
 *
 * # Safety
 * `samples` must point to `n` live handles; out-pointers must be writable.
 */
enum RrgStatus rrg_sentence_vro(const struct RrgLabelSet *sentence,
                                const struct RrgLabelSet *const *samples,
                                size_t n,
                                double *out_u,
                                bool *out_empty_parse);

/**
 * Fraction of the sentence's pairs found in the reference; -1 when the
 * sentence is empty.
 *
 * # Safety
 * Both handles must be live; `out_p` must be writable.
 */
enum RrgStatus rrg_sentence_precision(const struct RrgLabelSet *sentence,
                                      const struct RrgLabelSet *reference,
                                      double *out_p);

/**
 * # Safety
 * Both handles must be live; `out_score` must be writable.
 */
enum RrgStatus rrg_entity_f1(const struct RrgLabelSet *pred,
                             const struct RrgLabelSet *reference,
                             struct RrgEntityF1 *out_score);

/**
 * GREEN score from the matched count and six error counts.
 *
 * # Safety
 * `errors` must point to 6 integers; out-pointers must be writable.
 */
enum RrgStatus rrg_green_from_counts(uint64_t matched,
                                     const uint64_t *errors,
                                     double *out_score,
                                     bool *out_degenerate);

/**
 * ROUGE-L F-measure between two texts.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated; `out_score` must be writable.
 */
enum RrgStatus rrg_lexical_similarity(const char *a, const char *b, double *out_score);

/**
 * # Safety
 * `u` and `f` must each point to `n` doubles; `out_r` must be writable.
 */
enum RrgStatus rrg_pearson(const double *u, const double *f, size_t n, double *out_r);

/**
 * # Safety
 * `u` and `f` must each point to `n` doubles; `out_rce` must be writable.
 */
enum RrgStatus rrg_empirical_rce(const double *u,
                                 const double *f,
                                 size_t n,
                                 size_t bins,
                                 double *out_rce);

/**
 * Counts prior-exam substring matches in `input`.
 *
 * # Safety
 * `substrings` must point to `n` NUL-terminated strings; out-pointers must
 * be writable.
 */
enum RrgStatus rrg_detect_priors(const char *input,
                                 const char *const *substrings,
                                 size_t n,
                                 bool *out_flagged,
                                 size_t *out_match_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RRG_UQ_H */
