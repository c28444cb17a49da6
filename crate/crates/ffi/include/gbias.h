#ifndef GBIAS_H
#define GBIAS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GBIAS_GROUP_MALE 0

#define GBIAS_GROUP_FEMALE 1

#define GBIAS_GROUP_NONE 2

/**
 * Result code of every fallible call.
 */
typedef enum {
  GBIAS_STATUS_OK = 0,
  GBIAS_STATUS_NULL_POINTER = 1,
  GBIAS_STATUS_INVALID_UTF8 = 2,
  GBIAS_STATUS_INVALID_ARGUMENT = 3,
  GBIAS_STATUS_IO = 4,
  GBIAS_STATUS_PARSE = 5,
  /**
   * The data admits no answer, e.g. AUC over a single class.
   */
  GBIAS_STATUS_UNDEFINED = 6,
  GBIAS_STATUS_BUFFER_TOO_SMALL = 7,
  GBIAS_STATUS_PANIC = 8,
} GbiasStatus;

/**
 * A trained classifier together with its vocabulary.
 */
typedef struct GbiasModel GbiasModel;

/**
 * A gender swap word list.
 */
typedef struct GbiasSwapLexicon GbiasSwapLexicon;

/**
 * A generated, gender-paired test set. Samples alternate male, female.
 */
typedef struct GbiasTestSet GbiasTestSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call on the same thread.
 */
const char *gbias_last_error_message(void);

/**
 * Static description of a status code.
 */
const char *gbias_status_string(GbiasStatus status);

/**
 * Library version as a NUL-terminated string.
 */
const char *gbias_version(void);

/**
 * ROC AUC of `n` scores against 0/1 labels.
 */
GbiasStatus gbias_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Threshold at which false positive and false negative rates are closest.
 */
GbiasStatus gbias_eer_threshold(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * False negative and false positive equality differences at `threshold`.
 * `groups` holds GBIAS_GROUP_* codes; every identity group needs both
 * classes.
 */
GbiasStatus gbias_equality_differences(const double *scores,
                                       const uint8_t *labels,
                                       const int32_t *groups,
                                       size_t n,
                                       double threshold,
                                       double *out_fned,
                                       double *out_fped);

/**
 * The built-in swap list.
 */
GbiasStatus gbias_swap_lexicon_new_default(GbiasSwapLexicon **out);

/**
 * Reads a swap list file.
 */
GbiasStatus gbias_swap_lexicon_load(const char *path, GbiasSwapLexicon **out);

void gbias_swap_lexicon_free(GbiasSwapLexicon *lexicon);

/**
 * Writes `text` with every gendered word swapped into `buf`.
 *
 * `*out_len` always receives the size needed, NUL included. When
 * `buf_len` is smaller, nothing is written and BufferTooSmall is returned;
 * `buf` may be NULL in that case.
 */
GbiasStatus gbias_gender_swap(const GbiasSwapLexicon *lexicon,
                              const char *text,
                              char *buf,
                              size_t buf_len,
                              size_t *out_len);

/**
 * Generates the paired test set. Each path may be NULL for the built-in
 * templates, fill words or identity pairs.
 */
GbiasStatus gbias_test_set_generate(const char *templates,
                                    const char *fill,
                                    const char *identities,
                                    GbiasTestSet **out);

void gbias_test_set_free(GbiasTestSet *set);

/**
 * Number of samples, twice the number of pairs. 0 for NULL.
 */
size_t gbias_test_set_len(const GbiasTestSet *set);

size_t gbias_test_set_pair_count(const GbiasTestSet *set);

/**
 * Sample `index`. `*text` stays valid until the set is freed. Any output
 * pointer may be NULL.
 */
GbiasStatus gbias_test_set_get(const GbiasTestSet *set,
                               size_t index,
                               const char **text,
                               uint8_t *label,
                               int32_t *group);

/**
 * Loads a model directory written by `gbias train` or `gbias finetune`.
 */
GbiasStatus gbias_model_load(const char *dir, GbiasModel **out);

void gbias_model_free(GbiasModel *model);

/**
 * Probability that `text` is abusive.
 */
GbiasStatus gbias_model_predict(const GbiasModel *model, const char *text, double *out);

/**
 * Scores the test set and reports its AUC and the equality differences at
 * the set's own equal-error-rate threshold.
 */
GbiasStatus gbias_model_measure_bias(const GbiasModel *model,
                                     const GbiasTestSet *set,
                                     double *out_auc,
                                     double *out_fned,
                                     double *out_fped);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBIAS_H */
