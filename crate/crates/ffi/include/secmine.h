#ifndef SECMINE_H
#define SECMINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SecmineStatus {
  SECMINE_STATUS_OK = 0,
  SECMINE_STATUS_NULL_ARGUMENT = 1,
  SECMINE_STATUS_INVALID_UTF8 = 2,
  SECMINE_STATUS_PARSE = 3,
  SECMINE_STATUS_IO = 4,
  SECMINE_STATUS_REPOSITORY = 5,
  SECMINE_STATUS_INVALID_ARGUMENT = 6,
  SECMINE_STATUS_PANIC = 7,
} SecmineStatus;

typedef enum SecmineSourceKind {
  SECMINE_SOURCE_KIND_COMMENT = 0,
  SECMINE_SOURCE_KIND_COMMIT_MESSAGE = 1,
  SECMINE_SOURCE_KIND_ISSUE = 2,
} SecmineSourceKind;

/**
 * Opaque lexicon handle.
 */
typedef struct SecmineLexicon SecmineLexicon;

/**
 * Removed and retained counts of one lifetime bucket.
 */
typedef struct SecmineBucketCounts {
  size_t k;
  size_t removed;
  size_t retained;
} SecmineBucketCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *secmine_last_error(void);

/**
 * Library version as a static string.
 */
const char *secmine_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void secmine_string_free(char *s);

/**
 * The bundled lexicon.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SecmineStatus secmine_lexicon_default(struct SecmineLexicon **out);

/**
 * Parses lexicon text in the tab-separated lexicon format.
 *
 * # Safety
 * `text` must be a NUL-terminated string, `out` a valid pointer.
 */
enum SecmineStatus secmine_lexicon_parse(const char *text, struct SecmineLexicon **out);

/**
 * Loads a lexicon file.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `out` a valid pointer.
 */
enum SecmineStatus secmine_lexicon_load(const char *path, struct SecmineLexicon **out);

/**
 * # Safety
 * `lexicon` must come from this library and not be freed twice. Null is
 * ignored.
 */
void secmine_lexicon_free(struct SecmineLexicon *lexicon);

/**
 * Number of phrases, 0 for null.
 *
 * # Safety
 * `lexicon` must be null or a live handle.
 */
size_t secmine_lexicon_len(const struct SecmineLexicon *lexicon);

/**
 * Matches `text` and writes a JSON array of matches (phrase, byte offsets)
 * to `out_json`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SecmineStatus secmine_match_text(const struct SecmineLexicon *lexicon,
                                      const char *text,
                                      enum SecmineSourceKind source_kind,
                                      const char *document_id,
                                      char **out_json);

/**
 * Extracts the comments of a file, choosing the language by the
 * extension of `path`, and writes a JSON array of normalized comments.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SecmineStatus secmine_extract_comments(const char *content, const char *path, char **out_json);

/**
 * Cochran sample size with finite-population correction.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SecmineStatus secmine_required_sample_size(uint64_t population,
                                                double confidence,
                                                double margin,
                                                double proportion,
                                                uint64_t *out);

/**
 * Breaking point of a survival table given as raw bucket counts.
 * `*out_present` is false when the removed share never drops below 50%.
 *
 * # Safety
 * `buckets` must point to `len` elements (or be null with `len == 0`);
 * the out-pointers must be valid.
 */
enum SecmineStatus secmine_breaking_point(const struct SecmineBucketCounts *buckets,
                                          size_t len,
                                          double *out_value,
                                          bool *out_present);

/**
 * Indicator comments introduced and removed between two revisions, as a
 * JSON document.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SecmineStatus secmine_diff_indicators(const char *repo_path,
                                           const char *base,
                                           const char *head,
                                           const struct SecmineLexicon *lexicon,
                                           char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SECMINE_H */
