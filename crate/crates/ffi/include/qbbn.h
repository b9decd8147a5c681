#ifndef QBBN_H
#define QBBN_H

/* Generated by cbindgen at build time. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QbbnStatus {
  QBBN_STATUS_OK = 0,
  QBBN_STATUS_NULL_POINTER = 1,
  QBBN_STATUS_INVALID_UTF8 = 2,
  QBBN_STATUS_IO = 3,
  QBBN_STATUS_PARSE = 4,
  QBBN_STATUS_UNKNOWN_NODE = 5,
  QBBN_STATUS_CONTRADICTION = 6,
  QBBN_STATUS_NUMERIC = 7,
  QBBN_STATUS_INVALID_ARGUMENT = 8,
  QBBN_STATUS_INTERNAL = 99,
} QbbnStatus;

/**
 * A loaded knowledge base with its weights.
 */
typedef struct QbbnKb QbbnKb;

/**
 * A compiled network plus its belief state.
 */
typedef struct QbbnSession QbbnSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a knowledge base record from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum QbbnStatus qbbn_kb_load(const char *path, struct QbbnKb **out);

/**
 * Parses a knowledge base record from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum QbbnStatus qbbn_kb_load_json(const char *json, struct QbbnKb **out);

/**
 * # Safety
 * `kb` must come from `qbbn_kb_load*` and not be freed twice. Null is a no-op.
 */
void qbbn_kb_free(struct QbbnKb *kb);

/**
 * Builds the network for `targets` (canonical proposition keys) and opens a
 * session on it. With `n_targets == 0` the targets stored in the record are
 * used. `analytic` selects the record's hand-specified factors instead of the
 * learned weights. The session does not borrow `kb`.
 *
 * # Safety
 * `kb` must be a live handle, `targets` must point to `n_targets` strings
 * (or be null when `n_targets` is 0) and `out` must be writable.
 */
enum QbbnStatus qbbn_session_new(const struct QbbnKb *kb,
                                 const char *const *targets,
                                 size_t n_targets,
                                 bool analytic,
                                 struct QbbnSession **out);

/**
 * # Safety
 * `session` must come from `qbbn_session_new` and not be freed twice.
 */
void qbbn_session_free(struct QbbnSession *session);

/**
 * Clamps the node with canonical key `key` to `value`.
 *
 * # Safety
 * `session` must be live and `key` NUL-terminated.
 */
enum QbbnStatus qbbn_session_set_evidence(struct QbbnSession *session, const char *key, bool value);

/**
 * Runs `rounds` fan-outs.
 *
 * # Safety
 * `session` must be live.
 */
enum QbbnStatus qbbn_session_run(struct QbbnSession *session, size_t rounds);

/**
 * Writes `P(key = 1)` to `out`.
 *
 * # Safety
 * `session` must be live, `key` NUL-terminated and `out` writable.
 */
enum QbbnStatus qbbn_session_marginal(const struct QbbnSession *session,
                                      const char *key,
                                      double *out);

/**
 * Number of nodes, proposition and group, or 0 for a null handle.
 *
 * # Safety
 * `session` must be live or null.
 */
size_t qbbn_session_node_count(const struct QbbnSession *session);

/**
 * Key of the node at topological position `index`, or null when out of
 * range. Free with `qbbn_string_free`.
 *
 * # Safety
 * `session` must be live or null.
 */
char *qbbn_session_node_key(const struct QbbnSession *session, size_t index);

/**
 * The trace so far as CSV. Free with `qbbn_string_free`.
 *
 * # Safety
 * `session` must be live or null.
 */
char *qbbn_session_trace_csv(const struct QbbnSession *session);

/**
 * Message of the last failed call on this thread, or null. Free with
 * `qbbn_string_free`.
 */
char *qbbn_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void qbbn_string_free(char *s);

/**
 * Static version string; do not free.
 */
const char *qbbn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBBN_H */
