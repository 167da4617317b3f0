#ifndef ARA_H
#define ARA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ARA_OK 0

#define ARA_ERR_NULL 1

#define ARA_ERR_UTF8 2

#define ARA_ERR_IO 3

#define ARA_ERR_MODEL 4

#define ARA_ERR_SOLVE 5

#define ARA_ERR_SESSION 6

#define ARA_ERR_NOT_FOUND 7

#define ARA_ERR_ARGUMENT 8

#define ARA_ERR_PANIC 9

#define ARA_MODE_ATTACK 0

#define ARA_MODE_CONSEQUENCE 1

#define ARA_MODE_MIXED 2

/**
 * Observation kind: use the session's mode.
 */
#define ARA_KIND_DEFAULT -1

#define ARA_KIND_ATTACK 0

#define ARA_KIND_CONSEQUENCE 1

#define ARA_TREE_TEXT 0

#define ARA_TREE_DOT 1

#define ARA_TREE_STRUCTURED 2

/**
 * A validated model and the hash of its source bytes.
 */
typedef struct AraModel AraModel;

typedef struct AraSession AraSession;

typedef struct AraSolution AraSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *ara_last_error(void);

/**
 * # Safety
 * `s` must come from this library, or be NULL.
 */
void ara_string_free(char *s);

/**
 * Parses and validates a model document.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `out` must be writable.
 */
int32_t ara_model_load(const uint8_t *bytes, size_t len, struct AraModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t ara_model_load_file(const char *path, struct AraModel **out);

/**
 * Hex SHA-256 of the bytes the model was loaded from.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
int32_t ara_model_hash(const struct AraModel *model, char **out);

/**
 * # Safety
 * `model` must come from `ara_model_load*`, or be NULL.
 */
void ara_model_free(struct AraModel *model);

/**
 * Solves every stage. `bins` 0 and a negative or NaN `tie_eps` select
 * the defaults.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
int32_t ara_solve(const struct AraModel *model,
                  uint32_t bins,
                  double tie_eps,
                  struct AraSolution **out);

/**
 * # Safety
 * `solution` must come from `ara_solve`, or be NULL.
 */
void ara_solution_free(struct AraSolution *solution);

/**
 * The solution document as JSON.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
int32_t ara_solution_json(const struct AraSolution *solution, char **out);

/**
 * Defender's expected utility along the optimal path.
 *
 * # Safety
 * `solution` must be a live handle; `out` must be writable.
 */
int32_t ara_solution_defender_eu(const struct AraSolution *solution, double *out);

/**
 * A stage's rolled-back tree in one of the `ARA_TREE_*` formats.
 *
 * # Safety
 * `solution` must be a live handle; `stage` a NUL-terminated string;
 * `out` writable.
 */
int32_t ara_solution_tree(const struct AraSolution *solution,
                          const char *stage,
                          int32_t format,
                          char **out);

/**
 * Opens a session and solves it.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
int32_t ara_session_open(const struct AraModel *model,
                         int32_t mode_code,
                         uint32_t bins,
                         double tie_eps,
                         struct AraSession **out);

/**
 * Rebuilds a session from its JSON-lines event log.
 *
 * # Safety
 * `log` must be a NUL-terminated string; `out` must be writable.
 */
int32_t ara_session_replay(const char *log, struct AraSession **out);

/**
 * # Safety
 * `session` must come from `ara_session_open`/`replay`, or be NULL.
 */
void ara_session_free(struct AraSession *session);

/**
 * Commits the defender's decision at the current stage. On failure the
 * session is unchanged.
 *
 * # Safety
 * `session` must be a live handle; strings NUL-terminated.
 */
int32_t ara_session_commit(struct AraSession *session, const char *stage, const char *state);

/**
 * Records an attacker stage. `kind` is an `ARA_KIND_*` code.
 *
 * # Safety
 * `session` must be a live handle; strings NUL-terminated.
 */
int32_t ara_session_observe(struct AraSession *session,
                            const char *stage,
                            int32_t kind,
                            const char *state);

/**
 * The current recommendation as JSON.
 *
 * # Safety
 * `session` must be a live handle; `out` must be writable.
 */
int32_t ara_session_recommendation(const struct AraSession *session, char **out);

/**
 * The session's event log as JSON lines.
 *
 * # Safety
 * `session` must be a live handle; `out` must be writable.
 */
int32_t ara_session_log(const struct AraSession *session, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARA_H */
