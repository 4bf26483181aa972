#ifndef VERIFIDE_H
#define VERIFIDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VfStatus {
  VF_STATUS_OK = 0,
  VF_STATUS_NULL_ARGUMENT = 1,
  VF_STATUS_INVALID_UTF8 = 2,
  VF_STATUS_INVALID_JSON = 3,
  VF_STATUS_INVALID_CONFIG = 4,
  VF_STATUS_PANIC = 5,
} VfStatus;

/**
 * An editor session: one engine plus protocol state.
 */
typedef struct VfSession VfSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a session. `config_json` may be null for defaults, or a JSON
 * object with the replay script's config fields (`debounceMs`,
 * `maxWorkers`, `timeoutMs`, `bounds`, `prover`, ...).
 *
 * # Safety
 * `config_json` must be null or a valid C string; `out` must be writable.
 */
enum VfStatus vf_session_new(const char *config_json, struct VfSession **out);

/**
 * Destroys a session. Null is ignored.
 *
 * # Safety
 * `session` must come from `vf_session_new` and not be used afterwards.
 */
void vf_session_free(struct VfSession *session);

/**
 * Handles one protocol request (a JSON object) and returns the response
 * object. Protocol-level problems, such as an unknown message type, are
 * reported inside the response, not as a status.
 *
 * # Safety
 * `session` must be live; `request` a valid C string; `out_json` writable.
 */
enum VfStatus vf_session_request(struct VfSession *session, const char *request, char **out_json);

/**
 * Returns the pushes produced since the previous poll, as a JSON array.
 * Also fires the debounce timer if it is due.
 *
 * # Safety
 * `session` must be live; `out_json` writable.
 */
enum VfStatus vf_session_poll(struct VfSession *session, char **out_json);

/**
 * Blocks until the session has no pending debounce or verification work,
 * or `timeout_ms` elapses. `*out_idle` tells which.
 *
 * # Safety
 * `session` must be live; `out_idle` writable.
 */
enum VfStatus vf_session_wait_idle(struct VfSession *session, uint64_t timeout_ms, bool *out_idle);

/**
 * Replays a session script (JSON) and returns the report (JSON).
 *
 * # Safety
 * `script_json` must be a valid C string; `out_json` writable.
 */
enum VfStatus vf_replay(const char *script_json, char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void vf_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library on the same thread.
 */
const char *vf_last_error(void);

/**
 * Library version as a static string.
 */
const char *vf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERIFIDE_H */
