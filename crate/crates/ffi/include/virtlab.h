#ifndef VIRTLAB_H
#define VIRTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a library call.
typedef enum VlStatus {
  VL_STATUS_OK = 0,
  // A required pointer argument was null.
  VL_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  VL_STATUS_INVALID_UTF8 = 2,
  // Script, equation or command text did not parse.
  VL_STATUS_PARSE_ERROR = 3,
  VL_STATUS_UNKNOWN_SCENE = 4,
  // The script or command named something the bench does not have, or
  // was not allowed in the current state.
  VL_STATUS_REJECTED = 5,
  // The script ran but at least one assert failed.
  VL_STATUS_ASSERT_FAILED = 6,
  // The equation parsed but is not balanced.
  VL_STATUS_UNBALANCED = 7,
  // The simulation hit a non-finite state.
  VL_STATUS_SIMULATION_ERROR = 8,
  // A bug in the library; the handle should not be used again.
  VL_STATUS_PANIC = 9,
} VlStatus;

// Opaque simulation handle.
typedef struct VlWorld VlWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a stock scene (`"brown_ring"` or `"single_bottle"`).
//
// # Safety
// `scene` is a NUL-terminated string; `out` is valid for a pointer write.
enum VlStatus vl_world_new(const char *scene, uint64_t seed, struct VlWorld **out);

// Releases a world. Null is ignored.
//
// # Safety
// `world` is null or a handle from [`vl_world_new`] not yet freed.
void vl_world_free(struct VlWorld *world);

// Advances the world by `ticks` ticks.
//
// # Safety
// `world` is a live handle.
enum VlStatus vl_world_step(struct VlWorld *world, uint64_t ticks);

// Current tick, or 0 for a null handle.
//
// # Safety
// `world` is null or a live handle.
uint64_t vl_world_tick(const struct VlWorld *world);

// Writes the 64-character hex digest of the world state to `out`.
//
// # Safety
// `world` is a live handle; `out` is valid for a pointer write.
enum VlStatus vl_world_digest(const struct VlWorld *world, char **out);

// Writes a JSON snapshot of the world to `out`.
//
// # Safety
// `world` is a live handle; `out` is valid for a pointer write.
enum VlStatus vl_world_snapshot_json(const struct VlWorld *world, char **out);

// Applies one session command at the current tick without advancing
// time. `command` is either a full `cmd` message or just its verb object,
// e.g. `{"verb":"grab","name":"bottle_feso4"}`.
//
// # Safety
// `world` is a live handle; `command` is a NUL-terminated string.
enum VlStatus vl_world_apply_command(struct VlWorld *world, const char *command);

// Runs a lab script on the world and writes the JSON report to
// `report_out`. Returns [`VlStatus::AssertFailed`] (with the report still
// written) when an assert failed.
//
// # Safety
// `world` is a live handle; `script` is a NUL-terminated string;
// `report_out` is null or valid for a pointer write.
enum VlStatus vl_world_run_script(struct VlWorld *world, const char *script, char **report_out);

// Checks an equation such as `"2H2 + O2 -> 2H2O"`. Returns
// [`VlStatus::Ok`] when balanced and [`VlStatus::Unbalanced`] when not;
// the per-element tally is written to `tally_out` if it is not null.
//
// # Safety
// `equation` is a NUL-terminated string; `tally_out` is null or valid for
// a pointer write.
enum VlStatus vl_check_balance(const char *equation, char **tally_out);

// Description of the last failure on this thread; empty after a success.
// The pointer stays valid until the next call into the library on this
// thread and must not be freed.
const char *vl_last_error_message(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` is null or a string from this library not yet freed.
void vl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIRTLAB_H */
