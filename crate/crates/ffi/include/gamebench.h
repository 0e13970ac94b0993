#ifndef GAMEBENCH_H
#define GAMEBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 A loaded catalog of games, tasks and profiles.
 */
typedef struct GbRegistry GbRegistry;

/*
 One run in progress.
 */
typedef struct GbRun GbRun;

typedef int32_t GbStatus;

#define GB_OK 0

/*
 A required pointer argument was null.
 */
#define GB_ERR_NULL 1

/*
 A string argument was not valid UTF-8.
 */
#define GB_ERR_UTF8 2

/*
 A JSON argument did not parse or did not match the expected shape.
 */
#define GB_ERR_JSON 3

/*
 Registry or preset lookup failed.
 */
#define GB_ERR_CONFIG 4

/*
 The run has already finished; no more steps are accepted.
 */
#define GB_ERR_FINISHED 5

/*
 The run itself failed (kernel, agent or I/O error).
 */
#define GB_ERR_RUN 6

/*
 A panic was caught at the boundary.
 */
#define GB_ERR_PANIC 7

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. The pointer
 stays valid until the next call on the same thread.
 */
const char *gb_last_error(void);

/*
 # Safety
 `s` must be null or a string returned by this library.
 */
void gb_string_free(char *s);

/*
 Loads a registry. A null `dir` selects the bundled catalog.

 # Safety
 `dir` must be null or a NUL-terminated string; `out` must be writable.
 */
GbStatus gb_registry_open(const char *dir, struct GbRegistry **out);

/*
 # Safety
 `reg` must be null or a handle from `gb_registry_open`, not yet freed.
 */
void gb_registry_free(struct GbRegistry *reg);

/*
 Starts a run of `preset` (`game+task+model`). When `use_repeat` is
 nonzero the game seed is mixed from the task seed and `repeat`;
 otherwise `seed` is used as is.

 # Safety
 `reg` must be a live registry handle, `preset` a NUL-terminated
 string and `out` writable.
 */
GbStatus gb_run_open(const struct GbRegistry *reg,
                     const char *preset,
                     uint64_t seed,
                     int32_t use_repeat,
                     uint32_t repeat,
                     struct GbRun **out);

/*
 # Safety
 `run` must be null or a handle from `gb_run_open`, not yet freed.
 */
void gb_run_free(struct GbRun *run);

/*
 Applies one action, given as JSON (for example
 `{"type":"press_key","key":"ArrowLeft"}`), and writes the trajectory
 entry for the step as canonical JSON. Actions outside the game's
 control space still consume a step and are scored as invalid.

 # Safety
 `run` must be a live run handle, `action_json` a NUL-terminated string
 and `out` null or writable.
 */
GbStatus gb_run_step(const struct GbRun *run, const char *action_json, char **out);

/*
 Plays the rest of the run with the profile's own agent.

 # Safety
 `run` must be a live run handle.
 */
GbStatus gb_run_play(const struct GbRun *run);

/*
 Current state snapshot as canonical JSON.

 # Safety
 `run` must be a live run handle and `out` writable.
 */
GbStatus gb_run_state_json(const struct GbRun *run, char **out);

/*
 The run record as canonical JSON.

 # Safety
 `run` must be a live run handle and `out` writable.
 */
GbStatus gb_run_record_json(const struct GbRun *run, char **out);

/*
 Hex digest at the head of the state hash chain.

 # Safety
 `run` must be a live run handle and `out` writable.
 */
GbStatus gb_run_chain(const struct GbRun *run, char **out);

/*
 1 when finished, 0 while running, negative status on error.

 # Safety
 `run` must be null or a live run handle.
 */
int32_t gb_run_is_finished(const struct GbRun *run);

/*
 Rewrites any JSON document in canonical form.

 # Safety
 `json` must be a NUL-terminated string and `out` writable.
 */
GbStatus gb_canonicalize(const char *json, char **out);

/*
 Seed for repeat `k` of a task with base seed `seed`.
 */
uint64_t gb_mix_seed(uint64_t seed, uint64_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAMEBENCH_H */
