#ifndef OVERTAKE_PLANNER_H
#define OVERTAKE_PLANNER_H

/* Generated by cbindgen from the overtake-planner-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes mirroring the command-line exit codes.
 */
typedef enum OtpStatus {
  OtpStatus_Ok = 0,
  OtpStatus_Failure = 1,
  OtpStatus_InvalidScenario = 2,
  OtpStatus_NoFeasibleTrajectory = 3,
  OtpStatus_NullArgument = 5,
} OtpStatus;

/*
 Opaque planning result handle.
 */
typedef struct OtpPlan OtpPlan;

/*
 Vehicle state sample of the selected trajectory.
 */
typedef struct OtpState {
  double x;
  double y;
  double speed;
  double heading;
} OtpState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Plans a scenario loaded from a JSON file. A negative `seed` keeps the
 scenario's own seed. On success writes a handle the caller must free.

 # Safety
 `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum OtpStatus otp_plan_file(const char *path, int64_t seed, struct OtpPlan **out);

/*
 Plans a scenario given as JSON text.

 # Safety
 `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum OtpStatus otp_plan_json(const char *json, int64_t seed, struct OtpPlan **out);

/*
 Releases a planning handle.

 # Safety
 `handle` must come from a successful plan call and not be freed twice.
 */
void otp_plan_free(struct OtpPlan *handle);

/*
 Number of distinct topology classes found.

 # Safety
 `handle` must be a valid planning handle.
 */
int otp_plan_skeleton_count(const struct OtpPlan *handle);

/*
 Number of evaluated candidates across the ratio sweep.

 # Safety
 `handle` must be a valid planning handle.
 */
int otp_plan_candidate_count(const struct OtpPlan *handle);

/*
 Whether a collision-free, high-feasibility trajectory was selected.

 # Safety
 `handle` must be a valid planning handle.
 */
int otp_plan_has_selection(const struct OtpPlan *handle);

/*
 Selected candidate's metrics record as JSON (null when nothing passed the
 screens). Free with [`otp_string_free`].

 # Safety
 `handle` must be a valid planning handle.
 */
char *otp_plan_selected_json(const struct OtpPlan *handle);

/*
 All candidate records (reports, errors, coefficients) as a JSON array.
 Free with [`otp_string_free`].

 # Safety
 `handle` must be a valid planning handle.
 */
char *otp_plan_candidates_json(const struct OtpPlan *handle);

/*
 Samples the selected trajectory at time `t` (clamped to its duration).

 # Safety
 `handle` must be a valid planning handle and `out` a valid pointer.
 */
enum OtpStatus otp_plan_sample_selected(const struct OtpPlan *handle,
                                        double t,
                                        struct OtpState *out);

/*
 Duration of the selected trajectory in seconds, or a negative value when
 nothing was selected.

 # Safety
 `handle` must be a valid planning handle.
 */
double otp_plan_selected_duration(const struct OtpPlan *handle);

/*
 Last error message of the current thread. Free with [`otp_string_free`].
 */
char *otp_last_error(void);

/*
 Releases a string returned by this library.

 # Safety
 `text` must come from this library and not be freed twice.
 */
void otp_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OVERTAKE_PLANNER_H */
