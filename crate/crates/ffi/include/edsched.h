#ifndef EDSCHED_H
#define EDSCHED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every `eds_*` call.
 */
typedef enum EdsStatus {
  EDS_STATUS_OK = 0,
  EDS_STATUS_NULL_POINTER = 1,
  EDS_STATUS_INVALID_UTF8 = 2,
  EDS_STATUS_IO = 3,
  EDS_STATUS_PARSE = 4,
  EDS_STATUS_VALIDATION = 5,
  EDS_STATUS_UNKNOWN_VOLTAGE = 6,
  EDS_STATUS_MISSING_PROFILE = 7,
  EDS_STATUS_UNTILEABLE = 8,
  EDS_STATUS_NO_FEASIBLE_MODE = 9,
  EDS_STATUS_NO_VALID_CONFIGURATION = 10,
  EDS_STATUS_INFEASIBLE_DEADLINE = 11,
  EDS_STATUS_DEGENERATE_MEASUREMENT = 12,
  EDS_STATUS_DIVISION_BY_ZERO = 13,
  EDS_STATUS_UNKNOWN_REFERENCE = 14,
  EDS_STATUS_INVALID_ARGUMENT = 15,
  EDS_STATUS_OUT_OF_RANGE = 16,
  EDS_STATUS_PANIC = 99,
} EdsStatus;

/**
 * A loaded workload, platform and profile set with a deadline.
 */
typedef struct EdsProblem EdsProblem;

/**
 * A computed schedule with its energy report.
 */
typedef struct EdsSchedule EdsSchedule;

/**
 * One kernel's configuration. `mode`: 0 untiled, 1 single buffer, 2 double buffer.
 */
typedef struct EdsAssignment {
  size_t kernel_id;
  size_t pe_index;
  double voltage_v;
  double frequency_hz;
  uint32_t mode;
  uint64_t n_tiles;
  uint64_t cycles;
  double time_s;
  double power_w;
  double energy_j;
} EdsAssignment;

typedef struct EdsReport {
  double deadline_s;
  double active_time_s;
  double sleep_time_s;
  double active_energy_j;
  double sleep_energy_j;
  double total_energy_j;
} EdsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `eds_*` call on the same thread.
 */
const char *eds_last_error_message(void);

/**
 * Loads a problem from three JSON files. `deadline_s` is in seconds.
 *
 * # Safety
 * Paths must be valid NUL-terminated strings and `out` a valid pointer.
 */
enum EdsStatus eds_problem_from_files(const char *workload_path,
                                      const char *platform_path,
                                      const char *profiles_path,
                                      double deadline_s,
                                      struct EdsProblem **out);

/**
 * Builds a problem from three JSON documents.
 *
 * # Safety
 * Strings must be valid NUL-terminated strings and `out` a valid pointer.
 */
enum EdsStatus eds_problem_from_json(const char *workload_json,
                                     const char *platform_json,
                                     const char *profiles_json,
                                     double deadline_s,
                                     struct EdsProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from `eds_problem_from_*` not yet freed.
 */
void eds_problem_free(struct EdsProblem *p);

/**
 * # Safety
 * `p` must be a live problem handle.
 */
enum EdsStatus eds_problem_set_deadline(struct EdsProblem *p, double deadline_s);

/**
 * Sets the tile overhead, V-F switch cycles and V-F switch energy (J).
 *
 * # Safety
 * `p` must be a live problem handle.
 */
enum EdsStatus eds_problem_set_options(struct EdsProblem *p,
                                       uint64_t tile_overhead_cycles,
                                       uint64_t vf_switch_cycles,
                                       double vf_switch_energy_j);

/**
 * Maximum frequency (Hz) at a listed voltage.
 *
 * # Safety
 * `p` and `out_hz` must be valid pointers.
 */
enum EdsStatus eds_max_frequency(const struct EdsProblem *p, double voltage_v, double *out_hz);

/**
 * Minimum-energy schedule meeting the problem's deadline.
 *
 * # Safety
 * `p` must be a live problem handle and `out` a valid pointer.
 */
enum EdsStatus eds_solve(const struct EdsProblem *p, struct EdsSchedule **out);

/**
 * Runs a named strategy (`cpu_maxvf`, `static_accel_maxvf`,
 * `static_accel_appdvfs`, `coarse_appdvfs`, `medea`). `groups_json` may be
 * null for one group per kernel.
 *
 * # Safety
 * `p` must be a live problem handle, strings valid or (for groups) null,
 * and `out` a valid pointer.
 */
enum EdsStatus eds_run_strategy(const struct EdsProblem *p,
                                const char *strategy,
                                const char *groups_json,
                                struct EdsSchedule **out);

/**
 * Runs a named ablation (`none`, `no_kernel_dvfs`, `no_adaptive_tiling`,
 * `no_kernel_sched`).
 *
 * # Safety
 * As for [`eds_run_strategy`].
 */
enum EdsStatus eds_run_ablation(const struct EdsProblem *p,
                                const char *ablation,
                                const char *groups_json,
                                struct EdsSchedule **out);

/**
 * # Safety
 * `s` must be null or a live schedule handle.
 */
void eds_schedule_free(struct EdsSchedule *s);

/**
 * Number of assignments; 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live schedule handle.
 */
size_t eds_schedule_len(const struct EdsSchedule *s);

/**
 * # Safety
 * `p` and `s` must be live handles and `out` a valid pointer.
 */
enum EdsStatus eds_schedule_assignment(const struct EdsProblem *p,
                                       const struct EdsSchedule *s,
                                       size_t index,
                                       struct EdsAssignment *out);

/**
 * # Safety
 * `s` must be a live schedule handle and `out` a valid pointer.
 */
enum EdsStatus eds_schedule_report(const struct EdsSchedule *s, struct EdsReport *out);

/**
 * Serializes a schedule in the schedule-file format. Release the string
 * with [`eds_string_free`].
 *
 * # Safety
 * `s` must be a live schedule handle and `out` a valid pointer.
 */
enum EdsStatus eds_schedule_to_json(const struct EdsSchedule *s, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void eds_string_free(char *s);

/**
 * Checks a schedule document against the problem's models. Sets
 * `out_pass` and the number of mismatching fields; details go to the
 * last-error message.
 *
 * # Safety
 * `p` must be a live problem handle, `schedule_json` a valid string and the
 * out pointers valid.
 */
enum EdsStatus eds_validate_json(const struct EdsProblem *p,
                                 const char *schedule_json,
                                 bool *out_pass,
                                 size_t *out_mismatches);

/**
 * Percentage saved by a feature: (e_without - e_full) / e_without * 100.
 *
 * # Safety
 * `out_pct` must be a valid pointer.
 */
enum EdsStatus eds_savings(double e_without, double e_full, double *out_pct);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDSCHED_H */
