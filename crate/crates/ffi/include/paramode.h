#ifndef PARAMODE_H
#define PARAMODE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_NUMERICAL = 3,
  PM_STATUS_CONFIG = 4,
  PM_STATUS_IO = 5,
  PM_STATUS_OUT_OF_RANGE = 6,
  PM_STATUS_PANIC = 7,
} PmStatus;

// Reflection spectrum over a probe grid.
typedef struct PmSpectrum PmSpectrum;

// Probed/partner mode pair.
typedef struct PmSystem PmSystem;

// Time-domain trace.
typedef struct PmTrace PmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread. Empty after a success.
// The pointer stays valid until the next call into this library on the same
// thread.
const char *pm_last_error(void);

// Builds a system from explicit parameters. `partner_above` is nonzero when
// the partner frame sits above the probed mode (ω̃2 − ω_Φ).
enum PmStatus pm_system_new(double omega3_shifted,
                            double omega2_shifted,
                            double kappa_tot3,
                            double kappa_tot2,
                            double kappa_ext3,
                            double g,
                            double omega_mod,
                            int32_t partner_above,
                            struct PmSystem **out);

// The reference mode 3/mode 2 pair on resonance (Δ2 = 0) with coupling `g`.
enum PmStatus pm_system_reference(double g, struct PmSystem **out);

enum PmStatus pm_system_delta2(const struct PmSystem *system, double *out);

// # Safety
// `system` must come from `pm_system_*` and not be freed twice.
void pm_system_free(struct PmSystem *system);

// Steady-state reflection coefficient at probe frequency `omega_p`.
enum PmStatus pm_reflection(const struct PmSystem *system, double omega_p, double *re, double *im);

// Sweeps the probe over `grid[0..len]`, which must be strictly increasing.
enum PmStatus pm_spectrum_sweep(const struct PmSystem *system,
                                const double *grid,
                                uintptr_t len,
                                struct PmSpectrum **out);

uintptr_t pm_spectrum_len(const struct PmSpectrum *spectrum);

enum PmStatus pm_spectrum_get(const struct PmSpectrum *spectrum,
                              uintptr_t index,
                              double *omega_p,
                              double *re,
                              double *im);

// Separation of the two deepest |r| dips, rad/s; 0 when fewer than two.
enum PmStatus pm_spectrum_dip_separation(const struct PmSpectrum *spectrum, double *out);

// # Safety
// `spectrum` must come from [`pm_spectrum_sweep`] and not be freed twice.
void pm_spectrum_free(struct PmSpectrum *spectrum);

// Integrates a Gaussian pulse (carrier `omega_p`, peak power `power_dbm`,
// centre `t0`, width `tau_d`) with the modulation on throughout
// `[t_start, t_stop]`. `dt <= 0` picks the default step.
enum PmStatus pm_integrate_pulse(const struct PmSystem *system,
                                 double omega_p,
                                 double power_dbm,
                                 double t0,
                                 double tau_d,
                                 double t_start,
                                 double t_stop,
                                 double dt,
                                 struct PmTrace **out);

uintptr_t pm_trace_len(const struct PmTrace *trace);

// Sample `index`: time, |α_out|, and the mode amplitudes a and b.
enum PmStatus pm_trace_get(const struct PmTrace *trace,
                           uintptr_t index,
                           double *t,
                           double *v_out,
                           double *a_re,
                           double *a_im,
                           double *b_re,
                           double *b_im);

// Mean spacing of |α_out| maxima inside `[window_start, window_stop]`.
enum PmStatus pm_trace_beat_period(const struct PmTrace *trace,
                                   double window_start,
                                   double window_stop,
                                   double *out);

// # Safety
// `trace` must come from [`pm_integrate_pulse`] and not be freed twice.
void pm_trace_free(struct PmTrace *trace);

// Runs the scenario in the JSON file at `config_path`, writing artifacts to
// `out_dir` (or the config's own output directory when null). `threads = 0`
// uses all cores.
//
// # Safety
// The strings must be NUL-terminated and valid for the duration of the call.
enum PmStatus pm_run_config(const char *config_path, const char *out_dir, uintptr_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARAMODE_H */
