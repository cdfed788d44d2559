#ifndef JTWPD_H
#define JTWPD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum JtwpdStatus {
  JtwpdStatus_Ok = 0,
  JtwpdStatus_NullPointer = 1,
  /**
   * Bad argument, configuration or parse failure.
   */
  JtwpdStatus_InvalidArgument = 2,
  JtwpdStatus_Numerical = 3,
  JtwpdStatus_Truncation = 4,
  JtwpdStatus_Dimension = 5,
  JtwpdStatus_Io = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  JtwpdStatus_Internal = 7,
} JtwpdStatus;

/**
 * Columns available from a series or a trajectory.
 */
typedef enum JtwpdQuantity {
  JtwpdQuantity_Time = 0,
  JtwpdQuantity_YMean = 1,
  JtwpdQuantity_YVar = 2,
  JtwpdQuantity_XMean = 3,
  /**
   * Homodyne current; trajectories with a monitored probe only.
   */
  JtwpdQuantity_Current = 4,
} JtwpdQuantity;

typedef enum JtwpdBackend {
  JtwpdBackend_Mps = 0,
  JtwpdBackend_Sector = 1,
} JtwpdBackend;

/**
 * Detector configuration.
 */
typedef struct JtwpdConfig JtwpdConfig;

/**
 * Master-equation moment series.
 */
typedef struct JtwpdSeries JtwpdSeries;

/**
 * One simulated trajectory.
 */
typedef struct JtwpdTrajectory JtwpdTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failure on this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t jtwpd_last_error(char *buf, size_t len);

/**
 * Creates a configuration with uniform coupling, no Kerr terms and a step
 * count covering the photon transit.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum JtwpdStatus jtwpd_config_new(double g_tau,
                                  double gamma_tau,
                                  double kappa_a_tau,
                                  size_t n_sites,
                                  struct JtwpdConfig **out);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum JtwpdStatus jtwpd_config_from_toml(const char *text, struct JtwpdConfig **out);

/**
 * Sets `g/χ` (infinity disables the cross-Kerr term), `|K|/κ_a` and the
 * sign of `K`.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum JtwpdStatus jtwpd_config_set_nonlinearity(struct JtwpdConfig *cfg,
                                               double chi_ratio,
                                               double kerr_ratio,
                                               double kerr_sign);

/**
 * Sets the probe Fock dimension, the extra simulated time after transit and
 * whether the input is vacuum.
 *
 * # Safety
 * `cfg` must come from this library.
 */
enum JtwpdStatus jtwpd_config_set_run(struct JtwpdConfig *cfg,
                                      size_t probe_dim,
                                      double tail,
                                      bool vacuum);

/**
 * Writes the hex config hash (64 characters plus NUL) into `buf`.
 *
 * # Safety
 * `cfg` must come from this library and `buf` must hold `len` bytes.
 */
enum JtwpdStatus jtwpd_config_hash(const struct JtwpdConfig *cfg, char *buf, size_t len);

/**
 * # Safety
 * `cfg` must be null or come from this library, and not be used afterwards.
 */
void jtwpd_config_free(struct JtwpdConfig *cfg);

/**
 * Integrates the master equation over the configuration's sample grid.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be valid.
 */
enum JtwpdStatus jtwpd_keldysh_run(const struct JtwpdConfig *cfg, struct JtwpdSeries **out);

/**
 * # Safety
 * `series` must come from this library.
 */
size_t jtwpd_series_len(const struct JtwpdSeries *series);

/**
 * Copies one column into `buf`, which must hold at least
 * `jtwpd_series_len` values.
 *
 * # Safety
 * `series` must come from this library and `buf` must hold `len` doubles.
 */
enum JtwpdStatus jtwpd_series_copy(const struct JtwpdSeries *series,
                                   enum JtwpdQuantity quantity,
                                   double *buf,
                                   size_t len);

/**
 * # Safety
 * `series` must be null or come from this library, and not be used afterwards.
 */
void jtwpd_series_free(struct JtwpdSeries *series);

/**
 * Simulates one trajectory with the given seed.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be valid.
 */
enum JtwpdStatus jtwpd_trajectory_run(const struct JtwpdConfig *cfg,
                                      uint64_t seed,
                                      enum JtwpdBackend backend,
                                      struct JtwpdTrajectory **out);

/**
 * # Safety
 * `traj` must come from this library.
 */
size_t jtwpd_trajectory_len(const struct JtwpdTrajectory *traj);

/**
 * # Safety
 * `traj` must come from this library and `buf` must hold `len` doubles.
 */
enum JtwpdStatus jtwpd_trajectory_copy(const struct JtwpdTrajectory *traj,
                                       enum JtwpdQuantity quantity,
                                       double *buf,
                                       size_t len);

/**
 * # Safety
 * `traj` must be null or come from this library, and not be used afterwards.
 */
void jtwpd_trajectory_free(struct JtwpdTrajectory *traj);

/**
 * Picks the threshold maximizing the assignment fidelity of two score sets.
 *
 * # Safety
 * The score arrays must hold `n_photon` and `n_vacuum` doubles; the outputs
 * must be valid pointers.
 */
enum JtwpdStatus jtwpd_optimize_threshold(const double *photon,
                                          size_t n_photon,
                                          const double *vacuum,
                                          size_t n_vacuum,
                                          double *threshold,
                                          double *fidelity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JTWPD_H */
