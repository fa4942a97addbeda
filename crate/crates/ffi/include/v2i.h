#ifndef V2I_H
#define V2I_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum V2iStatus {
  V2I_STATUS_OK = 0,
  // A required pointer argument was null.
  V2I_STATUS_NULL = 1,
  // An argument or configuration was out of range.
  V2I_STATUS_DOMAIN = 2,
  V2I_STATUS_NUMERICAL = 3,
  V2I_STATUS_IO = 4,
  // Malformed JSON or a non-UTF-8 string.
  V2I_STATUS_PARSE = 5,
  V2I_STATUS_PANIC = 6,
} V2iStatus;

// Which combiner the tracker sounds with.
typedef enum V2iSoundingMode {
  V2I_SOUNDING_MODE_OPTIMAL = 0,
  V2I_SOUNDING_MODE_HYBRID = 1,
  V2I_SOUNDING_MODE_MANIFOLD = 2,
} V2iSoundingMode;

// Opaque codebook handle.
typedef struct V2iCodebook V2iCodebook;

// Opaque tracker handle; owns its sounding noise stream.
typedef struct V2iTracker V2iTracker;

// Tracker construction parameters.
typedef struct V2iTrackerParams {
  size_t antennas;
  size_t rf_chains;
  double rsu_height_m;
  double ts_s;
  double steering_rad;
  double sigma_alpha;
  double sigma_omega;
  double x0;
  double y0;
  // Initial speed (m/s).
  double v0;
  double sigma_eps;
  uint64_t seed;
  enum V2iSoundingMode sounding;
  // Non-zero enables acceleration estimation.
  uint8_t estimate_accel;
} V2iTrackerParams;

// Posterior mean and row-major covariance.
typedef struct V2iState {
  double x;
  double y;
  double v;
  double cov[9];
  // Applied acceleration estimate, NaN when none.
  double alpha_hat;
} V2iState;

// Aggregates of one experiment at one transmit power.
typedef struct V2iSummary {
  double tx_power_dbm;
  size_t trials;
  double nmse_x;
  double nmse_v;
  size_t excluded_x;
  size_t excluded_v;
  // NaN when the scenario selects no beams.
  double mean_gain;
  double mean_rate;
  size_t non_psd_steps;
} V2iSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t v2i_last_error_message(char *buf, size_t len);

// Spatial frequency of a vehicle at `(x, y)` seen from an RSU at height `h`.
//
// # Safety
// `out` must be null or valid for one write.
enum V2iStatus v2i_spatial_frequency(double x, double y, double h, double *out);

// Design a codebook with one resolution per entry of `codewords`.
//
// # Safety
// `codewords` must be valid for `n_resolutions` reads and `out` for one write.
enum V2iStatus v2i_codebook_design(size_t antennas,
                                   size_t rf_chains,
                                   const size_t *codewords,
                                   size_t n_resolutions,
                                   double lane_offset_m,
                                   double rsu_height_m,
                                   double range_half_m,
                                   uint64_t seed,
                                   struct V2iCodebook **out);

// Load a codebook JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for one write.
enum V2iStatus v2i_codebook_load(const char *path, struct V2iCodebook **out);

// Write a codebook as JSON.
//
// # Safety
// `cb` must be a live handle and `path` a NUL-terminated string.
enum V2iStatus v2i_codebook_save(const struct V2iCodebook *cb, const char *path);

// # Safety
// `cb` must be null or a handle not freed before.
void v2i_codebook_free(struct V2iCodebook *cb);

// Number of codewords; 0 for a null handle.
//
// # Safety
// `cb` must be null or a live handle.
size_t v2i_codebook_len(const struct V2iCodebook *cb);

// Antennas per codeword; 0 for a null handle.
//
// # Safety
// `cb` must be null or a live handle.
size_t v2i_codebook_antennas(const struct V2iCodebook *cb);

// Copy codeword `index` (0-based) into `re` and `im`, each of length `len`
// equal to the antenna count.
//
// # Safety
// `re` and `im` must be valid for `len` writes.
enum V2iStatus v2i_codebook_codeword(const struct V2iCodebook *cb,
                                     size_t index,
                                     double *re,
                                     double *im,
                                     size_t len);

// Create a tracker from its parameters.
//
// # Safety
// `params` must be valid for one read and `out` for one write.
enum V2iStatus v2i_tracker_new(const struct V2iTrackerParams *params, struct V2iTracker **out);

// # Safety
// `t` must be null or a handle not freed before.
void v2i_tracker_free(struct V2iTracker *t);

// One sounding step against the true channel `(beta, psi, rho)`.
//
// # Safety
// `t` must be a live handle; `out` null or valid for one write.
enum V2iStatus v2i_tracker_step(struct V2iTracker *t,
                                double beta_re,
                                double beta_im,
                                double psi,
                                double rho,
                                struct V2iState *out);

// Current belief of the tracker.
//
// # Safety
// `t` must be a live handle and `out` valid for one write.
enum V2iStatus v2i_tracker_state(const struct V2iTracker *t, struct V2iState *out);

// Pick the codeword (1-based index) for the next `omega` steps from the
// tracker's current belief.
//
// # Safety
// `cb` and `t` must be live handles and `out_index` valid for one write.
enum V2iStatus v2i_select(const struct V2iCodebook *cb,
                          const struct V2iTracker *t,
                          size_t omega,
                          size_t *out_index);

// Run a scenario given as JSON. `trials` of 0 keeps the scenario's count and
// a null `seed` keeps its seed. Writes up to `capacity` summaries (one per
// transmit power) and stores the number available in `written`.
//
// # Safety
// `scenario_json` must be a NUL-terminated string, `out` valid for
// `capacity` writes and `written` for one write.
enum V2iStatus v2i_run_experiment(const char *scenario_json,
                                  size_t trials,
                                  const uint64_t *seed,
                                  struct V2iSummary *out,
                                  size_t capacity,
                                  size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* V2I_H */
