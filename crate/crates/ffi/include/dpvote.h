/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef DPVOTE_H
#define DPVOTE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum DpvStatus {
  DPV_STATUS_OK = 0,
  DPV_STATUS_NULL_POINTER = 1,
  DPV_STATUS_INVALID_ARGUMENT = 2,
  DPV_STATUS_NON_FINITE = 3,
  DPV_STATUS_DIMENSION_MISMATCH = 4,
  DPV_STATUS_BUDGET_INFEASIBLE = 5,
  DPV_STATUS_PANIC = 6,
} DpvStatus;

// Order grid for [`dpv_ledger_new`].
typedef enum DpvGrid {
  DPV_GRID_STANDARD = 0,
  DPV_GRID_INTEGER = 1,
} DpvGrid;

// Accounting track for [`dpv_ledger_epsilon`].
typedef enum DpvTrack {
  DPV_TRACK_INDEPENDENT = 0,
  DPV_TRACK_DEPENDENT = 1,
  DPV_TRACK_DEPENDENT_UNCAPPED = 2,
} DpvTrack;

// Opaque RDP ledger.
typedef struct DpvLedger DpvLedger;

// Opaque count sketch.
typedef struct DpvSketch DpvSketch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`) and returns its full length without the NUL; 0 when
// the last call succeeded.
//
// # Safety
// `buf` must be null or valid for `len` writes.
size_t dpv_last_error_message(char *buf, size_t len);

// ℓ₂ sensitivity `2√k` of the vote sum.
//
// # Safety
// `out` must be valid for one write.
enum DpvStatus dpv_sum_sensitivity(size_t k, double *out);

// Gaussian-mechanism RDP `s²λ/(2σ²)`.
//
// # Safety
// `out` must be valid for one write.
enum DpvStatus dpv_gaussian_rdp(double sensitivity, double sigma, double order, double *out);

// ε after `rounds` vote aggregations on the standard order grid.
//
// # Safety
// `out` must be valid for one write.
enum DpvStatus dpv_epsilon_after(size_t k,
                                 double sigma,
                                 double delta,
                                 uint64_t rounds,
                                 double *out);

// Largest number of vote aggregations within `epsilon_target` on the
// standard order grid.
//
// # Safety
// `out` must be valid for one write.
enum DpvStatus dpv_budget_schedule(size_t k,
                                   double sigma,
                                   double delta,
                                   double epsilon_target,
                                   uint64_t *out);

// Top-k stochastic sign compression of `grad[0..dim]` into dense votes
// `out[0..dim]` in {-1, 0, +1}. Randomness comes from `seed`.
//
// # Safety
// `grad` must be valid for `dim` reads and `out` for `dim` writes.
enum DpvStatus dpv_topk_sto_sign(const double *grad,
                                 size_t dim,
                                 double c,
                                 size_t k,
                                 uint64_t seed,
                                 int8_t *out);

// Compresses `teachers` row-major gradients of length `dim`, sums the
// votes, adds `N(0, σ²)` per coordinate and thresholds at `±β·teachers`.
// Writes the ternary result to `out` and, when `noisy_sums` is not null,
// the noisy tallies.
//
// # Safety
// `grads` must be valid for `teachers·dim` reads, `out` for `dim` writes and
// `noisy_sums` null or valid for `dim` writes.
enum DpvStatus dpv_dp_topk_agg(const double *grads,
                               size_t teachers,
                               size_t dim,
                               double sigma,
                               double beta,
                               size_t k,
                               double c,
                               uint64_t seed,
                               int8_t *out,
                               double *noisy_sums);

// Probability `q̃` that the thresholded noisy tally differs from `outcome`.
//
// # Safety
// `sums` must be valid for `dim` reads and `outcome` for `dim` reads.
enum DpvStatus dpv_outcome_probability(const double *sums,
                                       const int8_t *outcome,
                                       size_t dim,
                                       size_t teachers,
                                       double beta,
                                       double sigma,
                                       double *out);

// Creates an empty ledger.
//
// # Safety
// `out` must be valid for one write. Release the handle with [`dpv_ledger_free`].
enum DpvStatus dpv_ledger_new(double delta, enum DpvGrid grid, struct DpvLedger **out);

// # Safety
// `ledger` must be null or a handle from [`dpv_ledger_new`] not yet freed.
void dpv_ledger_free(struct DpvLedger *ledger);

// Records one data-independent vote aggregation.
//
// # Safety
// `ledger` must be a live handle.
enum DpvStatus dpv_ledger_compose_vote_sum(struct DpvLedger *ledger, size_t k, double sigma);

// Records one vote aggregation with outcome probability `q_tilde` on all tracks.
//
// # Safety
// `ledger` must be a live handle.
enum DpvStatus dpv_ledger_compose_data_dependent(struct DpvLedger *ledger,
                                                 size_t k,
                                                 double sigma,
                                                 double q_tilde);

// ε and the minimizing order of one track.
//
// # Safety
// `ledger` must be a live handle; `epsilon` valid for one write; `order`
// null or valid for one write.
enum DpvStatus dpv_ledger_epsilon(const struct DpvLedger *ledger,
                                  enum DpvTrack track,
                                  double *epsilon,
                                  double *order);

// Number of composed aggregations.
//
// # Safety
// `ledger` must be a live handle and `out` valid for one write.
enum DpvStatus dpv_ledger_rounds(const struct DpvLedger *ledger, uint64_t *out);

// Creates an all-zero `rows × width` sketch of `dim`-vectors with hashes
// derived from `seed`.
//
// # Safety
// `out` must be valid for one write. Release with [`dpv_sketch_free`].
enum DpvStatus dpv_sketch_new(size_t dim,
                              size_t rows,
                              size_t width,
                              uint64_t seed,
                              struct DpvSketch **out);

// # Safety
// `sketch` must be null or a handle from [`dpv_sketch_new`] not yet freed.
void dpv_sketch_free(struct DpvSketch *sketch);

// Adds `values[0..dim]` into the sketch.
//
// # Safety
// `sketch` must be a live handle and `values` valid for `dim` reads.
enum DpvStatus dpv_sketch_add(struct DpvSketch *sketch, const double *values, size_t dim);

// `dst += src` for sketches of the same shape and seed.
//
// # Safety
// Both must be live handles.
enum DpvStatus dpv_sketch_merge(struct DpvSketch *dst, const struct DpvSketch *src);

// Median-of-rows estimate of every coordinate into `out[0..dim]`.
//
// # Safety
// `sketch` must be a live handle and `out` valid for `dim` writes.
enum DpvStatus dpv_sketch_unsketch(const struct DpvSketch *sketch, double *out, size_t dim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPVOTE_H */
