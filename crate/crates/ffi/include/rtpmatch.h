#ifndef RTPMATCH_H
#define RTPMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Variant selector for [`rtp_unbalanced`]: 0 = damped, 1 = literal.
#define RTP_VARIANT_DAMPED 0

#define RTP_VARIANT_LITERAL 1

// Result code of every fallible call.
typedef enum RtpStatus {
  RTP_STATUS_OK = 0,
  RTP_STATUS_NULL_POINTER = 1,
  RTP_STATUS_INVALID_ARGUMENT = 2,
  RTP_STATUS_DIMENSION_MISMATCH = 3,
  RTP_STATUS_INVALID_MARGINALS = 4,
  RTP_STATUS_KAPPA_NOT_COMPLEMENTARY = 5,
  RTP_STATUS_KERNEL_UNDERFLOW = 6,
  RTP_STATUS_NOT_SQUARE = 7,
  RTP_STATUS_PANIC = 99,
} RtpStatus;

// Opaque cost matrix.
typedef struct RtpCost RtpCost;

// Opaque transport plan.
typedef struct RtpPlan RtpPlan;

// Solver diagnostics of a plan.
typedef struct RtpDiagnostics {
  size_t iterations;
  double marginal_residual;
  double transport_cost;
  double entropy;
  // 1 when the solver met its tolerance, else 0.
  int converged;
} RtpDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or null when the previous call
// succeeded. The pointer stays valid until the next call into the
// library from the same thread.
const char *rtp_last_error_message(void);

// Copies a row-major `rows x cols` buffer into a new cost handle.
//
// # Safety
// `data` must point to `rows * cols` doubles and `out` must be writable.
enum RtpStatus rtp_cost_new(const double *data, size_t rows, size_t cols, struct RtpCost **out);

// Releases a cost handle; null is ignored.
//
// # Safety
// `cost` must come from [`rtp_cost_new`] and not be used afterwards.
void rtp_cost_free(struct RtpCost *cost);

// Balanced entropic transport. `mu` (length cols) and `nu` (length rows)
// may be null for uniform weights. `log_domain` nonzero selects the
// stabilized solver.
//
// # Safety
// `cost` must be a live handle, marginal buffers must have the stated
// lengths and `out` must be writable.
enum RtpStatus rtp_sinkhorn(const struct RtpCost *cost,
                            const double *mu,
                            const double *nu,
                            double eps,
                            double tol,
                            size_t max_iter,
                            int log_domain,
                            struct RtpPlan **out);

// Regularized transport plan with `κ₁ = 1 − kappa2`. `variant` is
// [`RTP_VARIANT_DAMPED`] or [`RTP_VARIANT_LITERAL`].
//
// # Safety
// Same contract as [`rtp_sinkhorn`].
enum RtpStatus rtp_unbalanced(const struct RtpCost *cost,
                              const double *mu,
                              const double *nu,
                              double kappa2,
                              double eps,
                              double tol,
                              size_t max_iter,
                              int variant,
                              struct RtpPlan **out);

// Minimum-cost perfect matching of a square cost matrix. Writes the
// column of each row into `row_to_col` (length rows) and the total cost.
//
// # Safety
// `row_to_col` must hold `rows` entries; `total_cost` must be writable.
enum RtpStatus rtp_hungarian(const struct RtpCost *cost, size_t *row_to_col, double *total_cost);

// Hungarian matching of `rows >= cols` predictions with a constant
// background cost. `pred_to_gt[j]` receives the ground truth of
// prediction `j`, or -1 for background.
//
// # Safety
// `pred_to_gt` must hold `rows` entries; `total_cost` must be writable.
enum RtpStatus rtp_hungarian_background(const struct RtpCost *cost,
                                        double bg_cost,
                                        int64_t *pred_to_gt,
                                        double *total_cost);

// Writes the plan's shape.
//
// # Safety
// `plan` must be a live handle; `rows` and `cols` must be writable.
enum RtpStatus rtp_plan_dims(const struct RtpPlan *plan, size_t *rows, size_t *cols);

// Copies the plan row-major into `out`, which must hold exactly
// `rows * cols` doubles as given by `len`.
//
// # Safety
// `out` must point to `len` writable doubles.
enum RtpStatus rtp_plan_copy(const struct RtpPlan *plan, double *out, size_t len);

// Writes the plan's solver diagnostics.
//
// # Safety
// `plan` must be a live handle and `out` writable.
enum RtpStatus rtp_plan_diagnostics(const struct RtpPlan *plan, struct RtpDiagnostics *out);

// Releases a plan handle; null is ignored.
//
// # Safety
// `plan` must come from a solver call and not be used afterwards.
void rtp_plan_free(struct RtpPlan *plan);

// `ε₀ / ln m`, or `ε₀` when `m < 3`.
//
// # Safety
// `out` must be writable.
enum RtpStatus rtp_adaptive_epsilon(double eps0, size_t m, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTPMATCH_H */
