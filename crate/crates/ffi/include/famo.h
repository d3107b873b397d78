#ifndef FAMO_H
#define FAMO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FamoStatus {
  FAMO_STATUS_OK = 0,
  FAMO_STATUS_NULL_POINTER = 1,
  FAMO_STATUS_INVALID_INPUT = 2,
  FAMO_STATUS_DIMENSION_MISMATCH = 3,
  FAMO_STATUS_NUMERICAL = 4,
  FAMO_STATUS_NOT_CONVERGED = 5,
  FAMO_STATUS_CONFIG = 6,
  FAMO_STATUS_IO = 7,
  FAMO_STATUS_PANIC = 8,
} FamoStatus;

// Task weighting state for a training loop owned by the caller: get the
// weights for the current losses, take one step on the weighted gradient,
// then report the losses before and after.
typedef struct FamoWeighter FamoWeighter;

typedef struct FamoWeighterConfig {
  double beta;
  double gamma;
  double eps;
  // Nonzero: moment optimizer on the logits. Zero: plain gradient steps.
  int32_t moment;
} FamoWeighterConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *famo_last_error(void);

// Static version string.
const char *famo_version(void);

// `out = softmax(xi)`, both of length `k`.
//
// # Safety
// `xi` and `out` must point to `k` doubles.
enum FamoStatus famo_softmax(const double *xi, size_t k, double *out);

// Euclidean projection of `y` onto the probability simplex.
//
// # Safety
// `y` and `out` must point to `k` doubles.
enum FamoStatus famo_project_simplex(const double *y, size_t k, double *out);

// Min-norm point of the convex hull of `k` row-major rows of length `m`.
// `direction` (length `m`) and `gap` may be null. Returns
// `FAMO_STATUS_NOT_CONVERGED` with outputs filled when the duality gap
// stays above tolerance.
//
// # Safety
// `rows` must point to `k·m` doubles and `weights` to `k`; non-null
// optional outputs must have their stated lengths.
enum FamoStatus famo_min_norm(const double *rows,
                              size_t k,
                              size_t m,
                              double *weights,
                              double *direction,
                              double *gap);

// Default hyperparameters.
struct FamoWeighterConfig famo_weighter_config_default(void);

// Creates a weighter for `k` tasks. `config` null means defaults;
// `min_losses` null means zeros.
//
// # Safety
// Non-null `min_losses` must point to `k` doubles; `out` must be valid.
enum FamoStatus famo_weighter_new(size_t k,
                                  const struct FamoWeighterConfig *config,
                                  const double *min_losses,
                                  struct FamoWeighter **out);

// Number of tasks, or 0 for a null handle.
//
// # Safety
// `h` must be null or a live handle.
size_t famo_weighter_num_tasks(const struct FamoWeighter *h);

// Gradient weights for the current raw `losses`: `w_i ∝ z_i/(ℓ_i − ℓ_i* + ε)`,
// summing to one.
//
// # Safety
// `losses` and `weights` must point to `k` doubles.
enum FamoStatus famo_weighter_weights(struct FamoWeighter *h,
                                      const double *losses,
                                      double *weights);

// Current simplex weights `softmax(ξ)`.
//
// # Safety
// `z` must point to `k` doubles.
enum FamoStatus famo_weighter_logit_weights(struct FamoWeighter *h, double *z);

// Updates the logits from the raw losses before and after a step.
//
// # Safety
// `prev` and `curr` must point to `k` doubles.
enum FamoStatus famo_weighter_update(struct FamoWeighter *h,
                                     const double *prev,
                                     const double *curr);

// Releases a handle. Null is ignored.
//
// # Safety
// `h` must be null or a handle not yet freed.
void famo_weighter_free(struct FamoWeighter *h);

// Runs one JSON run configuration and returns its summary as JSON in
// `*summary`, to be released with [`famo_string_free`].
//
// # Safety
// `config_json` must be a nul-terminated string; `summary` must be valid.
enum FamoStatus famo_run_json(const char *config_json, char **summary);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void famo_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAMO_H */
