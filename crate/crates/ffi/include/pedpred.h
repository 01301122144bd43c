#ifndef PEDPRED_H
#define PEDPRED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PedpredStatus {
  PEDPRED_STATUS_OK = 0,
  PEDPRED_STATUS_NULL_POINTER = 1,
  PEDPRED_STATUS_INVALID_ARGUMENT = 2,
  // Malformed map JSON or text encoding.
  PEDPRED_STATUS_PARSE = 3,
  // The map does not form a valid road graph.
  PEDPRED_STATUS_GRAPH = 4,
  PEDPRED_STATUS_NO_CONVERGENCE = 5,
  PEDPRED_STATUS_NOT_STABILIZABLE = 6,
  PEDPRED_STATUS_OUT_OF_RANGE = 7,
  PEDPRED_STATUS_PANIC = 8,
} PedpredStatus;

// Parsed road graph.
typedef struct PedpredGraph PedpredGraph;

// Predictor with its per-edge gains solved.
typedef struct PedpredPredictor PedpredPredictor;

// Result of one prediction.
typedef struct PedpredTree PedpredTree;

// Predictor settings. Matrices are row-major.
typedef struct PedpredParams {
  double t_s;
  // At least 1; `pedpred_predict` takes its own horizon.
  uintptr_t horizon;
  uintptr_t max_branches;
  double q[16];
  double r[4];
  double s[8];
  // Per-step process noise.
  double w[16];
  bool allow_uturn;
  double lqr_tol;
  uintptr_t lqr_max_iter;
} PedpredParams;

typedef struct PedpredBranchInfo {
  uint32_t id;
  // Parent branch id, or -1 for a root.
  int64_t parent;
  uint32_t edge;
  uintptr_t spawn_step;
  // Number of beliefs, spawn step included.
  uintptr_t steps;
  // Still open at the horizon.
  bool is_leaf;
} PedpredBranchInfo;

typedef struct PedpredEllipse {
  double semi_major;
  double semi_minor;
  // Angle of the major axis from +x, radians.
  double orientation;
} PedpredEllipse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Description of the last failure on this thread, or null after a
// success. Valid until the next call into the library on this thread.
const char *pedpred_last_error_message(void);

// Release a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void pedpred_string_free(char *s);

struct PedpredParams pedpred_params_default(void);

// Build a road graph from a map document in JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum PedpredStatus pedpred_graph_from_json(const char *json, struct PedpredGraph **out);

// # Safety
// `graph` must be null or a live handle from [`pedpred_graph_from_json`].
void pedpred_graph_free(struct PedpredGraph *graph);

// # Safety
// `graph` must be a live handle; `nodes` and `edges` must be writable.
enum PedpredStatus pedpred_graph_counts(const struct PedpredGraph *graph,
                                        uintptr_t *nodes,
                                        uintptr_t *edges);

// Solve the tracking gains for every edge of `graph`. The predictor keeps
// its own reference to the graph, so the graph handle may be freed after.
//
// # Safety
// `graph` and `params` must be valid; `out` must be writable.
enum PedpredStatus pedpred_predictor_new(const struct PedpredGraph *graph,
                                         const struct PedpredParams *params,
                                         struct PedpredPredictor **out);

// # Safety
// `predictor` must be null or a live handle.
void pedpred_predictor_free(struct PedpredPredictor *predictor);

// Predict `horizon` steps from `state = [x, y, v, theta]`. `cov` is the
// row-major 4x4 initial covariance and may be null for zero.
//
// # Safety
// `state` must point at 4 doubles, `cov` at 16 or be null; `out` writable.
enum PedpredStatus pedpred_predict(const struct PedpredPredictor *predictor,
                                   const double *state,
                                   const double *cov,
                                   uintptr_t horizon,
                                   struct PedpredTree **out);

// # Safety
// `tree` must be null or a live handle.
void pedpred_tree_free(struct PedpredTree *tree);

// Number of branches; 0 for a null handle.
//
// # Safety
// `tree` must be null or a live handle.
uintptr_t pedpred_tree_branch_count(const struct PedpredTree *tree);

// Whether the branch budget cut off any spawns.
//
// # Safety
// `tree` must be null or a live handle.
bool pedpred_tree_truncated(const struct PedpredTree *tree);

// # Safety
// `tree` must be a live handle; `out` writable.
enum PedpredStatus pedpred_tree_branch_info(const struct PedpredTree *tree,
                                            uintptr_t index,
                                            struct PedpredBranchInfo *out);

// Belief number `step` of branch `index` (global step `spawn_step + step`).
// `mean` receives 4 doubles; `cov`, if not null, 16 in row-major order.
//
// # Safety
// `tree` must be a live handle; output pointers sized as above.
enum PedpredStatus pedpred_tree_belief(const struct PedpredTree *tree,
                                       uintptr_t index,
                                       uintptr_t step,
                                       double *mean,
                                       double *cov);

// Serialize the tree. Release the string with [`pedpred_string_free`].
//
// # Safety
// `tree` must be a live handle; `out` writable.
enum PedpredStatus pedpred_tree_to_json(const struct PedpredTree *tree, char **out);

// Discrete Riccati solution for a 4-state, 2-input system. All matrices
// row-major: `a` 4x4, `b` 4x2, `q` 4x4, `r` 2x2, `s` 4x2 (null for zero).
// Writes `p` (4x4) and the gain `k` (2x4, `u = -K x`).
//
// # Safety
// Every non-null pointer must reference the stated number of doubles.
enum PedpredStatus pedpred_solve_dare(const double *a,
                                      const double *b,
                                      const double *q,
                                      const double *r,
                                      const double *s,
                                      double tol,
                                      uintptr_t max_iter,
                                      double *p,
                                      double *k);

// Ellipse holding `percentile` of the mass of a 2-D Gaussian with
// row-major covariance `cov` (4 doubles).
//
// # Safety
// `cov` must point at 4 doubles; `out` writable.
enum PedpredStatus pedpred_confidence_ellipse(const double *cov,
                                              double percentile,
                                              struct PedpredEllipse *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEDPRED_H */
