#ifndef RAMLAB_H
#define RAMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RamlabStatus {
  RAMLAB_STATUS_OK = 0,
  RAMLAB_STATUS_NULL_POINTER = 1,
  RAMLAB_STATUS_INVALID_ARGUMENT = 2,
  RAMLAB_STATUS_GEOMETRY = 3,
  RAMLAB_STATUS_MESH = 4,
  RAMLAB_STATUS_NUMERICAL = 5,
  RAMLAB_STATUS_IO = 6,
  RAMLAB_STATUS_PANIC = 7,
} RamlabStatus;

/**
 * Problem mode for `ramlab_solve`.
 */
typedef enum RamlabMode {
  RAMLAB_MODE_SUBCRITICAL = 0,
  RAMLAB_MODE_CRITICAL_THETA0 = 1,
} RamlabMode;

/**
 * Opaque IFS configuration.
 */
typedef struct RamlabConfig RamlabConfig;

/**
 * Opaque slit mesh.
 */
typedef struct RamlabMesh RamlabMesh;

/**
 * Opaque discrete solution with its energy.
 */
typedef struct RamlabSolution RamlabSolution;

/**
 * Opaque prefractal tree.
 */
typedef struct RamlabTree RamlabTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *ramlab_last_error(void);

/**
 * Library version as a static string.
 */
const char *ramlab_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void ramlab_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum RamlabStatus ramlab_config_new(double r,
                                    double theta,
                                    double beta1,
                                    double beta2,
                                    struct RamlabConfig **out_cfg);

/**
 * # Safety
 * `cfg` must be NULL or a handle from `ramlab_config_new`.
 */
void ramlab_config_free(struct RamlabConfig *cfg);

/**
 * Critical contraction ratio r* for the angle.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RamlabStatus ramlab_critical_ratio(double theta,
                                        double beta1,
                                        double beta2,
                                        double tol,
                                        double *out_r);

/**
 * ∫ g dμ at quadrature level `m` for g = x1^p · x2^q.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_mu_moment(const struct RamlabConfig *cfg,
                                   size_t m,
                                   int32_t p,
                                   int32_t q,
                                   double *out_v);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_tree_new(const struct RamlabConfig *cfg,
                                  size_t n,
                                  struct RamlabTree **out_tree);

/**
 * # Safety
 * `tree` must be NULL or a handle from `ramlab_tree_new`.
 */
void ramlab_tree_free(struct RamlabTree *tree);

/**
 * Number of cells, interface segments and |Γⁿ|.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_tree_info(const struct RamlabTree *tree,
                                   size_t *cells,
                                   size_t *segments,
                                   double *interface_length);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_mesh_build(const struct RamlabConfig *cfg,
                                    size_t n,
                                    double h,
                                    bool critical,
                                    struct RamlabMesh **out_mesh);

/**
 * # Safety
 * `text` must be a NUL-terminated string, `out_mesh` valid.
 */
enum RamlabStatus ramlab_mesh_from_text(const char *text_in, struct RamlabMesh **out_mesh);

/**
 * # Safety
 * `mesh` must be NULL or a mesh handle.
 */
void ramlab_mesh_free(struct RamlabMesh *mesh);

/**
 * DOF and triangle counts.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_mesh_info(const struct RamlabMesh *mesh, size_t *dofs, size_t *triangles);

/**
 * Text serialization; release with `ramlab_string_free`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_mesh_to_text(const struct RamlabMesh *mesh, char **out_text);

/**
 * Assemble and solve the level problem on `mesh`.
 *
 * # Safety
 * Pointers must be valid; `f` and `u0` NUL-terminated expressions.
 */
enum RamlabStatus ramlab_solve(const struct RamlabConfig *cfg,
                               const struct RamlabMesh *mesh,
                               double alpha,
                               double beta,
                               const char *f,
                               const char *u0,
                               enum RamlabMode mode,
                               double tol,
                               struct RamlabSolution **out_sol);

/**
 * # Safety
 * `sol` must be NULL or a solution handle.
 */
void ramlab_solution_free(struct RamlabSolution *sol);

/**
 * a_n(u,u), the functional value and the CG iteration count.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RamlabStatus ramlab_solution_info(const struct RamlabSolution *sol,
                                       double *energy,
                                       double *functional,
                                       size_t *iterations);

/**
 * Copy DOF values into `buf` of length `len`; `len` must be at least the DOF count.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum RamlabStatus ramlab_solution_values(const struct RamlabSolution *sol, double *buf, size_t len);

/**
 * Run a study from a JSON configuration and return the report CSV.
 *
 * # Safety
 * `config_json` NUL-terminated, `out_csv` valid.
 */
enum RamlabStatus ramlab_study_csv(const char *config_json, char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAMLAB_H */
