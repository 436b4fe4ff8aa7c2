#ifndef HEATPROF_H
#define HEATPROF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Nonzero values leave a message readable
// through `hp_last_error`.
typedef enum HpStatus {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_POINTER = 1,
  HP_STATUS_INVALID_UTF8 = 2,
  HP_STATUS_BUFFER_TOO_SMALL = 3,
  HP_STATUS_PANIC = 4,
  // A run finished but at least one invariant check failed.
  HP_STATUS_CHECKS_FAILED = 5,
  HP_STATUS_PARSE_ERROR = 10,
  HP_STATUS_GEOMETRY_ERROR = 11,
  HP_STATUS_MESH_ERROR = 12,
  HP_STATUS_ASSEMBLY_ERROR = 13,
  HP_STATUS_SOLVER_ERROR = 14,
  HP_STATUS_CONVERGENCE_FAILURE = 15,
  HP_STATUS_INVALID_ARGUMENT = 16,
  HP_STATUS_UNKNOWN_GALLERY = 17,
  HP_STATUS_IO_ERROR = 18,
  HP_STATUS_VALIDATION_ERROR = 19,
} HpStatus;

// Time discretization of the heat semigroup.
typedef enum HpScheme {
  HP_SCHEME_BACKWARD_EULER = 0,
  HP_SCHEME_CRANK_NICOLSON = 1,
  // Dense matrix exponential; limited to moderate meshes.
  HP_SCHEME_EXPONENTIAL = 2,
} HpScheme;

// A validated polygonal domain.
typedef struct HpDomain HpDomain;

// A mesh with the assembled form of one operator.
typedef struct HpProblem HpProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *hp_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *hp_last_error(void);

// Builds a gallery domain with default parameters.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum HpStatus hp_domain_gallery(const char *name, struct HpDomain **out);

// Parses and validates a domain document (`outer`, `holes`, `slits`).
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum HpStatus hp_domain_from_json(const char *json, struct HpDomain **out);

// # Safety
// `domain` must come from this library and not be used afterwards. Null is ignored.
void hp_domain_free(struct HpDomain *domain);

// Length of the shortest path inside the domain.
//
// # Safety
// `domain` must be a live handle and `out` a valid pointer.
enum HpStatus hp_domain_inner_distance(const struct HpDomain *domain,
                                       double x0,
                                       double y0,
                                       double x1,
                                       double y1,
                                       double *out);

// # Safety
// `domain` must be a live handle and `out` a valid pointer.
enum HpStatus hp_domain_inner_diameter(const struct HpDomain *domain, double *out);

// Meshes the domain at `h_max` and assembles the operator described by
// `coefficients_json`, or the Laplacian when it is null.
//
// # Safety
// `domain` must be a live handle, `coefficients_json` null or a
// NUL-terminated string, and `out` a valid pointer.
enum HpStatus hp_problem_new(const struct HpDomain *domain,
                             double h_max,
                             const char *coefficients_json,
                             struct HpProblem **out);

// # Safety
// `problem` must come from this library and not be used afterwards. Null is ignored.
void hp_problem_free(struct HpProblem *problem);

// # Safety
// `problem` must be a live handle and `out` a valid pointer.
enum HpStatus hp_problem_node_count(const struct HpProblem *problem, size_t *out);

// Writes interleaved node coordinates `x0, y0, x1, y1, ...`; `len` counts doubles.
//
// # Safety
// `problem` must be a live handle and `xy` point to `len` writable doubles.
enum HpStatus hp_problem_nodes(const struct HpProblem *problem, double *xy, size_t len);

// Principal Dirichlet eigenvalue and, when `phi` is not null, the positive
// eigenvector normalized in the lumped mass, one value per node.
//
// # Safety
// `problem` must be a live handle, `lambda` valid, and `phi` null or
// pointing to `len` writable doubles.
enum HpStatus hp_problem_principal_eigenpair(const struct HpProblem *problem,
                                             double *lambda,
                                             double *phi,
                                             size_t len);

// Dirichlet heat kernel `p(t, x, y)` between the free nodes nearest to the two points.
//
// # Safety
// `problem` must be a live handle and `out` a valid pointer.
enum HpStatus hp_problem_heat_kernel(const struct HpProblem *problem,
                                     enum HpScheme scheme,
                                     double t,
                                     double x0,
                                     double y0,
                                     double x1,
                                     double y1,
                                     double *out);

// Green function with pole at the free node nearest to `(px, py)`, one value per node.
//
// # Safety
// `problem` must be a live handle and `values` point to `len` writable doubles.
enum HpStatus hp_problem_green(const struct HpProblem *problem,
                               double px,
                               double py,
                               double *values,
                               size_t len);

// Runs the experiments of a JSON config, writing reports to `out_dir`
// (or the config's own directory when null). Returns `CHECKS_FAILED` when
// the run completed with violated invariants.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out_dir` null or one.
enum HpStatus hp_run(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEATPROF_H */
