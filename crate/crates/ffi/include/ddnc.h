#ifndef DDNC_H
#define DDNC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The first five agree with the command-line exit codes.
typedef enum DdncStatus {
  DDNC_STATUS_OK = 0,
  DDNC_STATUS_INVALID_INPUT = 1,
  DDNC_STATUS_DIVERGENCE = 2,
  DDNC_STATUS_INFEASIBLE = 3,
  DDNC_STATUS_SOLVER_FAILURE = 4,
  DDNC_STATUS_REFUSED = 5,
  DDNC_STATUS_NULL_ARGUMENT = 6,
  DDNC_STATUS_BUFFER_TOO_SMALL = 7,
  DDNC_STATUS_INTERNAL = 8,
} DdncStatus;

// Region certificate.
typedef struct DdncCertificate DdncCertificate;

// Experiment data.
typedef struct DdncDataset DdncDataset;

// Plant, dictionary and settings parsed from a configuration.
typedef struct DdncPipeline DdncPipeline;

// Synthesis result.
typedef struct DdncResult DdncResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Owned by the
// library; valid until the next failing call.
const char *ddnc_last_error(void);

// Library version as a static string.
const char *ddnc_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void ddnc_string_free(char *s);

// Parses a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum DdncStatus ddnc_pipeline_from_toml(const char *toml, struct DdncPipeline **out);

// Configuration of a shipped example, 1 to 10.
//
// # Safety
// `out` must be writable.
enum DdncStatus ddnc_pipeline_from_demo(int id, struct DdncPipeline **out);

// Replaces the experiment seed.
//
// # Safety
// `p` must be a live pipeline handle.
enum DdncStatus ddnc_pipeline_set_seed(struct DdncPipeline *p, uint64_t seed);

// # Safety
// `p` must come from this library and must not be used afterwards.
void ddnc_pipeline_free(struct DdncPipeline *p);

// Runs the configured experiments.
//
// # Safety
// `p` must be a live pipeline handle; `out` must be writable.
enum DdncStatus ddnc_simulate(const struct DdncPipeline *p, struct DdncDataset **out);

// Loads trajectory CSV files; several files are averaged.
//
// # Safety
// `paths` must point to `count` NUL-terminated strings.
enum DdncStatus ddnc_dataset_load(const struct DdncPipeline *p,
                                  const char *const *paths,
                                  size_t count,
                                  struct DdncDataset **out);

// Number of transitions in the (averaged) data.
//
// # Safety
// `d` must be a live dataset handle.
size_t ddnc_dataset_len(const struct DdncDataset *d);

// # Safety
// `d` must come from this library and must not be used afterwards.
void ddnc_dataset_free(struct DdncDataset *d);

// Designs a controller with the configured program.
//
// # Safety
// Handles must be live; `out` must be writable.
enum DdncStatus ddnc_synthesize(const struct DdncPipeline *p,
                                const struct DdncDataset *d,
                                struct DdncResult **out);

// Shape of the gain K.
//
// # Safety
// `r` must be a live result handle; `rows` and `cols` must be writable.
enum DdncStatus ddnc_result_gain_shape(const struct DdncResult *r, size_t *rows, size_t *cols);

// Copies K into `buf` in row-major order.
//
// # Safety
// `buf` must hold `len` doubles.
enum DdncStatus ddnc_result_gain(const struct DdncResult *r, double *buf, size_t len);

// Optimal value of the synthesis program.
//
// # Safety
// `r` must be a live result handle; `value` must be writable.
enum DdncStatus ddnc_result_objective(const struct DdncResult *r, double *value);

// Result as JSON; release with [`ddnc_string_free`].
//
// # Safety
// `r` must be a live result handle; `out` must be writable.
enum DdncStatus ddnc_result_json(const struct DdncResult *r, char **out);

// # Safety
// `r` must come from this library and must not be used afterwards.
void ddnc_result_free(struct DdncResult *r);

// Runs the configured certificate. `d` may be null; it supplies the
// experiment states checked by invariance certificates under neglected
// nonlinearities.
//
// # Safety
// Non-null handles must be live; `out` must be writable.
enum DdncStatus ddnc_certify(const struct DdncPipeline *p,
                             const struct DdncResult *r,
                             const struct DdncDataset *d,
                             struct DdncCertificate **out);

// Certified level and whether the certificate is empty (gamma is then 0).
//
// # Safety
// `c` must be a live certificate handle; outputs must be writable.
enum DdncStatus ddnc_certificate_gamma(const struct DdncCertificate *c, double *gamma, bool *empty);

// Certificate as JSON; release with [`ddnc_string_free`].
//
// # Safety
// `c` must be a live certificate handle; `out` must be writable.
enum DdncStatus ddnc_certificate_json(const struct DdncCertificate *c, char **out);

// # Safety
// `c` must come from this library and must not be used afterwards.
void ddnc_certificate_free(struct DdncCertificate *c);

// Bound on the averaged disturbance record for disturbances bounded by
// `delta`, and the probability that it holds.
//
// # Safety
// `bound` and `probability` must be writable.
enum DdncStatus ddnc_prob_bound_bounded(double delta,
                                        double sigma_norm,
                                        size_t horizon,
                                        size_t repetitions,
                                        double mu,
                                        size_t channels,
                                        double *bound,
                                        double *probability);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDNC_H */
