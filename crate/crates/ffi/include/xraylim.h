#ifndef XRAYLIM_H
#define XRAYLIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XrlStatus {
  XRL_STATUS_OK = 0,
  XRL_STATUS_NULL_POINTER = 1,
  XRL_STATUS_INVALID_ARGUMENT = 2,
  XRL_STATUS_DOMAIN = 3,
  XRL_STATUS_SHAPE = 4,
  XRL_STATUS_VALIDITY = 5,
  XRL_STATUS_MODEL = 6,
  XRL_STATUS_NUMERICAL = 7,
  XRL_STATUS_PARSE = 8,
  XRL_STATUS_CONFIG = 9,
  XRL_STATUS_IO = 10,
  XRL_STATUS_BUFFER_TOO_SMALL = 11,
  XRL_STATUS_PANIC = 99,
} XrlStatus;

/**
 * Opaque spectral model (components plus detector response).
 */
typedef struct XrlModel XrlModel;

/**
 * Opaque binned spectrum.
 */
typedef struct XrlSpectrum XrlSpectrum;

typedef struct XrlBudgetSummary {
  double total_linear_factor;
  double background_reduction_low;
  double background_reduction_high;
  double overall_improvement_low;
  double overall_improvement_high;
} XrlBudgetSummary;

typedef struct XrlCslLimit {
  /**
   * Continuum amplitude bound, counts.
   */
  double alpha_upper;
  /**
   * Collapse-rate bounds, 1/s.
   */
  double lambda_upper;
  double lambda_mass_proportional_upper;
} XrlCslLimit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *xrl_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *xrl_last_error_message(void);

void xrl_clear_error(void);

enum XrlStatus xrl_fwhm_to_sigma(double fwhm, double *out);

/**
 * `(m_e / m_N)^2`.
 */
double xrl_mass_ratio_squared(void);

/**
 * Emission density per quasi-free electron, photons / (s keV).
 */
enum XrlStatus xrl_csl_rate_density(double energy_kev,
                                    double lambda,
                                    double correlation_length_m,
                                    bool mass_proportional,
                                    double *out);

/**
 * Collapse rate (1/s) producing continuum amplitude `alpha` (counts) in a
 * built-in target material ("Ge", "Si", "Cu").
 */
enum XrlStatus xrl_lambda_from_alpha(double alpha,
                                     const char *element,
                                     double mass_kg,
                                     double live_days,
                                     double correlation_length_m,
                                     bool mass_proportional,
                                     double *out);

/**
 * Summary of the built-in copper-strip upgrade budget.
 */
enum XrlStatus xrl_budget_summary_default(struct XrlBudgetSummary *out);

enum XrlStatus xrl_spectrum_load(const char *path, struct XrlSpectrum **out);

enum XrlStatus xrl_spectrum_save(const struct XrlSpectrum *spectrum, const char *path);

/**
 * Number of bins, or 0 for a null handle.
 */
size_t xrl_spectrum_n_bins(const struct XrlSpectrum *spectrum);

/**
 * Copies the `n_bins` counts into `out`.
 */
enum XrlStatus xrl_spectrum_counts(const struct XrlSpectrum *spectrum, uint64_t *out, size_t len);

/**
 * Copies the `n_bins + 1` bin edges (keV) into `out`.
 */
enum XrlStatus xrl_spectrum_edges(const struct XrlSpectrum *spectrum, double *out, size_t len);

/**
 * Attaches an exposure (kg, days) to the spectrum.
 */
enum XrlStatus xrl_spectrum_set_exposure(struct XrlSpectrum *spectrum,
                                         double mass_kg,
                                         double live_days);

void xrl_spectrum_free(struct XrlSpectrum *spectrum);

/**
 * Empty model with a constant-resolution response (FWHM in keV at 8 keV).
 */
enum XrlStatus xrl_model_new(double fwhm_ref_kev, struct XrlModel **out);

enum XrlStatus xrl_model_add_line(struct XrlModel *model, double centroid_kev, double amplitude);

/**
 * Adds an `alpha / E` continuum.
 */
enum XrlStatus xrl_model_add_continuum(struct XrlModel *model, double alpha);

/**
 * Adds a polynomial density `sum_k c[k] E^k`.
 */
enum XrlStatus xrl_model_add_polynomial(struct XrlModel *model,
                                        const double *coefficients,
                                        size_t n);

/**
 * Expected counts in the `n_edges - 1` bins defined by `edges`.
 */
enum XrlStatus xrl_model_predict(const struct XrlModel *model,
                                 const double *edges,
                                 size_t n_edges,
                                 double *out,
                                 size_t len);

/**
 * Seeded Poisson realisation of the model.
 */
enum XrlStatus xrl_model_simulate(const struct XrlModel *model,
                                  const double *edges,
                                  size_t n_edges,
                                  uint64_t seed,
                                  struct XrlSpectrum **out);

void xrl_model_free(struct XrlModel *model);

/**
 * Bound on the collapse rate from a spectrum with exposure, fitted with a
 * free flat background.
 */
enum XrlStatus xrl_csl_limit(const struct XrlSpectrum *spectrum,
                             double fwhm_ref_kev,
                             const char *element,
                             double correlation_length_m,
                             double cl,
                             uint64_t seed,
                             struct XrlCslLimit *out);

/**
 * Runs `command` ("simulate", "subtract", "fit", "limit", "project",
 * "constants") on a TOML run configuration and writes the report and
 * artifacts into `out_dir`.
 */
enum XrlStatus xrl_run_config(const char *config_path, const char *command, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XRAYLIM_H */
