#include <math.h>
#include <stdio.h>
#include "xraylim.h"

int main(int argc, char **argv) {
    XrlBudgetSummary b;
    if (xrl_budget_summary_default(&b) != XRL_STATUS_OK) return 1;
    if (b.total_linear_factor != 8.0 || b.background_reduction_low != 200.0) return 2;

    XrlModel *m = NULL;
    if (xrl_model_new(0.17, &m) != XRL_STATUS_OK) return 3;
    xrl_model_add_line(m, 8.0, 1000.0);
    double coeffs[1] = {5.0};
    xrl_model_add_polynomial(m, coeffs, 1);
    double edges[5] = {7.0, 7.5, 8.0, 8.5, 9.0};
    double mu[4];
    if (xrl_model_predict(m, edges, 5, mu, 4) != XRL_STATUS_OK) return 4;

    XrlSpectrum *s = NULL;
    if (xrl_model_simulate(m, edges, 5, 42, &s) != XRL_STATUS_OK) return 5;
    uint64_t counts[4];
    if (xrl_spectrum_counts(s, counts, 4) != XRL_STATUS_OK) return 6;
    if (xrl_spectrum_counts(s, counts, 2) != XRL_STATUS_BUFFER_TOO_SMALL) return 7;

    double sigma = 0.0;
    if (xrl_fwhm_to_sigma(-1.0, &sigma) != XRL_STATUS_DOMAIN) return 8;
    if (xrl_last_error_message() == NULL) return 9;

    printf("%.6f %.6f %llu\n", mu[1] + mu[2], b.overall_improvement_high, (unsigned long long)(counts[1] + counts[2]));
    xrl_spectrum_free(s);
    xrl_model_free(m);
    (void)argc;
    (void)argv;
    return 0;
}
