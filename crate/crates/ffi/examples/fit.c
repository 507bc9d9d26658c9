/* Fits approach A at one age from a CSV file.
 *
 *   cargo build --release -p dcreg-ffi
 *   cc crates/ffi/examples/fit.c -Icrates/ffi/include \
 *      target/release/libdcreg_ffi.a -lpthread -ldl -lm -o fit
 *   ./fit data.csv 30
 */
#include <stdio.h>
#include <math.h>
#include <stdlib.h>

#include "dcreg.h"

static int fail(const char *what, DcregStatus s) {
    const char *msg = dcreg_last_error_message();
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)s, msg ? msg : "");
    return 1;
}

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: %s data.csv t0\n", argv[0]);
        return 2;
    }
    double t0 = atof(argv[2]);
    DcregDataset *ds = NULL;
    DcregCensoringModel *g = NULL;
    DcregFit *fit = NULL;
    DcregStatus s;

    if ((s = dcreg_dataset_from_csv(argv[1], &ds)) != DCREG_STATUS_OK) return fail("read", s);
    if ((s = dcreg_censoring_fit(ds, "{\"method\":\"ecdf\"}", &g)) != DCREG_STATUS_OK) return fail("censoring", s);
    if ((s = dcreg_fit(ds, g, DCREG_APPROACH_A, t0, true, &fit)) != DCREG_STATUS_OK) return fail("fit", s);

    size_t d = dcreg_fit_dim(fit);
    double coef[16], cov[256];
    if (d > 16) return 1;
    dcreg_fit_coefficients(fit, coef, 16);
    dcreg_fit_covariance(fit, cov, 256);
    for (size_t i = 0; i < d; i++) {
        printf("coef[%zu] = %.6f  se = %.6f\n", i, coef[i], cov[i * d + i] > 0 ? sqrt(cov[i * d + i]) : 0.0);
    }
    dcreg_fit_free(fit);
    dcreg_censoring_free(g);
    dcreg_dataset_free(ds);
    return 0;
}
