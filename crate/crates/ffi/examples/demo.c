#include <stdio.h>
#include "wzgalerkin.h"

int main(void) {
    WzgGrid *grid = NULL;
    WzgNoise *noise = NULL;
    double u0[1] = {1.0};
    double coeffs[16];

    if (wzg_grid_new(0.5, 64, 8, &grid) != WZG_STATUS_OK) {
        fprintf(stderr, "grid: %s\n", wzg_last_error());
        return 1;
    }
    if (wzg_noise_sample(grid, 0.3, 42, 0, &noise) != WZG_STATUS_OK) {
        fprintf(stderr, "noise: %s\n", wzg_last_error());
        wzg_grid_free(grid);
        return 1;
    }
    if (wzg_she_spectral(noise, u0, 1, 16, coeffs) != WZG_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", wzg_last_error());
        return 1;
    }
    for (int a = 0; a < 4; a++) {
        printf("u_%d(T) = %.12e\n", a + 1, coeffs[a]);
    }
    if (wzg_grid_new(0.5, 0, 8, &grid) != WZG_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    printf("error path: %s\n", wzg_last_error());
    wzg_noise_free(noise);
    wzg_grid_free(grid);
    printf("wzgalerkin %s\n", wzg_version());
    return 0;
}
