#include <math.h>
#include <stdio.h>

#include "orbit_ffi.h"

int main(void) {
    OrbitModel *m = NULL;
    size_t radial[] = {2, 2, 2};
    if (orbit_model_new("cryo", 2, radial, 3, 0, &m) != ORBIT_STATUS_OK) {
        fprintf(stderr, "%s\n", orbit_last_error_message());
        return 1;
    }
    size_t ranks[3], pred[3];
    OrbitStatus st = orbit_trdeg_ladder(m, 1, 1e-9, 1e3, ranks, pred);
    printf("dim %zu ranks %zu %zu %zu status %d\n", orbit_model_dim(m), ranks[0], ranks[1],
           ranks[2], (int)st);
    orbit_model_free(m);

    OrbitModel *bad = NULL;
    st = orbit_model_new("torus", 1, NULL, 0, 0, &bad);
    printf("bad model status %d: %s\n", (int)st, orbit_last_error_message());
    printf("cg %.15f\n", orbit_clebsch_gordan(1, 1, 0, 1, -1, 0));
    return st == ORBIT_STATUS_INVALID_ARGUMENT ? 0 : 1;
}
