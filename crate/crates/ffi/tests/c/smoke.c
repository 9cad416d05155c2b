#include <math.h>
#include <stdio.h>
#include <string.h>

#include "lagan.h"

int main(void) {
    LaganImages *set = NULL;
    size_t n = 0;
    double px[625];
    LaganClass cls;
    LaganObservables obs;
    double sigma = -1.0;

    if (lagan_images_synth(4, 1, &set) != LAGAN_STATUS_OK) return 1;
    if (lagan_images_len(set, &n) != LAGAN_STATUS_OK || n != 8) return 2;
    if (lagan_images_get(set, 0, px, &cls) != LAGAN_STATUS_OK || cls != LAGAN_CLASS_SIGNAL) return 3;
    if (lagan_observables(px, &obs) != LAGAN_STATUS_OK || !(obs.pt > 0.0) || isnan(obs.tau21)) return 4;
    if (lagan_score(set, set, &sigma, NULL) != LAGAN_STATUS_OK || sigma != 0.0) return 5;
    if (lagan_images_get(set, 99, px, NULL) != LAGAN_STATUS_DIMENSION) return 6;
    if (lagan_last_error() == NULL || strlen(lagan_last_error()) == 0) return 7;
    lagan_images_free(set);
    printf("ok %s\n", lagan_version());
    return 0;
}
