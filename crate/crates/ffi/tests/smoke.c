#include <stdio.h>
#include "twogroups.h"

int main(void) {
    TgModel *model = NULL;
    double p = 0.0;
    if (tg_model_new_normal(0.9, 2.5, 0.5, 1.0, &model) != TG_STATUS_OK) {
        fprintf(stderr, "%s\n", tg_last_error_message());
        return 1;
    }
    if (tg_exceedance(model, 3.5, 1.0, 2.8, TG_TAIL_UPPER, &p) != TG_STATUS_OK) {
        tg_model_free(model);
        return 1;
    }
    printf("%s %.6f\n", tg_version(), p);
    tg_model_free(model);
    return 0;
}
