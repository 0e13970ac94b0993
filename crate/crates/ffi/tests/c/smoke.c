#include <stdio.h>
#include <string.h>
#include "gamebench.h"

#define CHECK(x) do { GbStatus s_ = (x); if (s_ != GB_OK) { \
    fprintf(stderr, "%s -> %d: %s\n", #x, s_, gb_last_error()); return 1; } } while (0)

int main(void) {
    GbRegistry *reg = NULL;
    GbRun *run = NULL;
    char *chain = NULL;
    char *rec = NULL;

    CHECK(gb_registry_open(NULL, &reg));
    if (gb_run_open(reg, "nope", 0, 0, 0, &run) != GB_ERR_CONFIG || gb_last_error() == NULL) {
        fprintf(stderr, "bad preset accepted\n");
        return 1;
    }
    CHECK(gb_run_open(reg, "snake+t01+oracle", 7, 0, 0, &run));
    CHECK(gb_run_play(run));
    if (gb_run_is_finished(run) != 1) {
        fprintf(stderr, "run not finished\n");
        return 1;
    }
    CHECK(gb_run_chain(run, &chain));
    CHECK(gb_run_record_json(run, &rec));
    if (strlen(chain) != 64 || strstr(rec, "\"status\":\"success\"") == NULL) {
        fprintf(stderr, "unexpected result: %s\n", rec);
        return 1;
    }
    printf("%s\n", chain);
    gb_string_free(chain);
    gb_string_free(rec);
    gb_run_free(run);
    gb_registry_free(reg);
    return 0;
}
