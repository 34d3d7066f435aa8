#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "mssdepth/mssdepth.h"

static int failures = 0;

#define EXPECT(cond)                                                                      \
    do {                                                                                  \
        if (!(cond)) {                                                                    \
            fprintf(stderr, "%s:%d: expected %s (last error: %s)\n", __FILE__, __LINE__, #cond, \
                    mss_last_error());                                                    \
            ++failures;                                                                   \
        }                                                                                 \
    } while (0)

static char scratch[1024];

static const char* path_in(const char* name) {
    static char buf[4][1200];
    static int slot = 0;
    slot = (slot + 1) % 4;
    snprintf(buf[slot], sizeof buf[slot], "%s/%s", scratch, name);
    return buf[slot];
}

static void count_lines(const char* line, void* user) {
    (void)line;
    ++*(int*)user;
}

static mss_config* tiny_config(void) {
    mss_config* cfg = NULL;
    EXPECT(mss_config_create(&cfg) == MSS_OK);
    EXPECT(mss_config_set(cfg, "T", "2") == MSS_OK);
    EXPECT(mss_config_set(cfg, "base_channels", "2") == MSS_OK);
    EXPECT(mss_config_set(cfg, "epochs", "1") == MSS_OK);
    return cfg;
}

static void test_status(void) {
    EXPECT(strcmp(mss_status_name(MSS_OK), "ok") == 0);
    EXPECT(mss_exit_code(MSS_OK) == 0);
    EXPECT(mss_exit_code(MSS_ERR_NUMERICAL) == 3);
    EXPECT(mss_exit_code(MSS_ERR_VALIDATION) == 2);
    EXPECT(mss_exit_code(MSS_ERR_IO) == 2);
}

static void test_config(void) {
    mss_config* cfg = tiny_config();
    mss_text* text = NULL;
    EXPECT(mss_config_get(cfg, "T", &text) == MSS_OK);
    EXPECT(strcmp(mss_text_str(text), "2") == 0);
    mss_text_free(text);

    EXPECT(mss_config_set(cfg, "no_such_key", "1") == MSS_ERR_VALIDATION);
    EXPECT(strstr(mss_last_error(), "no_such_key") != NULL);
    EXPECT(mss_config_set(NULL, "T", "1") == MSS_ERR_ARGUMENT);

    EXPECT(mss_config_dump(cfg, &text) == MSS_OK);
    FILE* f = fopen(path_in("cfg.txt"), "w");
    fputs(mss_text_str(text), f);
    fclose(f);
    mss_config* back = NULL;
    EXPECT(mss_config_load(path_in("cfg.txt"), &back) == MSS_OK);
    mss_text* again = NULL;
    EXPECT(mss_config_dump(back, &again) == MSS_OK);
    EXPECT(strcmp(mss_text_str(text), mss_text_str(again)) == 0);
    mss_text_free(text);
    mss_text_free(again);
    mss_config_free(back);
    mss_config_free(cfg);
    EXPECT(mss_config_load(path_in("missing.txt"), &back) == MSS_ERR_IO);
}

static void test_model(void) {
    mss_config* cfg = tiny_config();
    mss_model* model = NULL;
    EXPECT(mss_model_create(cfg, 16, 16, &model) == MSS_OK);
    size_t params = 0;
    EXPECT(mss_model_param_count(model, &params) == MSS_OK);
    EXPECT(params > 0);

    const size_t shape[4] = {2, 4, 16, 16};
    const size_t n = 2 * 4 * 16 * 16;
    double* input = calloc(n, sizeof(double));
    double depth[256];
    mss_spike_stats stats;
    EXPECT(mss_model_forward(model, input, shape, depth, &stats) == MSS_OK);
    for (int i = 0; i < 256; ++i) EXPECT(depth[i] == 0.0);
    EXPECT(stats.ac_ops == 0);
    EXPECT(stats.firing_rate_total == 0.0);
    EXPECT(stats.dense_macs > 0);

    for (size_t i = 0; i < n; ++i) input[i] = (double)(i % 7) * 4.0;
    double first[256], second[256];
    EXPECT(mss_model_forward(model, input, shape, first, NULL) == MSS_OK);
    EXPECT(mss_model_save(model, path_in("m.spkc")) == MSS_OK);
    mss_model* loaded = NULL;
    EXPECT(mss_model_load(path_in("m.spkc"), &loaded) == MSS_OK);
    EXPECT(mss_model_forward(loaded, input, shape, second, &stats) == MSS_OK);
    EXPECT(memcmp(first, second, sizeof first) == 0);
    EXPECT(stats.spikes_encoder > 0);
    EXPECT(stats.firing_rate_total > 0.0 && stats.firing_rate_total < 1.0);

    const size_t bad_shape[4] = {2, 2, 16, 16};
    EXPECT(mss_model_forward(model, input, bad_shape, depth, NULL) == MSS_ERR_DIMENSION);
    EXPECT(strlen(mss_last_error()) > 0);
    EXPECT(mss_model_forward(model, NULL, shape, depth, NULL) == MSS_ERR_ARGUMENT);

    FILE* f = fopen(path_in("bad.spkc"), "w");
    fputs("garbage", f);
    fclose(f);
    EXPECT(mss_model_load(path_in("bad.spkc"), &loaded) != MSS_OK);
    EXPECT(strstr(mss_last_error(), "bad.spkc") != NULL);

    free(input);
    mss_model_free(loaded);
    mss_model_free(model);
    mss_config_free(cfg);
}

static void test_pipeline(void) {
    FILE* f = fopen(path_in("scene.txt"), "w");
    fputs("seed = 2\nheight = 16\nwidth = 16\nn_windows = 3\nplane.0 = 1 0 0 8 16 6\nplane.1 = 2 8 0 16 16 6\n", f);
    fclose(f);
    mss_text* manifest = NULL;
    EXPECT(mss_synth(path_in("scene.txt"), path_in("data"), NULL, &manifest) == MSS_OK);
    EXPECT(strstr(mss_text_str(manifest), "manifest.txt") != NULL);
    mss_text_free(manifest);

    mss_stack_options so;
    memset(&so, 0, sizeof so);
    so.events_left = path_in("data/events_left.csv");
    so.events_right = path_in("data/events_right.csv");
    so.steps = 2;
    so.window_us = 50000;
    so.height = 16;
    so.width = 16;
    so.out_path = path_in("stack.spkt");
    EXPECT(mss_stack(&so) == MSS_OK);
    so.height = 4;
    EXPECT(mss_stack(&so) == MSS_ERR_BOUNDS);

    mss_config* cfg = tiny_config();
    EXPECT(mss_config_set(cfg, "val_fraction", "0") == MSS_OK);
    int lines = 0;
    EXPECT(mss_train(cfg, path_in("data"), path_in("run"), 0, count_lines, &lines) == MSS_OK);
    EXPECT(lines >= 5);

    mss_text* report = NULL;
    EXPECT(mss_eval(path_in("run/last.spkc"), path_in("data"), "all", &report) == MSS_OK);
    EXPECT(strstr(mss_text_str(report), "windows=3") != NULL);
    EXPECT(strstr(mss_text_str(report), "mde_cm=") != NULL);
    mss_text_free(report);
    EXPECT(mss_eval(path_in("run/last.spkc"), path_in("data"), "val", &report) == MSS_ERR_VALIDATION);

    EXPECT(mss_inspect(path_in("run/last.spkc"), path_in("data"), &report) == MSS_OK);
    EXPECT(strstr(mss_text_str(report), "dense_macs=") != NULL);
    mss_text_free(report);

    mss_predict_options po;
    memset(&po, 0, sizeof po);
    po.model = path_in("run/last.spkc");
    po.events_left = path_in("data/events_left.csv");
    po.events_right = path_in("data/events_right.csv");
    po.max_depth = 10.0;
    po.out_prefix = path_in("pred");
    EXPECT(mss_predict(&po) == MSS_OK);
    f = fopen(path_in("pred.pgm"), "r");
    EXPECT(f != NULL);
    if (f) {
        char magic[3] = {0};
        size_t w = 0, h = 0;
        EXPECT(fscanf(f, "%2s %zu %zu", magic, &w, &h) == 3);
        EXPECT(strcmp(magic, "P2") == 0 && w == 16 && h == 16);
        fclose(f);
    }
    mss_config_free(cfg);
}

int main(int argc, char** argv) {
    snprintf(scratch, sizeof scratch, "%s", argc > 1 ? argv[1] : "capi_scratch");
    mkdir(scratch, 0755);
    test_status();
    test_config();
    test_model();
    test_pipeline();
    if (failures) {
        fprintf(stderr, "%d check(s) failed\n", failures);
        return 1;
    }
    puts("all C API checks passed");
    return 0;
}
