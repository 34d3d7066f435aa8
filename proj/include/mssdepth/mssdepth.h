#ifndef MSSDEPTH_H
#define MSSDEPTH_H

#include <stddef.h>
#include <stdint.h>

#if defined(MSS_BUILDING_LIBRARY)
#define MSS_API __attribute__((visibility("default")))
#else
#define MSS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mss_status {
    MSS_OK = 0,
    MSS_ERR_ARGUMENT = 1,
    MSS_ERR_DIMENSION = 2,
    MSS_ERR_STATE = 3,
    MSS_ERR_PARSE = 4,
    MSS_ERR_ORDERING = 5,
    MSS_ERR_BOUNDS = 6,
    MSS_ERR_ALIGNMENT = 7,
    MSS_ERR_METRIC = 8,
    MSS_ERR_VALIDATION = 9,
    MSS_ERR_IO = 10,
    MSS_ERR_NUMERICAL = 11,
    MSS_ERR_INTERNAL = 12
} mss_status;

/* Message of the last failed call on this thread; "" when none. */
MSS_API const char* mss_last_error(void);
MSS_API const char* mss_status_name(mss_status status);
/* Process exit code for a status: 0 ok, 3 numerical failure, 2 otherwise. */
MSS_API int mss_exit_code(mss_status status);

/* Owned text returned by report-producing calls. */
typedef struct mss_text mss_text;
MSS_API const char* mss_text_str(const mss_text* text);
MSS_API void mss_text_free(mss_text* text);

/* Run configuration (model, loss and training keys). */
typedef struct mss_config mss_config;
MSS_API mss_status mss_config_create(mss_config** out);
MSS_API mss_status mss_config_load(const char* path, mss_config** out);
MSS_API mss_status mss_config_set(mss_config* cfg, const char* key, const char* value);
MSS_API mss_status mss_config_get(const mss_config* cfg, const char* key, mss_text** out);
MSS_API mss_status mss_config_dump(const mss_config* cfg, mss_text** out);
MSS_API void mss_config_free(mss_config* cfg);

typedef struct mss_spike_stats {
    uint64_t spikes_encoder, spikes_residual, spikes_decoder;
    uint64_t neuron_steps_encoder, neuron_steps_residual, neuron_steps_decoder;
    double firing_rate_encoder, firing_rate_residual, firing_rate_decoder, firing_rate_total;
    uint64_t ac_ops;
    uint64_t dense_macs;
} mss_spike_stats;

typedef struct mss_model mss_model;
MSS_API mss_status mss_model_create(const mss_config* cfg, size_t height, size_t width, mss_model** out);
MSS_API mss_status mss_model_load(const char* checkpoint, mss_model** out);
MSS_API mss_status mss_model_save(const mss_model* model, const char* checkpoint);
MSS_API void mss_model_free(mss_model* model);
MSS_API mss_status mss_model_param_count(const mss_model* model, size_t* out);
/* input: row-major [T, C, H, W]; depth_out receives H * W values; stats may
   be NULL. Membranes start from zero on every call. */
MSS_API mss_status mss_model_forward(mss_model* model, const double* input, const size_t shape[4], double* depth_out,
                                     mss_spike_stats* stats);

/* Generates a synthetic dataset; *manifest_path (optional) names the
   written manifest. */
MSS_API mss_status mss_synth(const char* spec_path, const char* out_dir, const uint64_t* seed_override,
                             mss_text** manifest_path);

typedef struct mss_stack_options {
    const char* events_left;
    const char* events_right; /* NULL or "" for monocular input */
    size_t steps;
    uint64_t window_us;
    uint64_t window_start_us;
    int repeat; /* 0 cumulative, 1 repeat */
    int binarize;
    size_t height;
    size_t width;
    const char* out_path;
} mss_stack_options;
MSS_API mss_status mss_stack(const mss_stack_options* opts);

typedef void (*mss_log_fn)(const char* line, void* user);
MSS_API mss_status mss_train(const mss_config* cfg, const char* data_dir, const char* out_dir, int resume,
                             mss_log_fn log, void* user);
/* split: "all", "train" or "val". */
MSS_API mss_status mss_eval(const char* checkpoint, const char* data_dir, const char* split, mss_text** report);

typedef struct mss_predict_options {
    const char* model;
    const char* events_left;
    const char* events_right; /* NULL or "" for monocular input */
    uint64_t window_start_us;
    uint64_t window_us;       /* 0: training window */
    size_t height, width;     /* 0: checkpoint geometry */
    double max_depth;
    const char* out_prefix;
} mss_predict_options;
MSS_API mss_status mss_predict(const mss_predict_options* opts);
MSS_API mss_status mss_inspect(const char* checkpoint, const char* data_dir, mss_text** report);

#ifdef __cplusplus
}
#endif

#endif
