#include "mssdepth/mssdepth.h"

#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "mssdepth/error.hpp"
#include "mssdepth/harness.hpp"
#include "mssdepth/serialize.hpp"
#include "mssdepth/synth.hpp"

struct mss_text {
    std::string value;
};

struct mss_config {
    mss::harness::RunConfig cfg;
};

struct mss_model {
    mss::harness::RunConfig cfg;
    mss::harness::TrainState state;
    std::optional<mss::net::MssNet> net;
};

namespace {

thread_local std::string last_error;

mss_status status_of(mss::ErrorKind k) {
    using mss::ErrorKind;
    switch (k) {
    case ErrorKind::argument: return MSS_ERR_ARGUMENT;
    case ErrorKind::dimension: return MSS_ERR_DIMENSION;
    case ErrorKind::state: return MSS_ERR_STATE;
    case ErrorKind::parse: return MSS_ERR_PARSE;
    case ErrorKind::ordering: return MSS_ERR_ORDERING;
    case ErrorKind::bounds: return MSS_ERR_BOUNDS;
    case ErrorKind::alignment: return MSS_ERR_ALIGNMENT;
    case ErrorKind::metric: return MSS_ERR_METRIC;
    case ErrorKind::validation: return MSS_ERR_VALIDATION;
    case ErrorKind::io: return MSS_ERR_IO;
    case ErrorKind::numerical: return MSS_ERR_NUMERICAL;
    }
    return MSS_ERR_INTERNAL;
}

template <class Fn>
mss_status guarded(Fn&& fn) {
    try {
        fn();
        last_error.clear();
        return MSS_OK;
    } catch (const mss::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown error";
    }
    return MSS_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
    if (!p) mss::fail(mss::ErrorKind::argument, std::string(what) + " must not be NULL");
}

std::string opt_str(const char* s) { return s ? s : ""; }

mss_text* make_text(std::string s) { return new mss_text{std::move(s)}; }

} // namespace

extern "C" {

const char* mss_last_error(void) { return last_error.c_str(); }

const char* mss_status_name(mss_status s) {
    switch (s) {
    case MSS_OK: return "ok";
    case MSS_ERR_ARGUMENT: return "argument";
    case MSS_ERR_DIMENSION: return "dimension";
    case MSS_ERR_STATE: return "state";
    case MSS_ERR_PARSE: return "parse";
    case MSS_ERR_ORDERING: return "ordering";
    case MSS_ERR_BOUNDS: return "bounds";
    case MSS_ERR_ALIGNMENT: return "alignment";
    case MSS_ERR_METRIC: return "metric";
    case MSS_ERR_VALIDATION: return "validation";
    case MSS_ERR_IO: return "io";
    case MSS_ERR_NUMERICAL: return "numerical";
    case MSS_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

int mss_exit_code(mss_status s) {
    if (s == MSS_OK) return 0;
    return s == MSS_ERR_NUMERICAL ? 3 : 2;
}

const char* mss_text_str(const mss_text* t) { return t ? t->value.c_str() : ""; }
void mss_text_free(mss_text* t) { delete t; }

mss_status mss_config_create(mss_config** out) {
    return guarded([&] {
        require(out, "out");
        *out = new mss_config{};
    });
}

mss_status mss_config_load(const char* path, mss_config** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new mss_config{mss::harness::load_config(path)};
    });
}

mss_status mss_config_set(mss_config* c, const char* key, const char* value) {
    return guarded([&] {
        require(c, "config");
        require(key, "key");
        require(value, "value");
        mss::harness::RunConfig next = c->cfg;
        mss::harness::set_key(next, key, value);
        c->cfg = next;
    });
}

mss_status mss_config_get(const mss_config* c, const char* key, mss_text** out) {
    return guarded([&] {
        require(c, "config");
        require(key, "key");
        require(out, "out");
        *out = make_text(mss::harness::get_key(c->cfg, key));
    });
}

mss_status mss_config_dump(const mss_config* c, mss_text** out) {
    return guarded([&] {
        require(c, "config");
        require(out, "out");
        *out = make_text(mss::harness::dump_config(c->cfg));
    });
}

void mss_config_free(mss_config* c) { delete c; }

mss_status mss_model_create(const mss_config* c, size_t height, size_t width, mss_model** out) {
    return guarded([&] {
        require(c, "config");
        require(out, "out");
        c->cfg.validate();
        auto m = std::make_unique<mss_model>();
        m->cfg = c->cfg;
        m->cfg.model.geometry = {height, width};
        m->net.emplace(m->cfg.model);
        *out = m.release();
    });
}

mss_status mss_model_load(const char* checkpoint, mss_model** out) {
    return guarded([&] {
        require(checkpoint, "checkpoint");
        require(out, "out");
        auto ck = mss::harness::load_checkpoint(checkpoint);
        auto m = std::make_unique<mss_model>();
        m->cfg = ck.config;
        m->state = ck.state;
        try {
            m->net.emplace(mss::harness::model_from_checkpoint(ck));
        } catch (const mss::Error& e) {
            mss::fail(e.kind(), std::string(checkpoint) + ": " + e.what());
        }
        *out = m.release();
    });
}

mss_status mss_model_save(const mss_model* m, const char* checkpoint) {
    return guarded([&] {
        require(m, "model");
        require(checkpoint, "checkpoint");
        mss::harness::save_checkpoint(checkpoint, *m->net, m->cfg, m->state);
    });
}

void mss_model_free(mss_model* m) { delete m; }

mss_status mss_model_param_count(const mss_model* m, size_t* out) {
    return guarded([&] {
        require(m, "model");
        require(out, "out");
        *out = m->net->parameter_count();
    });
}

mss_status mss_model_forward(mss_model* m, const double* input, const size_t shape[4], double* depth_out,
                             mss_spike_stats* stats) {
    return guarded([&] {
        require(m, "model");
        require(input, "input");
        require(shape, "shape");
        require(depth_out, "depth_out");
        const mss::Shape s{shape[0], shape[1], shape[2], shape[3]};
        mss::Tensor x(s, std::vector<double>(input, input + mss::shape_numel(s)));
        mss::Tape tape(false);
        auto fr = m->net->forward(tape, x);
        std::copy(fr.depth.data().begin(), fr.depth.data().end(), depth_out);
        if (stats) {
            const auto& st = fr.stats;
            *stats = mss_spike_stats{st.encoder.spikes,       st.residual.spikes,       st.decoder.spikes,
                                     st.encoder.neuron_steps, st.residual.neuron_steps, st.decoder.neuron_steps,
                                     st.encoder.rate(),       st.residual.rate(),       st.decoder.rate(),
                                     st.total().rate(),       st.ac_ops,                m->net->dense_macs({shape[2], shape[3]})};
        }
    });
}

mss_status mss_synth(const char* spec_path, const char* out_dir, const uint64_t* seed_override, mss_text** manifest) {
    return guarded([&] {
        require(spec_path, "spec_path");
        require(out_dir, "out_dir");
        auto spec = mss::synth::load_spec(spec_path);
        if (seed_override) spec.seed = *seed_override;
        auto path = mss::synth::write_dataset(spec, out_dir);
        if (manifest) *manifest = make_text(path);
    });
}

mss_status mss_stack(const mss_stack_options* o) {
    return guarded([&] {
        require(o, "options");
        require(o->events_left, "events_left");
        require(o->out_path, "out_path");
        mss::harness::StackRequest req;
        req.events_left = o->events_left;
        req.events_right = opt_str(o->events_right);
        req.steps = o->steps;
        req.window_us = o->window_us;
        req.window_start = o->window_start_us;
        req.mode = o->repeat ? mss::events::StackMode::repeat : mss::events::StackMode::cumulative;
        req.binarize = o->binarize != 0;
        req.geometry = {o->height, o->width};
        mss::save_tensor(o->out_path, mss::harness::stack_files(req).data);
    });
}

mss_status mss_train(const mss_config* c, const char* data_dir, const char* out_dir, int resume, mss_log_fn log,
                     void* user) {
    return guarded([&] {
        require(c, "config");
        require(data_dir, "data_dir");
        require(out_dir, "out_dir");
        mss::harness::LogFn fn;
        if (log) fn = [&](const std::string& line) { log(line.c_str(), user); };
        mss::harness::train(c->cfg, data_dir, out_dir, fn, resume != 0);
    });
}

mss_status mss_eval(const char* checkpoint, const char* data_dir, const char* split, mss_text** report) {
    return guarded([&] {
        require(checkpoint, "checkpoint");
        require(data_dir, "data_dir");
        require(report, "report");
        const auto which = mss::harness::parse_split(split ? split : "all");
        *report = make_text(mss::harness::format_metrics(mss::harness::eval_checkpoint(checkpoint, data_dir, which)));
    });
}

mss_status mss_predict(const mss_predict_options* o) {
    return guarded([&] {
        require(o, "options");
        require(o->model, "model");
        require(o->events_left, "events_left");
        require(o->out_prefix, "out_prefix");
        mss::harness::PredictRequest req;
        req.model = o->model;
        req.events_left = o->events_left;
        req.events_right = opt_str(o->events_right);
        req.window_start = o->window_start_us;
        req.window_us = o->window_us;
        req.geometry = {o->height, o->width};
        req.max_depth = o->max_depth;
        req.out_prefix = o->out_prefix;
        mss::harness::predict(req);
    });
}

mss_status mss_inspect(const char* checkpoint, const char* data_dir, mss_text** report) {
    return guarded([&] {
        require(checkpoint, "checkpoint");
        require(data_dir, "data_dir");
        require(report, "report");
        *report = make_text(mss::harness::format_inspect(mss::harness::inspect(checkpoint, data_dir)));
    });
}

} // extern "C"
