#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mssdepth/mssdepth.h"

namespace {

struct Text {
    mss_text* p = nullptr;
    ~Text() { mss_text_free(p); }
    const char* str() const { return mss_text_str(p); }
};

struct Config {
    mss_config* p = nullptr;
    ~Config() { mss_config_free(p); }
};

int report(mss_status s, const char* command) {
    if (s != MSS_OK) std::fprintf(stderr, "mssdepth %s: %s error: %s\n", command, mss_status_name(s), mss_last_error());
    return mss_exit_code(s);
}

void print_line(const char* line, void*) {
    std::fputs(line, stdout);
    std::fputc('\n', stdout);
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-step spiking depth network: synthetic data, training and inspection"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    bool quiet = false;
    bool dump_defaults = false;
    app.add_option("--seed", seed, "Override the RNG seed of the command");
    app.add_flag("--quiet", quiet, "Suppress progress output");
    app.add_flag("--dump-config", dump_defaults, "Print the default run configuration and exit");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic event dataset");
    std::string spec, synth_out;
    synth->add_option("--spec", spec, "Scene spec file")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();

    auto* stack = app.add_subcommand("stack", "Stack an event window into an SPKT tensor");
    std::string st_events, st_right, st_out, st_mode = "cumulative";
    std::size_t st_steps = 5, st_height = 260, st_width = 346;
    double st_window_ms = 50.0;
    std::uint64_t st_start = 0;
    bool st_binarize = false;
    stack->add_option("--events", st_events, "Left (or only) camera event CSV")->required();
    stack->add_option("--events-right", st_right, "Right camera event CSV");
    stack->add_option("--T", st_steps, "Number of frames")->capture_default_str();
    stack->add_option("--window-ms", st_window_ms, "Window length in milliseconds")->capture_default_str();
    stack->add_option("--window-start-us", st_start, "Window start in microseconds")->capture_default_str();
    stack->add_option("--mode", st_mode, "cumulative or repeat")
        ->check(CLI::IsMember({"cumulative", "repeat"}))
        ->capture_default_str();
    stack->add_option("--height", st_height, "Sensor height")->capture_default_str();
    stack->add_option("--width", st_width, "Sensor width")->capture_default_str();
    stack->add_flag("--binarize", st_binarize, "Clamp counts to {0, 1}");
    stack->add_option("--out", st_out, "Output tensor file")->required();

    auto* train = app.add_subcommand("train", "Train on a dataset directory");
    std::string tr_config, tr_data, tr_out;
    bool tr_resume = false, tr_dump = false;
    train->add_option("--config", tr_config, "Run configuration file");
    train->add_option("--data", tr_data, "Dataset directory or manifest");
    train->add_option("--out", tr_out, "Output directory for checkpoints and log");
    train->add_flag("--resume", tr_resume, "Continue from OUT/last.spkc");
    train->add_flag("--dump-config", tr_dump, "Print the effective configuration and exit");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_model, ev_data, ev_split = "all";
    eval->add_option("--model", ev_model, "Checkpoint")->required();
    eval->add_option("--data", ev_data, "Dataset directory or manifest")->required();
    eval->add_option("--split", ev_split, "all, train or val")
        ->check(CLI::IsMember({"all", "train", "val"}))
        ->capture_default_str();

    auto* predict = app.add_subcommand("predict", "Predict a depth map for one event window");
    std::string pr_model, pr_events, pr_right, pr_out;
    std::uint64_t pr_start = 0;
    double pr_window_ms = 0.0, pr_max_depth = 10.0;
    std::size_t pr_height = 0, pr_width = 0;
    predict->add_option("--model", pr_model, "Checkpoint")->required();
    predict->add_option("--events", pr_events, "Left (or only) camera event CSV")->required();
    predict->add_option("--events-right", pr_right, "Right camera event CSV");
    predict->add_option("--window-start", pr_start, "Window start in microseconds")->capture_default_str();
    predict->add_option("--window-ms", pr_window_ms, "Window length (default: training window)");
    predict->add_option("--height", pr_height, "Sensor height (default: training geometry)");
    predict->add_option("--width", pr_width, "Sensor width (default: training geometry)");
    predict->add_option("--max-depth", pr_max_depth, "Depth mapped to white in the PGM")->capture_default_str();
    predict->add_option("--out", pr_out, "Output prefix (writes PREFIX.txt and PREFIX.pgm)")->required();

    auto* inspect = app.add_subcommand("inspect", "Report firing rates and operation counts");
    std::string in_model, in_data;
    inspect->add_option("--model", in_model, "Checkpoint")->required();
    inspect->add_option("--data", in_data, "Dataset directory or manifest")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (dump_defaults || (train->parsed() && tr_dump)) {
        Config cfg;
        mss_status s = tr_config.empty() || !train->parsed() ? mss_config_create(&cfg.p) : mss_config_load(tr_config.c_str(), &cfg.p);
        if (s == MSS_OK && seed) s = mss_config_set(cfg.p, "seed", std::to_string(*seed).c_str());
        Text text;
        if (s == MSS_OK) s = mss_config_dump(cfg.p, &text.p);
        if (s == MSS_OK) std::fputs(text.str(), stdout);
        return report(s, "dump-config");
    }

    if (synth->parsed()) {
        Text manifest;
        const mss_status s = mss_synth(spec.c_str(), synth_out.c_str(), seed ? &*seed : nullptr, &manifest.p);
        if (s == MSS_OK) std::printf("%s\n", manifest.str());
        return report(s, "synth");
    }
    if (stack->parsed()) {
        const double us = st_window_ms * 1000.0;
        if (!(us > 0.0) || us != static_cast<double>(static_cast<std::uint64_t>(us))) {
            std::fprintf(stderr, "mssdepth stack: --window-ms must be a positive whole number of microseconds\n");
            return 2;
        }
        mss_stack_options o{st_events.c_str(), st_right.c_str(), st_steps, static_cast<std::uint64_t>(us), st_start,
                            st_mode == "repeat", st_binarize, st_height, st_width, st_out.c_str()};
        const mss_status s = mss_stack(&o);
        if (s == MSS_OK && !quiet) {
            std::printf("%s [%zu,%d,%zu,%zu]\n", st_out.c_str(), st_steps, st_right.empty() ? 2 : 4, st_height, st_width);
        }
        return report(s, "stack");
    }
    if (train->parsed()) {
        if (tr_data.empty() || tr_out.empty()) {
            std::fprintf(stderr, "mssdepth train: --data and --out are required\n");
            return 2;
        }
        Config cfg;
        mss_status s = tr_config.empty() ? mss_config_create(&cfg.p) : mss_config_load(tr_config.c_str(), &cfg.p);
        if (s == MSS_OK && seed) s = mss_config_set(cfg.p, "seed", std::to_string(*seed).c_str());
        if (s == MSS_OK) s = mss_train(cfg.p, tr_data.c_str(), tr_out.c_str(), tr_resume, quiet ? nullptr : print_line, nullptr);
        return report(s, "train");
    }
    if (eval->parsed()) {
        Text text;
        const mss_status s = mss_eval(ev_model.c_str(), ev_data.c_str(), ev_split.c_str(), &text.p);
        if (s == MSS_OK) std::fputs(text.str(), stdout);
        return report(s, "eval");
    }
    if (predict->parsed()) {
        const double us = pr_window_ms * 1000.0;
        mss_predict_options o{pr_model.c_str(), pr_events.c_str(), pr_right.c_str(), pr_start,
                              static_cast<std::uint64_t>(us), pr_height, pr_width, pr_max_depth, pr_out.c_str()};
        const mss_status s = mss_predict(&o);
        if (s == MSS_OK && !quiet) std::printf("%s.txt\n%s.pgm\n", pr_out.c_str(), pr_out.c_str());
        return report(s, "predict");
    }
    if (inspect->parsed()) {
        Text text;
        const mss_status s = mss_inspect(in_model.c_str(), in_data.c_str(), &text.p);
        if (s == MSS_OK) std::fputs(text.str(), stdout);
        return report(s, "inspect");
    }
    std::cout << app.help();
    return 2;
}
