#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mssdepth/events.hpp"
#include "mssdepth/model.hpp"
#include "mssdepth/objective.hpp"
#include "mssdepth/synth.hpp"

namespace mss::harness {

struct RunConfig {
    net::ModelConfig model;
    objective::LossConfig loss;
    double learning_rate = 0.002;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t epochs = 125;
    std::vector<double> milestone_fractions{0.5, 0.75};
    std::size_t max_steps = 0; // 0: no cap
    events::StackMode stack_mode = events::StackMode::cumulative;
    bool binarize = false;
    std::size_t windows_per_step = 1;
    double val_fraction = 0.2;
    bool multiscale_loss = false; // also supervise the coarser prediction heads

    void validate() const;
};

// Every accepted key, in dump order.
const std::vector<std::string>& config_keys();
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
// Re-ingests to an identical RunConfig.
std::string dump_config(const RunConfig& cfg);

// Learning rate for a 0-based epoch: halved once per milestone m with
// epoch >= m * epochs.
double lr_at_epoch(const RunConfig& cfg, std::size_t epoch);

struct Dataset {
    synth::Manifest manifest;
    std::vector<events::Event> left;
    std::vector<events::Event> right;
    std::vector<events::DepthFrame> ground_truth; // one per window

    bool binocular() const { return !manifest.events_right.empty(); }
    std::size_t size() const { return manifest.windows.size(); }
};

Dataset load_dataset(const std::string& path_or_dir);

struct StackSettings {
    std::size_t steps = 5;
    events::StackMode mode = events::StackMode::cumulative;
    bool binarize = false;
};

events::StackedTensor window_input(const Dataset& ds, std::size_t window, const StackSettings& s);

// Windows [0, n - floor(n * val_fraction)) train, the rest validate.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
Split split_windows(std::size_t n, double val_fraction);

// Ground truth at 1/factor resolution: each coarse pixel averages the valid
// pixels of its factor x factor block and is invalid when the block has none.
events::DepthFrame coarse_ground_truth(const events::DepthFrame& gt, std::size_t factor);

// Training loss of one window: the final prediction, plus every coarser head
// when multiscale_loss is set.
Tensor window_loss(Tape& tape, const net::ForwardResult& fr, const events::DepthFrame& gt, const RunConfig& cfg);

struct Metrics {
    std::size_t windows = 0;
    double mde_cm = 0.0;
    double loss_ssi = 0.0;
    double loss_reg = 0.0;
    double loss_total = 0.0;
    net::SpikeStats stats;
};

Metrics evaluate(net::MssNet& model, const Dataset& ds, const std::vector<std::size_t>& windows,
                 const StackSettings& stack, const objective::LossConfig& loss);
std::string format_metrics(const Metrics& m);

struct TrainState {
    std::size_t epoch = 0; // completed epochs
    std::uint64_t step = 0;
    double lr = 0.0;
    double best_val_mde = 0.0; // meaningful once epoch > 0
    std::uint64_t window_us = 0; // window length of the training data
};

struct Checkpoint {
    RunConfig config;
    TrainState state;
    NamedTensors tensors; // parameters and optimiser moments
};

void save_checkpoint(const std::string& path, const net::MssNet& model, const RunConfig& cfg, const TrainState& state);
Checkpoint load_checkpoint(const std::string& path);
net::MssNet model_from_checkpoint(const Checkpoint& ckpt);

using LogFn = std::function<void(const std::string& line)>;

struct TrainSummary {
    TrainState state;
    Metrics final_metrics; // over all windows
    std::string last_checkpoint;
    std::string best_checkpoint;
};

// Writes last.spkc, best.spkc and train.log into out_dir. A non-finite loss
// raises a numerical error and leaves the last checkpoint untouched.
TrainSummary train(const RunConfig& cfg, const std::string& data, const std::string& out_dir, const LogFn& log,
                   bool resume = false);

enum class EvalSplit { all, train, val };
EvalSplit parse_split(const std::string& s);

Metrics eval_checkpoint(const std::string& ckpt, const std::string& data, EvalSplit split = EvalSplit::all);

struct StackRequest {
    std::string events_left;
    std::string events_right;
    std::size_t steps = 5;
    std::uint64_t window_us = 50'000;
    std::uint64_t window_start = 0;
    events::StackMode mode = events::StackMode::cumulative;
    bool binarize = false;
    events::Geometry geometry{260, 346};
};

events::StackedTensor stack_files(const StackRequest& req);

struct PredictRequest {
    std::string model;
    std::string events_left;
    std::string events_right;
    std::uint64_t window_start = 0;
    std::uint64_t window_us = 0; // zero: the training window length
    events::Geometry geometry;   // zero: checkpoint geometry
    double max_depth = 10.0;
    std::string out_prefix;
};

// Writes PREFIX.txt (depth text grid) and PREFIX.pgm; returns the prediction.
events::DepthFrame predict(const PredictRequest& req);
void write_pgm(const std::string& path, const Tensor& depth, double max_depth);

struct InspectReport {
    Metrics metrics;
    std::uint64_t dense_macs = 0;
};
InspectReport inspect(const std::string& ckpt, const std::string& data);
std::string format_inspect(const InspectReport& r);

} // namespace mss::harness
