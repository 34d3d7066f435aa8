#include "mssdepth/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "mssdepth/error.hpp"
#include "mssdepth/keyvalue.hpp"
#include "mssdepth/ops.hpp"
#include "mssdepth/serialize.hpp"

namespace mss::harness {

namespace fs = std::filesystem;
using events::format_double;

namespace {

std::string fmt(double v) { return format_double(v); }

std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s;
}

const char* mode_name(neuron::Mode m) {
    switch (m) {
    case neuron::Mode::spiking: return "spiking";
    case neuron::Mode::integrator: return "integrator";
    case neuron::Mode::smooth: return "smooth";
    }
    return "?";
}

neuron::Mode parse_mode(const std::string& s) {
    if (s == "spiking") return neuron::Mode::spiking;
    if (s == "integrator") return neuron::Mode::integrator;
    if (s == "smooth") return neuron::Mode::smooth;
    fail(ErrorKind::validation, "neuron_mode must be spiking, integrator or smooth, got '" + s + "'");
}

events::StackMode parse_stack_mode(const std::string& s) {
    if (s == "cumulative") return events::StackMode::cumulative;
    if (s == "repeat") return events::StackMode::repeat;
    fail(ErrorKind::validation, "stack_mode must be cumulative or repeat, got '" + s + "'");
}

const char* stack_mode_name(events::StackMode m) {
    return m == events::StackMode::cumulative ? "cumulative" : "repeat";
}

std::size_t to_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(kv::to_u64(key, value));
}

StackSettings stack_settings(const RunConfig& cfg) { return {cfg.model.steps, cfg.stack_mode, cfg.binarize}; }

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string rates(const net::SpikeStats& s) {
    return "firing_rate_encoder=" + fmt(s.encoder.rate()) + " firing_rate_residual=" + fmt(s.residual.rate()) +
           " firing_rate_decoder=" + fmt(s.decoder.rate()) + " firing_rate_total=" + fmt(s.total().rate());
}

void check_channels(const net::ModelConfig& m, bool binocular, const std::string& what) {
    const std::size_t c = binocular ? 4 : 2;
    if (m.in_channels != c) {
        fail(ErrorKind::dimension, "model expects " + std::to_string(m.in_channels) + " input channels but " + what +
                                       " is " + (binocular ? "binocular (4)" : "monocular (2)"));
    }
}

Tensor text_tensor(const std::string& s) {
    std::vector<double> v(s.begin(), s.end());
    if (v.empty()) v.push_back(0.0);
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

std::string tensor_text(const Tensor& t) {
    std::string s;
    for (double c : t.data())
        if (c != 0.0) s.push_back(static_cast<char>(c));
    return s;
}

const Tensor& entry(const NamedTensors& entries, const std::string& name, const std::string& path) {
    for (const auto& [n, t] : entries)
        if (n == name) return t;
    fail(ErrorKind::validation, path + ": checkpoint lacks entry '" + name + "'");
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    if (!(learning_rate > 0.0)) fail(ErrorKind::validation, "learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail(ErrorKind::validation, "adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail(ErrorKind::validation, "adam_beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail(ErrorKind::validation, "adam_eps must be > 0");
    if (epochs == 0) fail(ErrorKind::validation, "epochs must be >= 1");
    for (double m : milestone_fractions) {
        if (!(m > 0.0 && m <= 1.0)) fail(ErrorKind::validation, "milestone fractions must lie in (0, 1]");
    }
    if (windows_per_step == 0) fail(ErrorKind::validation, "windows_per_step must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(ErrorKind::validation, "val_fraction must be in [0, 1)");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "T", "in_channels", "base_channels", "layers", "encoder_variant", "attention", "reduction",
        "temporal_reduction", "v_threshold", "v_reset", "surrogate_alpha", "neuron_mode", "conv_bias", "seed",
        "lambda_reg", "ssi_sign", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "epochs",
        "milestone_fractions", "max_steps", "stack_mode", "binarize", "windows_per_step", "val_fraction",
        "multiscale_loss",
    };
    return keys;
}

void set_key(RunConfig& c, const std::string& k, const std::string& v) {
    auto& m = c.model;
    if (k == "T") m.steps = to_size(k, v);
    else if (k == "in_channels") m.in_channels = to_size(k, v);
    else if (k == "base_channels") m.base_channels = to_size(k, v);
    else if (k == "layers") m.layers = to_size(k, v);
    else if (k == "encoder_variant") m.encoder_variant = net::parse_variant(v);
    else if (k == "attention") m.attention = attention::parse_modules(v);
    else if (k == "reduction") m.reduction = to_size(k, v);
    else if (k == "temporal_reduction") m.temporal_reduction = to_size(k, v);
    else if (k == "v_threshold") m.v_threshold = kv::to_double(k, v);
    else if (k == "v_reset") m.v_reset = kv::to_double(k, v);
    else if (k == "surrogate_alpha") m.surrogate_alpha = kv::to_double(k, v);
    else if (k == "neuron_mode") m.neuron_mode = parse_mode(v);
    else if (k == "conv_bias") m.conv_bias = kv::to_bool(k, v);
    else if (k == "seed") m.seed = kv::to_u64(k, v);
    else if (k == "lambda_reg") c.loss.lambda_reg = kv::to_double(k, v);
    else if (k == "ssi_sign") c.loss.ssi_sign = objective::parse_ssi_sign(v);
    else if (k == "learning_rate") c.learning_rate = kv::to_double(k, v);
    else if (k == "adam_beta1") c.adam_beta1 = kv::to_double(k, v);
    else if (k == "adam_beta2") c.adam_beta2 = kv::to_double(k, v);
    else if (k == "adam_eps") c.adam_eps = kv::to_double(k, v);
    else if (k == "epochs") c.epochs = to_size(k, v);
    else if (k == "milestone_fractions") c.milestone_fractions = kv::to_doubles(k, v);
    else if (k == "max_steps") c.max_steps = to_size(k, v);
    else if (k == "stack_mode") c.stack_mode = parse_stack_mode(v);
    else if (k == "binarize") c.binarize = kv::to_bool(k, v);
    else if (k == "windows_per_step") c.windows_per_step = to_size(k, v);
    else if (k == "val_fraction") c.val_fraction = kv::to_double(k, v);
    else if (k == "multiscale_loss") c.multiscale_loss = kv::to_bool(k, v);
    else fail(ErrorKind::validation, "unknown config key '" + k + "'");
}

std::string get_key(const RunConfig& c, const std::string& k) {
    const auto& m = c.model;
    if (k == "T") return std::to_string(m.steps);
    if (k == "in_channels") return std::to_string(m.in_channels);
    if (k == "base_channels") return std::to_string(m.base_channels);
    if (k == "layers") return std::to_string(m.layers);
    if (k == "encoder_variant") return net::to_string(m.encoder_variant);
    if (k == "attention") return attention::modules_str(m.attention);
    if (k == "reduction") return std::to_string(m.reduction);
    if (k == "temporal_reduction") return std::to_string(m.temporal_reduction);
    if (k == "v_threshold") return fmt(m.v_threshold);
    if (k == "v_reset") return fmt(m.v_reset);
    if (k == "surrogate_alpha") return fmt(m.surrogate_alpha);
    if (k == "neuron_mode") return mode_name(m.neuron_mode);
    if (k == "conv_bias") return m.conv_bias ? "true" : "false";
    if (k == "seed") return std::to_string(m.seed);
    if (k == "lambda_reg") return fmt(c.loss.lambda_reg);
    if (k == "ssi_sign") return objective::to_string(c.loss.ssi_sign);
    if (k == "learning_rate") return fmt(c.learning_rate);
    if (k == "adam_beta1") return fmt(c.adam_beta1);
    if (k == "adam_beta2") return fmt(c.adam_beta2);
    if (k == "adam_eps") return fmt(c.adam_eps);
    if (k == "epochs") return std::to_string(c.epochs);
    if (k == "milestone_fractions") return fmt_list(c.milestone_fractions);
    if (k == "max_steps") return std::to_string(c.max_steps);
    if (k == "stack_mode") return stack_mode_name(c.stack_mode);
    if (k == "binarize") return c.binarize ? "true" : "false";
    if (k == "windows_per_step") return std::to_string(c.windows_per_step);
    if (k == "val_fraction") return fmt(c.val_fraction);
    if (k == "multiscale_loss") return c.multiscale_loss ? "true" : "false";
    fail(ErrorKind::validation, "unknown config key '" + k + "'");
}

RunConfig parse_config(std::istream& in, const std::string& source) {
    RunConfig cfg;
    for (const auto& e : kv::parse(in, source)) {
        try {
            set_key(cfg, e.key, e.value);
        } catch (const Error& err) {
            fail(err.kind(), source + ":" + std::to_string(e.line) + ": " + err.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config " + path);
    return parse_config(in, path);
}

std::string dump_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) out += k + " = " + get_key(cfg, k) + "\n";
    return out;
}

double lr_at_epoch(const RunConfig& cfg, std::size_t epoch) {
    double lr = cfg.learning_rate;
    for (double m : cfg.milestone_fractions)
        if (static_cast<double>(epoch) >= m * static_cast<double>(cfg.epochs)) lr *= 0.5;
    return lr;
}

Dataset load_dataset(const std::string& path_or_dir) {
    Dataset ds;
    ds.manifest = synth::load_manifest(path_or_dir);
    const auto& m = ds.manifest;
    if (m.windows.empty()) fail(ErrorKind::validation, "dataset " + path_or_dir + " lists no windows");
    ds.left = events::load_events(m.resolve(m.events_left));
    if (!m.events_right.empty()) ds.right = events::load_events(m.resolve(m.events_right));

    std::vector<events::DepthFrame> frames;
    std::set<std::string> seen;
    for (const auto& w : m.windows) {
        if (!seen.insert(w.ground_truth).second) continue;
        const std::string path = m.resolve(w.ground_truth);
        auto f = events::load_depth(path);
        if (f.geometry() != m.geometry) {
            fail(ErrorKind::dimension, path + ": depth frame is " + std::to_string(f.geometry().height) + "x" +
                                           std::to_string(f.geometry().width) + ", dataset is " +
                                           std::to_string(m.geometry.height) + "x" + std::to_string(m.geometry.width));
        }
        frames.push_back(std::move(f));
    }
    std::stable_sort(frames.begin(), frames.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    for (const auto& w : m.windows) ds.ground_truth.push_back(events::align_ground_truth(frames, w.start, w.end - w.start));
    return ds;
}

events::StackedTensor window_input(const Dataset& ds, std::size_t window, const StackSettings& s) {
    const auto& w = ds.manifest.windows.at(window);
    events::StackOptions opts;
    opts.window_start = w.start;
    opts.window_len = w.end - w.start;
    opts.steps = s.steps;
    opts.geometry = ds.manifest.geometry;
    opts.binarize = s.binarize;
    auto left = events::stack(events::window_slice(ds.left, w.start, w.end), opts, s.mode);
    if (!ds.binocular()) return left;
    auto right = events::stack(events::window_slice(ds.right, w.start, w.end), opts, s.mode);
    return events::binocular_concat(left, right);
}

Split split_windows(std::size_t n, double val_fraction) {
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
    Split s;
    for (std::size_t i = 0; i < n; ++i) (i < n - n_val ? s.train : s.val).push_back(i);
    return s;
}

events::DepthFrame coarse_ground_truth(const events::DepthFrame& gt, std::size_t factor) {
    if (factor < 1) fail(ErrorKind::argument, "coarse_ground_truth: factor must be >= 1");
    const std::size_t h = gt.depth.dim(0), w = gt.depth.dim(1);
    const std::size_t ch = (h + factor - 1) / factor, cw = (w + factor - 1) / factor;
    events::DepthFrame out;
    out.t = gt.t;
    out.depth = Tensor::full({ch, cw}, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(ch * cw, 0);
    auto d = gt.depth.data();
    auto o = out.depth.mutable_data();
    for (std::size_t cy = 0; cy < ch; ++cy) {
        for (std::size_t cx = 0; cx < cw; ++cx) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t y = cy * factor; y < std::min(h, (cy + 1) * factor); ++y)
                for (std::size_t x = cx * factor; x < std::min(w, (cx + 1) * factor); ++x)
                    if (gt.valid[y * w + x]) sum += d[y * w + x], ++n;
            if (n) {
                o[cy * cw + cx] = sum / static_cast<double>(n);
                out.valid[cy * cw + cx] = 1;
            }
        }
    }
    return out;
}

Tensor window_loss(Tape& tape, const net::ForwardResult& fr, const events::DepthFrame& gt, const RunConfig& cfg) {
    const Tensor pred = fr.depth;
    Tensor loss = objective::total_loss(tape, std::span<const Tensor>(&pred, 1),
                                        std::span<const events::DepthFrame>(&gt, 1), cfg.loss);
    if (!cfg.multiscale_loss) return loss;
    const std::size_t finest = fr.membranes.back().dim(0);
    for (std::size_t i = 0; i + 1 < fr.membranes.size(); ++i) {
        const std::size_t factor = finest / fr.membranes[i].dim(0);
        const auto coarse = coarse_ground_truth(gt, factor);
        const Tensor p = crop2d(tape, fr.membranes[i], coarse.depth.dim(0), coarse.depth.dim(1));
        if (coarse.valid_count() == 0) continue;
        loss = add(tape, loss, objective::total_loss(tape, std::span<const Tensor>(&p, 1),
                                                     std::span<const events::DepthFrame>(&coarse, 1), cfg.loss));
    }
    return loss;
}

Metrics evaluate(net::MssNet& model, const Dataset& ds, const std::vector<std::size_t>& windows,
                 const StackSettings& stack, const objective::LossConfig& loss) {
    Metrics m;
    Tape tape(false);
    for (std::size_t w : windows) {
        auto fr = model.forward(tape, window_input(ds, w, stack));
        const auto& gt = ds.ground_truth[w];
        const double ssi = objective::ssi_loss(tape, fr.depth, gt, loss).item();
        const double reg = objective::reg_loss(tape, fr.depth, gt).item();
        m.mde_cm += objective::mde_cm(fr.depth, gt);
        m.loss_ssi += ssi;
        m.loss_reg += reg;
        m.loss_total += loss.lambda_reg != 0.0 ? ssi + loss.lambda_reg * reg : ssi;
        m.stats += fr.stats;
        ++m.windows;
    }
    if (m.windows) {
        const double n = static_cast<double>(m.windows);
        m.mde_cm /= n;
        m.loss_ssi /= n;
        m.loss_reg /= n;
        m.loss_total /= n;
    }
    return m;
}

std::string format_metrics(const Metrics& m) {
    std::ostringstream out;
    out << "windows=" << m.windows << '\n';
    out << "mde_cm=" << fmt(m.mde_cm) << '\n';
    out << "loss_ssi=" << fmt(m.loss_ssi) << '\n';
    out << "loss_reg=" << fmt(m.loss_reg) << '\n';
    out << "loss_total=" << fmt(m.loss_total) << '\n';
    out << "firing_rate_encoder=" << fmt(m.stats.encoder.rate()) << '\n';
    out << "firing_rate_residual=" << fmt(m.stats.residual.rate()) << '\n';
    out << "firing_rate_decoder=" << fmt(m.stats.decoder.rate()) << '\n';
    out << "firing_rate_total=" << fmt(m.stats.total().rate()) << '\n';
    return out.str();
}

void save_checkpoint(const std::string& path, const net::MssNet& model, const RunConfig& cfg, const TrainState& st) {
    NamedTensors entries;
    entries.emplace_back("run/config", text_tensor(dump_config(cfg)));
    for (auto& e : net::config_entries(model.config())) entries.push_back(std::move(e));
    entries.emplace_back("train/epoch", Tensor::scalar(static_cast<double>(st.epoch)));
    entries.emplace_back("train/step", Tensor::scalar(static_cast<double>(st.step)));
    entries.emplace_back("train/lr", Tensor::scalar(st.lr));
    entries.emplace_back("train/best_val_mde", Tensor::scalar(st.best_val_mde));
    entries.emplace_back("train/window_us", Tensor::scalar(static_cast<double>(st.window_us)));
    for (auto& e : model.export_tensors(true)) entries.push_back(std::move(e));
    mss::save_checkpoint(path, entries);
}

Checkpoint load_checkpoint(const std::string& path) {
    Checkpoint ck;
    ck.tensors = mss::load_checkpoint(path);
    try {
        std::istringstream text(tensor_text(entry(ck.tensors, "run/config", path)));
        ck.config = parse_config(text, path + " [run/config]");
        ck.config.model = net::config_from_entries(ck.tensors);
    } catch (const Error& e) {
        fail(e.kind(), std::string(path) + ": " + e.what());
    }
    ck.state.epoch = static_cast<std::size_t>(entry(ck.tensors, "train/epoch", path).item());
    ck.state.step = static_cast<std::uint64_t>(entry(ck.tensors, "train/step", path).item());
    ck.state.lr = entry(ck.tensors, "train/lr", path).item();
    ck.state.best_val_mde = entry(ck.tensors, "train/best_val_mde", path).item();
    ck.state.window_us = static_cast<std::uint64_t>(entry(ck.tensors, "train/window_us", path).item());
    return ck;
}

net::MssNet model_from_checkpoint(const Checkpoint& ck) {
    net::MssNet model(ck.config.model);
    model.import_tensors(ck.tensors);
    return model;
}

namespace {

net::MssNet load_model(const std::string& path, Checkpoint& ck) {
    ck = load_checkpoint(path);
    try {
        return model_from_checkpoint(ck);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

} // namespace

TrainSummary train(const RunConfig& cfg_in, const std::string& data, const std::string& out_dir, const LogFn& log,
                   bool resume) {
    cfg_in.validate();
    const Dataset ds = load_dataset(data);
    RunConfig cfg = cfg_in;
    cfg.model.geometry = ds.manifest.geometry;
    check_channels(cfg.model, ds.binocular(), "dataset " + data);
    const Split split = split_windows(ds.size(), cfg.val_fraction);
    if (split.train.empty()) fail(ErrorKind::validation, "no training windows left after the validation split");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + out_dir + ": " + ec.message());
    TrainSummary summary;
    summary.last_checkpoint = (fs::path(out_dir) / "last.spkc").string();
    summary.best_checkpoint = (fs::path(out_dir) / "best.spkc").string();
    std::ofstream log_file(fs::path(out_dir) / "train.log", std::ios::app);
    if (!log_file) fail(ErrorKind::io, "cannot open " + (fs::path(out_dir) / "train.log").string());
    auto emit = [&](const std::string& line) {
        log_file << line << '\n';
        log_file.flush();
        if (log) log(line);
    };

    TrainState state;
    state.window_us = ds.manifest.window_us;
    state.best_val_mde = std::numeric_limits<double>::infinity();
    std::optional<net::MssNet> model;
    if (resume) {
        Checkpoint ck;
        model.emplace(load_model(summary.last_checkpoint, ck));
        if (dump_config(ck.config) != dump_config(cfg)) {
            fail(ErrorKind::validation, summary.last_checkpoint + ": configuration differs from the resumed run");
        }
        state = ck.state;
    } else {
        model.emplace(cfg.model);
    }

    const StackSettings stack = stack_settings(cfg);
    std::vector<events::StackedTensor> inputs(ds.size());
    auto input = [&](std::size_t w) -> const events::StackedTensor& {
        if (!inputs[w].data.defined()) inputs[w] = window_input(ds, w, stack);
        return inputs[w];
    };

    emit("event=start windows=" + std::to_string(ds.size()) + " train_windows=" + std::to_string(split.train.size()) +
         " val_windows=" + std::to_string(split.val.size()) + " params=" + std::to_string(model->parameter_count()) +
         " epoch=" + std::to_string(state.epoch) + " step=" + std::to_string(state.step));

    AdamOptions adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    bool capped = cfg.max_steps && state.step >= cfg.max_steps;
    for (std::size_t epoch = state.epoch; epoch < cfg.epochs && !capped; ++epoch) {
        state.lr = lr_at_epoch(cfg, epoch);
        adam.lr = state.lr;
        std::vector<std::size_t> order = split.train;
        shuffle(order, cfg.model.seed, epoch);
        double epoch_mde = 0.0;
        std::size_t epoch_windows = 0;
        for (std::size_t i = 0; i < order.size() && !capped; i += cfg.windows_per_step) {
            const std::size_t n = std::min(cfg.windows_per_step, order.size() - i);
            model->params().zero_grad();
            Tape tape;
            Tensor loss;
            double mde = 0.0;
            net::SpikeStats stats;
            for (std::size_t j = i; j < i + n; ++j) {
                const std::size_t w = order[j];
                // every window starts from a zero membrane
                auto fr = model->forward(tape, input(w), true);
                const auto& gt = ds.ground_truth[w];
                Tensor l = window_loss(tape, fr, gt, cfg);
                loss = loss.defined() ? add(tape, loss, l) : l;
                mde += objective::mde_cm(fr.depth, gt);
                stats += fr.stats;
            }
            if (n > 1) loss = scale(tape, loss, 1.0 / static_cast<double>(n));
            if (!std::isfinite(loss.item())) {
                emit("event=diverged epoch=" + std::to_string(epoch) + " step=" + std::to_string(state.step + 1) +
                     " loss=" + fmt(loss.item()));
                fail(ErrorKind::numerical, "non-finite loss at step " + std::to_string(state.step + 1) +
                                               "; last good checkpoint kept at " + summary.last_checkpoint);
            }
            tape.backward(loss);
            adam_step(model->params(), adam);
            ++state.step;
            mde /= static_cast<double>(n);
            epoch_mde += mde * static_cast<double>(n);
            epoch_windows += n;
            emit("step=" + std::to_string(state.step) + " epoch=" + std::to_string(epoch) + " loss=" + fmt(loss.item()) +
                 " mde_cm=" + fmt(mde) + " lr=" + fmt(state.lr) + " " + rates(stats));
            if (cfg.max_steps && state.step >= cfg.max_steps) capped = true;
        }
        state.epoch = epoch + 1;
        std::string line = "epoch=" + std::to_string(epoch) + " step=" + std::to_string(state.step) + " lr=" +
                           fmt(state.lr) + " train_mde_cm=" + fmt(epoch_mde / static_cast<double>(epoch_windows));
        double score = epoch_mde / static_cast<double>(epoch_windows);
        if (!split.val.empty()) {
            const Metrics vm = evaluate(*model, ds, split.val, stack, cfg.loss);
            score = vm.mde_cm;
            line += " val_mde_cm=" + fmt(vm.mde_cm);
        }
        const bool best = score < state.best_val_mde;
        if (best) state.best_val_mde = score;
        save_checkpoint(summary.last_checkpoint, *model, cfg, state);
        if (best) save_checkpoint(summary.best_checkpoint, *model, cfg, state);
        emit(line + " best_mde_cm=" + fmt(state.best_val_mde) + (best ? " best=1" : " best=0"));
    }
    if (!fs::exists(summary.best_checkpoint)) save_checkpoint(summary.best_checkpoint, *model, cfg, state);

    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    summary.final_metrics = evaluate(*model, ds, all, stack, cfg.loss);
    const auto& fm = summary.final_metrics;
    emit("event=final epoch=" + std::to_string(state.epoch) + " step=" + std::to_string(state.step) +
         " all_mde_cm=" + fmt(fm.mde_cm) + " loss_total=" + fmt(fm.loss_total) + " " + rates(fm.stats));
    summary.state = state;
    return summary;
}

EvalSplit parse_split(const std::string& s) {
    if (s == "all") return EvalSplit::all;
    if (s == "train") return EvalSplit::train;
    if (s == "val") return EvalSplit::val;
    fail(ErrorKind::validation, "split must be all, train or val, got '" + s + "'");
}

Metrics eval_checkpoint(const std::string& ckpt, const std::string& data, EvalSplit which) {
    Checkpoint ck;
    net::MssNet model = load_model(ckpt, ck);
    const Dataset ds = load_dataset(data);
    check_channels(ck.config.model, ds.binocular(), "dataset " + data);
    const Split split = split_windows(ds.size(), ck.config.val_fraction);
    std::vector<std::size_t> windows;
    if (which == EvalSplit::train) windows = split.train;
    else if (which == EvalSplit::val) windows = split.val;
    else windows = split.train, windows.insert(windows.end(), split.val.begin(), split.val.end());
    if (windows.empty()) fail(ErrorKind::validation, "the requested split has no windows");
    return evaluate(model, ds, windows, stack_settings(ck.config), ck.config.loss);
}

events::StackedTensor stack_files(const StackRequest& req) {
    events::StackOptions opts;
    opts.window_start = req.window_start;
    opts.window_len = req.window_us;
    opts.steps = req.steps;
    opts.geometry = req.geometry;
    opts.binarize = req.binarize;
    const auto left = events::load_events(req.events_left);
    auto out = events::stack(left, opts, req.mode);
    if (!req.events_right.empty()) {
        const auto right = events::load_events(req.events_right);
        out = events::binocular_concat(out, events::stack(right, opts, req.mode));
    }
    return out;
}

void write_pgm(const std::string& path, const Tensor& depth, double max_depth) {
    if (depth.rank() != 2) fail(ErrorKind::dimension, "write_pgm: expected [H,W], got " + shape_str(depth.shape()));
    if (!(max_depth > 0.0)) fail(ErrorKind::argument, "max_depth must be > 0");
    const std::size_t h = depth.dim(0), w = depth.dim(1);
    std::ostringstream out;
    out << "P2\n" << w << ' ' << h << "\n255\n";
    auto d = depth.data();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double v = d[y * w + x];
            long level = std::isnan(v) ? 0 : std::lround(std::clamp(v / max_depth, 0.0, 1.0) * 255.0);
            out << (x ? " " : "") << level;
        }
        out << '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write " + path);
    f << out.str();
    if (!f) fail(ErrorKind::io, "write failed: " + path);
}

events::DepthFrame predict(const PredictRequest& req) {
    Checkpoint ck;
    net::MssNet model = load_model(req.model, ck);
    check_channels(ck.config.model, !req.events_right.empty(), "the event input");
    StackRequest sr;
    sr.events_left = req.events_left;
    sr.events_right = req.events_right;
    sr.steps = ck.config.model.steps;
    sr.window_us = req.window_us ? req.window_us : (ck.state.window_us ? ck.state.window_us : 50'000);
    sr.window_start = req.window_start;
    sr.mode = ck.config.stack_mode;
    sr.binarize = ck.config.binarize;
    sr.geometry = req.geometry.height ? req.geometry : ck.config.model.geometry;
    if (!sr.geometry.height || !sr.geometry.width) fail(ErrorKind::validation, "no sensor geometry: pass height and width");
    Tape tape(false);
    auto fr = model.forward(tape, stack_files(sr));

    events::DepthFrame frame;
    frame.depth = fr.depth;
    frame.valid.assign(fr.depth.numel(), 1);
    frame.t = req.window_start + sr.window_us;
    if (!req.out_prefix.empty()) {
        events::save_depth(req.out_prefix + ".txt", frame);
        write_pgm(req.out_prefix + ".pgm", frame.depth, req.max_depth);
    }
    return frame;
}

InspectReport inspect(const std::string& ckpt, const std::string& data) {
    Checkpoint ck;
    net::MssNet model = load_model(ckpt, ck);
    const Dataset ds = load_dataset(data);
    check_channels(ck.config.model, ds.binocular(), "dataset " + data);
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    InspectReport r;
    r.metrics = evaluate(model, ds, all, stack_settings(ck.config), ck.config.loss);
    r.dense_macs = model.dense_macs(ds.manifest.geometry) * ds.size();
    return r;
}

std::string format_inspect(const InspectReport& r) {
    const auto& s = r.metrics.stats;
    std::ostringstream out;
    out << "windows=" << r.metrics.windows << '\n';
    auto block = [&](const char* name, const net::BlockCount& c) {
        out << "spikes_" << name << '=' << c.spikes << '\n';
        out << "neuron_steps_" << name << '=' << c.neuron_steps << '\n';
        out << "firing_rate_" << name << '=' << fmt(c.rate()) << '\n';
    };
    block("encoder", s.encoder);
    block("residual", s.residual);
    block("decoder", s.decoder);
    block("total", s.total());
    out << "ac_ops=" << s.ac_ops << '\n';
    out << "dense_macs=" << r.dense_macs << '\n';
    out << "sparsity_ratio=" << fmt(r.dense_macs ? static_cast<double>(s.ac_ops) / static_cast<double>(r.dense_macs) : 0.0)
        << '\n';
    return out.str();
}

} // namespace mss::harness
