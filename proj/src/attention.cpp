#include "mssdepth/attention.hpp"

#include "mssdepth/error.hpp"
#include "mssdepth/ops.hpp"

namespace mss::attention {

unsigned parse_modules(const std::string& letters) {
    if (letters.empty() || letters == "none") return none;
    unsigned m = none;
    for (char c : letters) {
        unsigned bit = 0;
        switch (c) {
        case 'T': case 't': bit = temporal; break;
        case 'C': case 'c': bit = channel; break;
        case 'S': case 's': bit = spatial; break;
        default: fail(ErrorKind::validation, "unknown attention module '" + std::string(1, c) + "' (use T, C, S)");
        }
        if (m & bit) fail(ErrorKind::validation, "attention module '" + std::string(1, c) + "' listed twice");
        m |= bit;
    }
    return m;
}

std::string modules_str(unsigned modules) {
    std::string s;
    if (modules & temporal) s += 'T';
    if (modules & channel) s += 'C';
    if (modules & spatial) s += 'S';
    return s.empty() ? "none" : s;
}

namespace {

std::size_t reduced(std::size_t dim, std::size_t r, const char* what) {
    if (r == 0 || dim % r != 0) {
        fail(ErrorKind::validation, std::string(what) + " reduction " + std::to_string(r) + " does not divide " +
                                        std::to_string(dim));
    }
    return dim / r;
}

void check_input(const Tensor& x, const AttentionParams& p, const char* op) {
    if (x.rank() != 4) fail(ErrorKind::dimension, std::string(op) + ": expected [T,C,H,W], got " + shape_str(x.shape()));
    if (p.steps && x.dim(0) != p.steps) {
        fail(ErrorKind::dimension, std::string(op) + ": axis 0 (T) is " + std::to_string(x.dim(0)) + ", expected " +
                                       std::to_string(p.steps));
    }
    if (p.channels && x.dim(1) != p.channels) {
        fail(ErrorKind::dimension, std::string(op) + ": axis 1 (C) is " + std::to_string(x.dim(1)) + ", expected " +
                                       std::to_string(p.channels));
    }
}

// sigmoid(mlp(avg) + mlp(max)) with one MLP shared by both branches.
Tensor shared_mlp_gate(Tape& tape, const Tensor& avg, const Tensor& max, const Tensor& fc1, const Tensor& fc2) {
    auto branch = [&](const Tensor& v) { return linear(tape, relu(tape, linear(tape, v, fc1)), fc2); };
    return sigmoid(tape, add(tape, branch(avg), branch(max)));
}

} // namespace

void AttentionParams::validate() const {
    if (enabled & temporal) {
        if (!temporal_fc1.defined() || !temporal_fc2.defined()) fail(ErrorKind::state, "temporal attention weights missing");
        reduced(steps, temporal_reduction, "temporal");
    }
    if (enabled & channel) {
        if (!channel_fc1.defined() || !channel_fc2.defined()) fail(ErrorKind::state, "channel attention weights missing");
        reduced(channels, reduction, "channel");
    }
    if (enabled & spatial) {
        if (!spatial_conv.defined()) fail(ErrorKind::state, "spatial attention kernel missing");
        if (spatial_conv.shape() != Shape{1, 2, 3, 3}) {
            fail(ErrorKind::validation, "spatial attention kernel must be [1,2,3,3], got " +
                                            shape_str(spatial_conv.shape()));
        }
    }
}

AttentionParams make_params(ParamStore& store, const std::string& prefix, unsigned enabled, std::size_t steps,
                            std::size_t channels, std::size_t reduction, std::size_t temporal_reduction) {
    AttentionParams p;
    p.enabled = enabled;
    p.steps = steps;
    p.channels = channels;
    p.reduction = reduction;
    p.temporal_reduction = temporal_reduction;
    if (enabled & temporal) {
        const std::size_t hidden = reduced(steps, temporal_reduction, "temporal");
        p.temporal_fc1 = store.add(prefix + ".t.fc1", Tensor::zeros({hidden, steps}));
        p.temporal_fc2 = store.add(prefix + ".t.fc2", Tensor::zeros({steps, hidden}));
    }
    if (enabled & channel) {
        const std::size_t hidden = reduced(channels, reduction, "channel");
        p.channel_fc1 = store.add(prefix + ".c.fc1", Tensor::zeros({hidden, channels}));
        p.channel_fc2 = store.add(prefix + ".c.fc2", Tensor::zeros({channels, hidden}));
    }
    if (enabled & spatial) p.spatial_conv = store.add(prefix + ".s.conv", Tensor::zeros({1, 2, 3, 3}));
    return p;
}

Gated temporal_attention(Tape& tape, const Tensor& x, const AttentionParams& p) {
    check_input(x, p, "temporal_attention");
    if (!p.temporal_fc1.defined()) fail(ErrorKind::state, "temporal attention weights missing");
    if (p.temporal_fc1.dim(1) != x.dim(0)) {
        fail(ErrorKind::dimension, "temporal_attention: MLP expects T=" + std::to_string(p.temporal_fc1.dim(1)) +
                                       ", input has T=" + std::to_string(x.dim(0)));
    }
    auto avg = pool(tape, x, {1, 2, 3}, PoolMode::avg);
    auto max = pool(tape, x, {1, 2, 3}, PoolMode::max);
    auto gate = shared_mlp_gate(tape, avg, max, p.temporal_fc1, p.temporal_fc2);
    return {mul(tape, x, gate), gate};
}

Gated channel_attention(Tape& tape, const Tensor& x, const AttentionParams& p) {
    check_input(x, p, "channel_attention");
    if (!p.channel_fc1.defined()) fail(ErrorKind::state, "channel attention weights missing");
    if (p.channel_fc1.dim(1) != x.dim(1)) {
        fail(ErrorKind::dimension, "channel_attention: MLP expects C=" + std::to_string(p.channel_fc1.dim(1)) +
                                       ", input has C=" + std::to_string(x.dim(1)));
    }
    // Pooling over (H, W) keeps one row per time step, so the MLP acts on
    // each step independently.
    auto avg = pool(tape, x, {2, 3}, PoolMode::avg);
    auto max = pool(tape, x, {2, 3}, PoolMode::max);
    auto gate = shared_mlp_gate(tape, avg, max, p.channel_fc1, p.channel_fc2);
    return {mul(tape, x, gate), gate};
}

Gated spatial_attention(Tape& tape, const Tensor& x, const AttentionParams& p) {
    check_input(x, p, "spatial_attention");
    if (!p.spatial_conv.defined()) fail(ErrorKind::state, "spatial attention kernel missing");
    const std::size_t t = x.dim(0), h = x.dim(2), w = x.dim(3);
    auto avg = reshape(tape, pool(tape, x, {1}, PoolMode::avg), {t, 1, h, w});
    auto max = reshape(tape, pool(tape, x, {1}, PoolMode::max), {t, 1, h, w});
    auto both = concat(tape, avg, max, 1);
    auto gate = sigmoid(tape, conv2d(tape, both, p.spatial_conv, {.stride = 1, .padding = 1}));
    return {mul(tape, x, gate), gate};
}

Tensor tcsa(Tape& tape, const Tensor& x, const AttentionParams& p) {
    Tensor y = x;
    if (p.enabled & temporal) y = temporal_attention(tape, y, p).out;
    if (p.enabled & channel) y = channel_attention(tape, y, p).out;
    if (p.enabled & spatial) y = spatial_attention(tape, y, p).out;
    return y;
}

} // namespace mss::attention
