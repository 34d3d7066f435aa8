#include "mssdepth/model.hpp"

#include <cmath>
#include <random>

#include "mssdepth/error.hpp"
#include "mssdepth/ops.hpp"

namespace mss::net {

EncoderVariant parse_variant(const std::string& s) {
    if (s == "CE") return EncoderVariant::ce;
    if (s == "DE") return EncoderVariant::de;
    if (s == "CE-Att") return EncoderVariant::ce_att;
    if (s == "DE-Att1") return EncoderVariant::de_att1;
    if (s == "DE-Att2") return EncoderVariant::de_att2;
    fail(ErrorKind::validation, "unknown encoder variant '" + s + "' (CE, DE, CE-Att, DE-Att1, DE-Att2)");
}

const char* to_string(EncoderVariant v) {
    switch (v) {
    case EncoderVariant::ce: return "CE";
    case EncoderVariant::de: return "DE";
    case EncoderVariant::ce_att: return "CE-Att";
    case EncoderVariant::de_att1: return "DE-Att1";
    case EncoderVariant::de_att2: return "DE-Att2";
    }
    return "?";
}

bool is_continuous(EncoderVariant v) { return v == EncoderVariant::ce || v == EncoderVariant::ce_att; }

const char* to_string(Block b) {
    switch (b) {
    case Block::encoder: return "encoder";
    case Block::residual: return "residual";
    case Block::decoder: return "decoder";
    }
    return "?";
}

namespace {

bool has_encoder_attention(EncoderVariant v) {
    return v == EncoderVariant::ce_att || v == EncoderVariant::de_att1 || v == EncoderVariant::de_att2;
}

Tensor initial_membrane(const neuron::IFState& state, const Shape& frame) {
    return state.v.defined() && state.v.shape() == frame ? state.v : Tensor();
}

Shape frame_shape(const Tensor& x) { return Shape(x.shape().begin() + 1, x.shape().end()); }

neuron::MultiStepResult run_if(Tape& tape, const Tensor& x, const neuron::IFParams& ifp, neuron::IFState& state) {
    auto r = neuron::if_multistep(tape, x, ifp, initial_membrane(state, frame_shape(x)));
    state.v = r.v_final.detach();
    state.step += x.dim(0);
    return r;
}

Tensor attend(Tape& tape, const Tensor& x, const attention::AttentionParams& att) {
    return att.enabled ? attention::tcsa(tape, x, att) : x;
}

} // namespace

void ModelConfig::validate() const {
    if (steps < 1) fail(ErrorKind::validation, "T must be >= 1");
    if (in_channels != 2 && in_channels != 4) {
        fail(ErrorKind::validation, "in_channels must be 2 (monocular) or 4 (binocular), got " +
                                        std::to_string(in_channels));
    }
    if (base_channels < 1) fail(ErrorKind::validation, "base_channels must be >= 1");
    if (layers < 1 || layers > 8) fail(ErrorKind::validation, "layers must be in [1, 8]");
    if (attention & attention::channel) {
        // every attended width must be divisible by the channel reduction
        auto check = [&](std::size_t c) {
            if (reduction == 0 || c % reduction != 0) {
                fail(ErrorKind::validation, "reduction " + std::to_string(reduction) + " does not divide channel width " +
                                                std::to_string(c));
            }
        };
        check(in_channels);
        for (std::size_t l = 0; l < layers; ++l) check(channels_at(l));
    }
    if ((attention & attention::temporal) && (temporal_reduction == 0 || steps % temporal_reduction != 0)) {
        fail(ErrorKind::validation, "temporal_reduction " + std::to_string(temporal_reduction) + " does not divide T=" +
                                        std::to_string(steps));
    }
    if (seed > (std::uint64_t{1} << 53)) fail(ErrorKind::validation, "seed must be <= 2^53");
    if_params().validate();
}

neuron::IFParams ModelConfig::if_params() const {
    return {v_threshold, v_reset, surrogate_alpha, neuron_mode};
}

std::size_t ModelConfig::padded(std::size_t extent) const {
    const std::size_t m = std::size_t{1} << layers;
    return (extent + m - 1) / m * m;
}

EncoderOutput encoder_block(Tape& tape, const Tensor& x, EncoderVariant variant, const EncoderParams& p,
                            const neuron::IFParams& ifp, neuron::IFState& state) {
    if (x.rank() != 4) fail(ErrorKind::dimension, "encoder_block: expected [T,C,H,W], got " + shape_str(x.shape()));
    if (x.dim(2) % 2 || x.dim(3) % 2) {
        fail(ErrorKind::state, "encoder_block: odd spatial size " + shape_str(x.shape()) + " (padding contract broken)");
    }
    Tensor h = x;
    if (variant == EncoderVariant::ce_att || variant == EncoderVariant::de_att1) h = attend(tape, h, p.att);
    Tensor c = conv2d(tape, h, p.conv, {.stride = 2, .padding = 1}, p.bias);
    if (variant == EncoderVariant::de_att2) c = attend(tape, c, p.att);
    auto r = run_if(tape, c, ifp, state);
    return {is_continuous(variant) ? c : r.spikes, r.spikes};
}

ResidualOutput residual_block(Tape& tape, const Tensor& x, const ResidualParams& p, const neuron::IFParams& ifp,
                              neuron::IFState& state1, neuron::IFState& state2) {
    auto r1 = run_if(tape, x, ifp, state1);
    auto c1 = conv2d(tape, r1.spikes, p.conv1, {.stride = 1, .padding = 1}, p.bias1);
    auto r2 = run_if(tape, c1, ifp, state2);
    auto c2 = conv2d(tape, r2.spikes, p.conv2, {.stride = 1, .padding = 1}, p.bias2);
    return {add(tape, x, attend(tape, c2, p.att)), r1.spikes, r2.spikes};
}

DecoderOutput decoder_block(Tape& tape, const Tensor& x, const Tensor& skip, const DecoderParams& p,
                            const neuron::IFParams& ifp, neuron::IFState& state, neuron::IFState& head_state) {
    auto up = nearest_upsample(tape, x, 2);
    auto c = conv2d(tape, attend(tape, up, p.att), p.conv, {.stride = 1, .padding = 1}, p.bias);
    auto r = run_if(tape, c, ifp, state);
    Tensor next = r.spikes;
    if (skip.defined()) {
        if (skip.shape() != r.spikes.shape()) {
            fail(ErrorKind::dimension, "decoder_block: skip " + shape_str(skip.shape()) + " does not match decoder output " +
                                           shape_str(r.spikes.shape()));
        }
        next = add(tape, r.spikes, skip);
    }
    // The prediction head reads the conv output (the IF node's input current)
    // and integrates it without a threshold over all time steps.
    auto head_in = conv2d(tape, c, p.head, {.stride = 1, .padding = 0}, p.head_bias);
    neuron::IFParams integ = ifp;
    integ.mode = neuron::Mode::integrator;
    auto hr = run_if(tape, head_in, integ, head_state);
    auto membrane = reshape(tape, hr.v_final, {c.dim(2), c.dim(3)});
    return {next, r.spikes, membrane};
}

SpikeStats& SpikeStats::operator+=(const SpikeStats& o) {
    encoder += o.encoder;
    residual += o.residual;
    decoder += o.decoder;
    ac_ops += o.ac_ops;
    return *this;
}

SpikeStats count_spikes(const LayerActivations& acts) {
    SpikeStats stats;
    double ac = 0.0;
    for (const auto& layer : acts.spike_layers) {
        double total = 0.0;
        for (double v : layer.spikes.data()) total += v;
        BlockCount c{static_cast<std::uint64_t>(std::llround(total)), layer.spikes.numel()};
        switch (layer.block) {
        case Block::encoder: stats.encoder += c; break;
        case Block::residual: stats.residual += c; break;
        case Block::decoder: stats.decoder += c; break;
        }
        ac += static_cast<double>(c.spikes) * static_cast<double>(layer.fan_out);
    }
    stats.ac_ops = static_cast<std::uint64_t>(std::llround(ac));
    return stats;
}

MssNet::MssNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
    initialise();
}

void MssNet::build() {
    const auto L = cfg_.layers;
    const auto T = cfg_.steps;
    auto att = [&](const std::string& prefix, std::size_t channels, bool wanted) {
        const unsigned enabled = wanted ? cfg_.attention : attention::none;
        return attention::make_params(params_, prefix + ".att", enabled, T, channels, cfg_.reduction,
                                      cfg_.temporal_reduction);
    };
    auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
        return params_.add(name, Tensor::zeros({cout, cin, k, k}));
    };
    auto bias = [&](const std::string& name, std::size_t c) {
        return cfg_.conv_bias ? params_.add(name, Tensor::zeros({c})) : Tensor();
    };

    const bool enc_att = has_encoder_attention(cfg_.encoder_variant);
    for (std::size_t l = 0; l < L; ++l) {
        const std::string pre = "enc" + std::to_string(l);
        const std::size_t cin = l == 0 ? cfg_.in_channels : cfg_.channels_at(l - 1);
        const std::size_t cout = cfg_.channels_at(l);
        EncoderParams p;
        const std::size_t att_c = cfg_.encoder_variant == EncoderVariant::de_att2 ? cout : cin;
        p.att = att(pre, att_c, enc_att);
        p.conv = conv(pre + ".conv", cout, cin, 3);
        p.bias = bias(pre + ".bias", cout);
        enc_.push_back(std::move(p));
    }
    const std::size_t deep = cfg_.channels_at(L - 1);
    for (std::size_t b = 0; b < 2; ++b) {
        const std::string pre = "res" + std::to_string(b);
        ResidualParams p;
        p.conv1 = conv(pre + ".conv1", deep, deep, 3);
        p.bias1 = bias(pre + ".bias1", deep);
        p.conv2 = conv(pre + ".conv2", deep, deep, 3);
        p.bias2 = bias(pre + ".bias2", deep);
        p.att = att(pre, deep, true);
        res_.push_back(std::move(p));
    }
    std::size_t cin = deep;
    for (std::size_t j = 0; j < L; ++j) {
        const std::string pre = "dec" + std::to_string(j);
        // Decoder j lands on the resolution of encoder layer L-2-j and must
        // match its width for the skip sum; the outermost layer has no skip.
        const std::size_t cout = j + 1 < L ? cfg_.channels_at(L - 2 - j) : cfg_.base_channels;
        DecoderParams p;
        p.att = att(pre, cin, true);
        p.conv = conv(pre + ".conv", cout, cin, 3);
        p.bias = bias(pre + ".bias", cout);
        p.head = conv(pre + ".head", 1, cout, 1);
        p.head_bias = bias(pre + ".head_bias", 1);
        dec_.push_back(std::move(p));
        cin = cout;
    }
    states_.assign(L + 4 + 2 * L, neuron::IFState{});
}

void MssNet::initialise() {
    std::mt19937_64 rng(cfg_.seed);
    for (auto& e : params_.entries()) {
        if (e.value.rank() == 1) continue; // biases start at zero
        const double fan_in = static_cast<double>(e.value.numel() / e.value.dim(0));
        const double bound = std::sqrt(1.0 / fan_in);
        for (double& w : e.value.mutable_data()) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            w = (2.0 * u - 1.0) * bound;
        }
    }
}

void MssNet::reset_state() { neuron::reset_state(states_); }

ForwardResult MssNet::forward(Tape& tape, const Tensor& input, bool reset) {
    if (input.rank() != 4) fail(ErrorKind::dimension, "forward: expected [T,C,H,W], got " + shape_str(input.shape()));
    if (input.dim(1) != cfg_.in_channels) {
        fail(ErrorKind::dimension, "forward: input has " + std::to_string(input.dim(1)) + " channels (axis 1), model expects " +
                                       std::to_string(cfg_.in_channels));
    }
    if (input.dim(0) != cfg_.steps) {
        fail(ErrorKind::dimension, "forward: input has T=" + std::to_string(input.dim(0)) + " (axis 0), model expects " +
                                       std::to_string(cfg_.steps));
    }
    if (reset) reset_state();

    const std::size_t L = cfg_.layers;
    const std::size_t T = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t Hp = cfg_.padded(H), Wp = cfg_.padded(W);
    Tensor x = input;
    if (Hp != H || Wp != W) {
        x = Tensor({T, C, Hp, Wp});
        auto src = input.data();
        auto dst = x.mutable_data();
        for (std::size_t p = 0; p < T * C; ++p)
            for (std::size_t i = 0; i < H; ++i)
                std::copy_n(src.begin() + (p * H + i) * W, W, dst.begin() + (p * Hp + i) * Wp);
    }

    const auto ifp = cfg_.if_params();
    const bool continuous = is_continuous(cfg_.encoder_variant);
    ForwardResult out;
    auto& acts = out.acts;

    Tensor h = x;
    for (std::size_t l = 0; l < L; ++l) {
        auto e = encoder_block(tape, h, cfg_.encoder_variant, enc_[l], ifp, states_[l]);
        double fan = 0.0;
        if (!continuous && l + 1 < L) fan = static_cast<double>(cfg_.channels_at(l + 1)) * 9.0 / 4.0;
        acts.spike_layers.push_back({"enc" + std::to_string(l), Block::encoder, e.spikes, fan});
        acts.encoder.push_back(e.next);
        h = e.next;
    }
    const double deep_fan = static_cast<double>(cfg_.channels_at(L - 1)) * 9.0;
    for (std::size_t b = 0; b < 2; ++b) {
        auto r = residual_block(tape, h, res_[b], ifp, states_[L + 2 * b], states_[L + 2 * b + 1]);
        acts.spike_layers.push_back({"res" + std::to_string(b) + ".if1", Block::residual, r.spikes1, deep_fan});
        acts.spike_layers.push_back({"res" + std::to_string(b) + ".if2", Block::residual, r.spikes2, deep_fan});
        acts.residual.push_back(r.out);
        h = r.out;
    }
    for (std::size_t j = 0; j < L; ++j) {
        const Tensor skip = j + 1 < L ? acts.encoder[L - 2 - j] : Tensor();
        auto d = decoder_block(tape, h, skip, dec_[j], ifp, states_[L + 4 + 2 * j],
                               states_[L + 4 + 2 * j + 1]);
        // Each spike is upsampled to 4 pixels, each feeding a 3x3 kernel of
        // the next decoder conv.
        double fan = 0.0;
        if (j + 1 < L) fan = static_cast<double>(dec_[j + 1].conv.dim(0)) * 9.0 * 4.0;
        acts.spike_layers.push_back({"dec" + std::to_string(j), Block::decoder, d.spikes, fan});
        acts.decoder.push_back(d.next);
        acts.membranes.push_back(d.membrane);
        h = d.next;
    }
    out.membranes = acts.membranes;
    out.depth = crop2d(tape, acts.membranes.back(), H, W);
    out.stats = count_spikes(acts);
    return out;
}

std::uint64_t MssNet::dense_macs(const events::Geometry& g) const {
    const std::uint64_t T = cfg_.steps;
    const std::size_t L = cfg_.layers;
    std::uint64_t h = cfg_.padded(g.height), w = cfg_.padded(g.width);
    std::uint64_t macs = 0;
    for (std::size_t l = 0; l < L; ++l) {
        h /= 2;
        w /= 2;
        macs += T * enc_[l].conv.dim(0) * enc_[l].conv.dim(1) * 9 * h * w;
    }
    for (const auto& r : res_) macs += 2 * T * r.conv1.dim(0) * r.conv1.dim(1) * 9 * h * w;
    for (const auto& d : dec_) {
        h *= 2;
        w *= 2;
        macs += T * d.conv.dim(0) * d.conv.dim(1) * 9 * h * w;
        macs += T * d.head.dim(1) * h * w;
    }
    return macs;
}

NamedTensors MssNet::export_tensors(bool with_optimizer) const {
    NamedTensors out;
    for (const auto& e : params_.entries()) out.emplace_back("param/" + e.name, e.value.detach());
    if (with_optimizer) {
        for (const auto& e : params_.entries()) {
            out.emplace_back("adam_m/" + e.name, e.first_moment.detach());
            out.emplace_back("adam_v/" + e.name, e.second_moment.detach());
        }
        out.emplace_back("adam/steps", Tensor::scalar(static_cast<double>(params_.adam_steps())));
    }
    return out;
}

void MssNet::import_tensors(const NamedTensors& entries) {
    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : entries)
            if (n == name) return &t;
        return nullptr;
    };
    auto copy_into = [](Tensor& dst, const Tensor& src, const std::string& name) {
        if (dst.shape() != src.shape()) {
            fail(ErrorKind::dimension, "checkpoint entry '" + name + "' has shape " + shape_str(src.shape()) +
                                           ", model expects " + shape_str(dst.shape()));
        }
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    };
    for (auto& e : params_.entries()) {
        const Tensor* t = find("param/" + e.name);
        if (!t) fail(ErrorKind::validation, "checkpoint lacks parameter '" + e.name + "'");
        copy_into(e.value, *t, e.name);
        if (const Tensor* m = find("adam_m/" + e.name)) copy_into(e.first_moment, *m, "adam_m/" + e.name);
        if (const Tensor* v = find("adam_v/" + e.name)) copy_into(e.second_moment, *v, "adam_v/" + e.name);
    }
    for (const auto& [n, t] : entries) {
        if (n.rfind("param/", 0) == 0 && !params_.contains(n.substr(6))) {
            fail(ErrorKind::validation, "checkpoint has unexpected parameter '" + n.substr(6) + "'");
        }
    }
    if (const Tensor* s = find("adam/steps")) params_.set_adam_steps(static_cast<std::uint64_t>(s->item()));
}

NamedTensors config_entries(const ModelConfig& c) {
    auto num = [](double v) { return Tensor::scalar(v); };
    return {
        {"config/steps", num(static_cast<double>(c.steps))},
        {"config/in_channels", num(static_cast<double>(c.in_channels))},
        {"config/base_channels", num(static_cast<double>(c.base_channels))},
        {"config/layers", num(static_cast<double>(c.layers))},
        {"config/encoder_variant", num(static_cast<double>(static_cast<int>(c.encoder_variant)))},
        {"config/attention", num(static_cast<double>(c.attention))},
        {"config/reduction", num(static_cast<double>(c.reduction))},
        {"config/temporal_reduction", num(static_cast<double>(c.temporal_reduction))},
        {"config/v_threshold", num(c.v_threshold)},
        {"config/v_reset", num(c.v_reset)},
        {"config/surrogate_alpha", num(c.surrogate_alpha)},
        {"config/neuron_mode", num(static_cast<double>(static_cast<int>(c.neuron_mode)))},
        {"config/conv_bias", num(c.conv_bias ? 1.0 : 0.0)},
        {"config/seed", num(static_cast<double>(c.seed))},
        {"config/height", num(static_cast<double>(c.geometry.height))},
        {"config/width", num(static_cast<double>(c.geometry.width))},
    };
}

ModelConfig config_from_entries(const NamedTensors& entries) {
    auto get = [&](const std::string& key) {
        for (const auto& [n, t] : entries)
            if (n == "config/" + key) return t.item();
        fail(ErrorKind::validation, "checkpoint lacks model configuration entry '" + key + "'");
    };
    auto size = [&](const std::string& key) { return static_cast<std::size_t>(get(key)); };
    ModelConfig c;
    c.steps = size("steps");
    c.in_channels = size("in_channels");
    c.base_channels = size("base_channels");
    c.layers = size("layers");
    const int variant = static_cast<int>(get("encoder_variant"));
    if (variant < 0 || variant > 4) fail(ErrorKind::validation, "checkpoint has an unknown encoder variant");
    c.encoder_variant = static_cast<EncoderVariant>(variant);
    c.attention = static_cast<unsigned>(get("attention"));
    c.reduction = size("reduction");
    c.temporal_reduction = size("temporal_reduction");
    c.v_threshold = get("v_threshold");
    c.v_reset = get("v_reset");
    c.surrogate_alpha = get("surrogate_alpha");
    const int mode = static_cast<int>(get("neuron_mode"));
    if (mode < 0 || mode > 2) fail(ErrorKind::validation, "checkpoint has an unknown neuron mode");
    c.neuron_mode = static_cast<neuron::Mode>(mode);
    c.conv_bias = get("conv_bias") != 0.0;
    c.seed = static_cast<std::uint64_t>(get("seed"));
    c.geometry = {size("height"), size("width")};
    c.validate();
    return c;
}

} // namespace mss::net
