#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mssdepth/attention.hpp"
#include "mssdepth/events.hpp"
#include "mssdepth/neuron.hpp"
#include "mssdepth/optim.hpp"
#include "mssdepth/serialize.hpp"
#include "mssdepth/tensor.hpp"

namespace mss::net {

// Encoder block family: continuous (CE) encoders pass the conv output to the
// next layer, discrete (DE) encoders pass spikes.
enum class EncoderVariant { ce, de, ce_att, de_att1, de_att2 };

EncoderVariant parse_variant(const std::string& s);
const char* to_string(EncoderVariant v);
bool is_continuous(EncoderVariant v);

struct ModelConfig {
    std::size_t steps = 5;
    std::size_t in_channels = 4;
    std::size_t base_channels = 8;
    std::size_t layers = 4;
    EncoderVariant encoder_variant = EncoderVariant::ce_att;
    unsigned attention = attention::channel | attention::spatial;
    std::size_t reduction = 2;
    std::size_t temporal_reduction = 1;
    double v_threshold = 1.0;
    double v_reset = 0.0;
    double surrogate_alpha = 1.0;
    neuron::Mode neuron_mode = neuron::Mode::spiking;
    bool conv_bias = false;
    std::uint64_t seed = 0;
    events::Geometry geometry; // nominal sensor size; forward accepts any

    void validate() const;
    neuron::IFParams if_params() const;
    // Channel width of encoder layer `level` (base * 2^level).
    std::size_t channels_at(std::size_t level) const { return base_channels << level; }
    // Smallest multiple of 2^layers not below `extent`.
    std::size_t padded(std::size_t extent) const;
};

struct EncoderParams {
    Tensor conv; // [C_out, C_in, 3, 3], stride 2
    Tensor bias;
    attention::AttentionParams att;
};

struct ResidualParams {
    Tensor conv1, conv2; // [C, C, 3, 3]
    Tensor bias1, bias2;
    attention::AttentionParams att;
};

struct DecoderParams {
    Tensor conv; // [C_out, C_in, 3, 3]
    Tensor bias;
    Tensor head; // [1, C_out, 1, 1]
    Tensor head_bias;
    attention::AttentionParams att;
};

struct EncoderOutput {
    Tensor next;   // propagated to the next encoder layer and used as skip
    Tensor spikes; // IF output of the block
};

struct ResidualOutput {
    Tensor out;
    Tensor spikes1, spikes2;
};

struct DecoderOutput {
    Tensor next;     // spikes + skip
    Tensor spikes;
    Tensor membrane; // [H, W] final integrator membrane of the prediction head
};

// `state` carries the membrane between calls; an undefined or reset state
// starts from zero.
EncoderOutput encoder_block(Tape& tape, const Tensor& x, EncoderVariant variant, const EncoderParams& p,
                            const neuron::IFParams& ifp, neuron::IFState& state);

ResidualOutput residual_block(Tape& tape, const Tensor& x, const ResidualParams& p, const neuron::IFParams& ifp,
                              neuron::IFState& state1, neuron::IFState& state2);

// `skip` may be undefined (outermost decoder layer).
DecoderOutput decoder_block(Tape& tape, const Tensor& x, const Tensor& skip, const DecoderParams& p,
                            const neuron::IFParams& ifp, neuron::IFState& state, neuron::IFState& head_state);

enum class Block { encoder, residual, decoder };
const char* to_string(Block b);

struct SpikeLayer {
    std::string name;
    Block block;
    Tensor spikes;           // [T, C, H, W]
    double fan_out; // nominal accumulates triggered downstream per spike
};

struct LayerActivations {
    std::vector<Tensor> encoder;   // continuous/propagated outputs per layer
    std::vector<Tensor> residual;
    std::vector<Tensor> decoder;   // `next` tensors per layer
    std::vector<Tensor> membranes; // prediction membranes, coarse to fine
    std::vector<SpikeLayer> spike_layers;
};

struct BlockCount {
    std::uint64_t spikes = 0;
    std::uint64_t neuron_steps = 0;

    double rate() const { return neuron_steps ? static_cast<double>(spikes) / static_cast<double>(neuron_steps) : 0.0; }
    BlockCount& operator+=(const BlockCount& o) {
        spikes += o.spikes;
        neuron_steps += o.neuron_steps;
        return *this;
    }
};

struct SpikeStats {
    BlockCount encoder, residual, decoder;
    std::uint64_t ac_ops = 0;

    BlockCount total() const {
        BlockCount t = encoder;
        t += residual;
        t += decoder;
        return t;
    }
    SpikeStats& operator+=(const SpikeStats& o);
};

SpikeStats count_spikes(const LayerActivations& acts);

struct ForwardResult {
    Tensor depth;                  // [H, W] cropped to the input geometry
    std::vector<Tensor> membranes; // per decoder layer, padded resolution
    LayerActivations acts;
    SpikeStats stats;
};

class MssNet {
public:
    explicit MssNet(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }

    // input [T, C, H, W]. With `reset` (the default) every membrane starts
    // from zero; otherwise the states left by the previous call carry over.
    ForwardResult forward(Tape& tape, const Tensor& input, bool reset = true);
    ForwardResult forward(Tape& tape, const events::StackedTensor& input, bool reset = true) {
        return forward(tape, input.data, reset);
    }

    std::vector<neuron::IFState>& states() { return states_; }
    void reset_state();

    // Multiply-accumulates a dense network of the same shape performs on a
    // [T, C, H, W] input; independent of the input values.
    std::uint64_t dense_macs(const events::Geometry& g) const;

    // Parameters (and Adam moments) in checkpoint entry form.
    NamedTensors export_tensors(bool with_optimizer = true) const;
    // Loads parameter (and, when present, optimiser) entries; shapes must
    // match exactly.
    void import_tensors(const NamedTensors& entries);

private:
    ModelConfig cfg_;
    ParamStore params_;
    std::vector<EncoderParams> enc_;
    std::vector<ResidualParams> res_;
    std::vector<DecoderParams> dec_;
    std::vector<neuron::IFState> states_;

    void build();
    void initialise();
};

// Model configuration stored alongside the weights in checkpoints.
NamedTensors config_entries(const ModelConfig& cfg);
ModelConfig config_from_entries(const NamedTensors& entries);

} // namespace mss::net
