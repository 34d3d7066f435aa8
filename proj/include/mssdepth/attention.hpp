#pragma once

#include <cstdint>
#include <string>

#include "mssdepth/optim.hpp"
#include "mssdepth/tensor.hpp"

namespace mss::attention {

// Bitmask of enabled attention modules.
enum Module : unsigned {
    none = 0,
    temporal = 1u << 0,
    channel = 1u << 1,
    spatial = 1u << 2,
};

// "TCS"-style letter set; "none" or "" means no modules.
unsigned parse_modules(const std::string& letters);
std::string modules_str(unsigned modules);

// Parameters of one attention block. Tensors are registered in a ParamStore
// under `prefix` so the optimiser and checkpoints see them.
struct AttentionParams {
    unsigned enabled = channel | spatial;
    std::size_t steps = 0;    // T
    std::size_t channels = 0; // C
    std::size_t reduction = 1;          // channel MLP: C -> C/r -> C
    std::size_t temporal_reduction = 1; // temporal MLP: T -> T/r -> T
    Tensor temporal_fc1, temporal_fc2;  // [T/r, T], [T, T/r]
    Tensor channel_fc1, channel_fc2;    // [C/r, C], [C, C/r]
    Tensor spatial_conv;                // [1, 2, 3, 3]

    void validate() const;
};

// Allocates zero-valued parameters of the right shapes and registers them.
AttentionParams make_params(ParamStore& store, const std::string& prefix, unsigned enabled, std::size_t steps,
                            std::size_t channels, std::size_t reduction, std::size_t temporal_reduction);

struct Gated {
    Tensor out;
    Tensor gate; // [T], [T,C] or [T,1,H,W]
};

// All operate on continuous [T,C,H,W] tensors.
Gated temporal_attention(Tape& tape, const Tensor& x, const AttentionParams& p);
Gated channel_attention(Tape& tape, const Tensor& x, const AttentionParams& p);
Gated spatial_attention(Tape& tape, const Tensor& x, const AttentionParams& p);

// Enabled modules in the fixed order temporal -> channel -> spatial.
Tensor tcsa(Tape& tape, const Tensor& x, const AttentionParams& p);

} // namespace mss::attention
