#pragma once

#include <cstddef>
#include <span>

#include "mssdepth/tensor.hpp"

namespace mss::neuron {

enum class Mode {
    spiking,    // Heaviside forward, triangular surrogate backward
    integrator, // no threshold: V accumulates every input
    smooth,     // forward uses the integral of the surrogate (gradient checks)
};

struct IFParams {
    double v_threshold = 1.0;
    double v_reset = 0.0;
    double surrogate_alpha = 1.0; // half-width of the triangular surrogate
    Mode mode = Mode::spiking;

    void validate() const;
};

// Triangular surrogate: max(0, 1 - |h - v_th| / alpha) / alpha.
double surrogate_derivative(double h, const IFParams& params);
// Forward spike value for a pre-spike membrane h in the current mode.
double spike_value(double h, const IFParams& params);

Tensor surrogate_grad(const Tensor& h, const IFParams& params);

struct IFState {
    Tensor v;              // membrane potential
    std::size_t step = 0;  // time steps integrated since the last reset

    // Zero membrane of the given shape, detached from any tape.
    void reset(const Shape& shape);
    void reset();
};

// One step of H = V + X, S = spike(H), V' = H (1 - S) + v_reset S. In
// integrator mode S is all zeros and V' = H. `state.v` is replaced by the
// new (tape-tracked) membrane.
Tensor if_step(Tape& tape, IFState& state, const Tensor& x, const IFParams& params);

struct MultiStepResult {
    Tensor spikes;   // [T, ...]
    Tensor membrane; // [T, ...] post-reset potential after each step
    Tensor v_final;  // [...] equal to membrane[T-1]
};

// Runs if_step over the leading axis of `x` starting from `v0` (zeros when
// undefined) and backpropagates through the membrane recurrence.
MultiStepResult if_multistep(Tape& tape, const Tensor& x, const IFParams& params, const Tensor& v0 = Tensor());

void reset_state(std::span<IFState> states);

} // namespace mss::neuron
