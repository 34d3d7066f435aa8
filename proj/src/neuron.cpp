#include "mssdepth/neuron.hpp"

#include <cmath>
#include <string>

#include "mssdepth/error.hpp"

namespace mss::neuron {

void IFParams::validate() const {
    if (!std::isfinite(v_threshold) || !std::isfinite(v_reset)) {
        fail(ErrorKind::validation, "IF threshold and reset must be finite");
    }
    if (!(v_threshold > v_reset)) {
        fail(ErrorKind::validation, "IF threshold (" + std::to_string(v_threshold) + ") must exceed reset (" +
                                        std::to_string(v_reset) + ")");
    }
    if (!(surrogate_alpha > 0.0) || !std::isfinite(surrogate_alpha)) {
        fail(ErrorKind::validation, "surrogate alpha must be positive");
    }
}

double surrogate_derivative(double h, const IFParams& params) {
    const double a = params.surrogate_alpha;
    const double tri = 1.0 - std::abs(h - params.v_threshold) / a;
    return tri > 0.0 ? tri / a : 0.0;
}

double spike_value(double h, const IFParams& params) {
    const double u = h - params.v_threshold;
    switch (params.mode) {
    case Mode::spiking:
        return u >= 0.0 ? 1.0 : 0.0;
    case Mode::integrator:
        return 0.0;
    case Mode::smooth: {
        const double a = params.surrogate_alpha;
        if (u <= -a) return 0.0;
        if (u >= a) return 1.0;
        if (u <= 0.0) return (u + a) * (u + a) / (2.0 * a * a);
        return 1.0 - (a - u) * (a - u) / (2.0 * a * a);
    }
    }
    return 0.0;
}

Tensor surrogate_grad(const Tensor& h, const IFParams& params) {
    Tensor out(h.shape());
    auto hs = h.data();
    auto ys = out.mutable_data();
    for (std::size_t i = 0; i < hs.size(); ++i) ys[i] = surrogate_derivative(hs[i], params);
    return out;
}

namespace {

struct StepValues {
    double s;
    double v;
};

inline StepValues step_values(double h, const IFParams& p) {
    if (p.mode == Mode::integrator) return {0.0, h};
    const double s = spike_value(h, p);
    return {s, h * (1.0 - s) + p.v_reset * s};
}

// dS/dH and dV'/dH at pre-spike membrane h.
inline void step_partials(double h, const IFParams& p, double& ds, double& dv) {
    if (p.mode == Mode::integrator) {
        ds = 0.0;
        dv = 1.0;
        return;
    }
    const double s = spike_value(h, p);
    ds = surrogate_derivative(h, p);
    dv = (1.0 - s) + (p.v_reset - h) * ds;
}

} // namespace

void IFState::reset(const Shape& shape) {
    v = Tensor::zeros(shape);
    step = 0;
}

void IFState::reset() {
    if (v.defined()) v = Tensor::zeros(v.shape());
    step = 0;
}

Tensor if_step(Tape& tape, IFState& state, const Tensor& x, const IFParams& params) {
    params.validate();
    if (!state.v.defined()) state.reset(x.shape());
    if (state.v.shape() != x.shape()) {
        fail(ErrorKind::dimension, "if_step: input " + shape_str(x.shape()) + " does not match membrane " +
                                       shape_str(state.v.shape()));
    }
    const Tensor v_prev = state.v;
    Tensor spikes(x.shape());
    Tensor v_new(x.shape());
    std::vector<double> h(x.numel());
    {
        auto vp = v_prev.data();
        auto xs = x.data();
        auto ss = spikes.mutable_data();
        auto vs = v_new.mutable_data();
        for (std::size_t i = 0; i < h.size(); ++i) {
            h[i] = vp[i] + xs[i];
            const auto sv = step_values(h[i], params);
            ss[i] = sv.s;
            vs[i] = sv.v;
        }
    }
    if (tape.needs_grad({&v_prev, &x})) {
        tape.record({v_prev, x}, {spikes, v_new}, [v_prev, x, spikes, v_new, params, h = std::move(h)]() mutable {
            const bool has_s = spikes.has_grad(), has_v = v_new.has_grad();
            auto gs = has_s ? spikes.grad() : std::span<const double>();
            auto gv = has_v ? v_new.grad() : std::span<const double>();
            double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
            double* gp = v_prev.requires_grad() ? v_prev.grad_buffer().data() : nullptr;
            for (std::size_t i = 0; i < h.size(); ++i) {
                double ds, dv;
                step_partials(h[i], params, ds, dv);
                const double gh = (has_s ? gs[i] * ds : 0.0) + (has_v ? gv[i] * dv : 0.0);
                if (gx) gx[i] += gh;
                if (gp) gp[i] += gh;
            }
        });
    }
    state.v = v_new;
    ++state.step;
    return spikes;
}

MultiStepResult if_multistep(Tape& tape, const Tensor& x, const IFParams& params, const Tensor& v0) {
    params.validate();
    if (x.rank() < 2) fail(ErrorKind::dimension, "if_multistep: input needs a leading time axis, got " +
                                                     shape_str(x.shape()));
    const std::size_t steps = x.dim(0);
    Shape frame_shape(x.shape().begin() + 1, x.shape().end());
    const std::size_t n = shape_numel(frame_shape);
    if (v0.defined() && v0.shape() != frame_shape) {
        fail(ErrorKind::dimension, "if_multistep: initial membrane " + shape_str(v0.shape()) + " does not match frame " +
                                       shape_str(frame_shape));
    }

    MultiStepResult r{Tensor(x.shape()), Tensor(x.shape()), Tensor(frame_shape)};
    std::vector<double> h(x.numel());
    std::vector<double> v(n, 0.0);
    if (v0.defined()) std::copy(v0.data().begin(), v0.data().end(), v.begin());
    auto xs = x.data();
    auto ss = r.spikes.mutable_data();
    auto ms = r.membrane.mutable_data();
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t off = t * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double hv = v[i] + xs[off + i];
            const auto sv = step_values(hv, params);
            h[off + i] = hv;
            ss[off + i] = sv.s;
            ms[off + i] = sv.v;
            v[i] = sv.v;
        }
    }
    std::copy(v.begin(), v.end(), r.v_final.mutable_data().begin());

    if (tape.needs_grad({&x, &v0})) {
        tape.record({x, v0}, {r.spikes, r.membrane, r.v_final},
                    [x, v0, out = r, params, steps, n, h = std::move(h)]() mutable {
                        const bool has_s = out.spikes.has_grad();
                        const bool has_m = out.membrane.has_grad();
                        const bool has_f = out.v_final.has_grad();
                        auto gs = has_s ? out.spikes.grad() : std::span<const double>();
                        auto gm = has_m ? out.membrane.grad() : std::span<const double>();
                        // carry holds dL/dV_t flowing back from step t+1.
                        std::vector<double> carry(n, 0.0);
                        if (has_f) {
                            auto gf = out.v_final.grad();
                            std::copy(gf.begin(), gf.end(), carry.begin());
                        }
                        double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
                        for (std::size_t t = steps; t-- > 0;) {
                            const std::size_t off = t * n;
                            for (std::size_t i = 0; i < n; ++i) {
                                double ds, dv;
                                step_partials(h[off + i], params, ds, dv);
                                const double g_v = carry[i] + (has_m ? gm[off + i] : 0.0);
                                const double gh = (has_s ? gs[off + i] * ds : 0.0) + g_v * dv;
                                if (gx) gx[off + i] += gh;
                                carry[i] = gh; // dH_t/dV_{t-1} = 1
                            }
                        }
                        if (v0.defined() && v0.requires_grad()) {
                            auto g0 = v0.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i) g0[i] += carry[i];
                        }
                    });
    }
    return r;
}

void reset_state(std::span<IFState> states) {
    for (auto& s : states) s.reset();
}

} // namespace mss::neuron
