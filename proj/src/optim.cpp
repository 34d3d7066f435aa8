#include "mssdepth/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mssdepth/error.hpp"

namespace mss {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    if (contains(name)) fail(ErrorKind::argument, "parameter '" + name + "' already registered");
    value.set_requires_grad(true);
    Shape s = value.shape();
    entries_.push_back(Entry{name, std::move(value), Tensor::zeros(s), Tensor::zeros(s)});
    return entries_.back().value;
}

Tensor& ParamStore::get(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e.value;
    fail(ErrorKind::argument, "unknown parameter '" + name + "'");
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e.value;
    fail(ErrorKind::argument, "unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) {
        auto g = e.value.grad_buffer();
        std::fill(g.begin(), g.end(), 0.0);
    }
}

void adam_step(ParamStore& params, const AdamOptions& opts) {
    for (const auto& e : params.entries()) {
        if (!e.value.has_grad()) fail(ErrorKind::state, "adam_step: parameter '" + e.name + "' has no gradient");
    }
    const std::uint64_t step = params.adam_steps() + 1;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
    for (auto& e : params.entries()) {
        auto w = e.value.mutable_data();
        auto g = e.value.grad();
        auto m = e.first_moment.mutable_data();
        auto v = e.second_moment.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
            v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
        }
    }
    params.set_adam_steps(step);
}

} // namespace mss
