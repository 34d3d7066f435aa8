#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mssdepth/tensor.hpp"

namespace mss {

// Named trainable tensors plus their Adam moment buffers, kept in insertion
// order so iteration (and therefore checkpoints) is deterministic.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor first_moment;
        Tensor second_moment;
    };

    Tensor& add(const std::string& name, Tensor value);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    // Total number of scalar parameters.
    std::size_t count() const;

    // Allocates (or clears) a zero gradient for every parameter, so ones the
    // loss does not reach still carry a gradient.
    void zero_grad();

    std::uint64_t adam_steps() const { return adam_steps_; }
    void set_adam_steps(std::uint64_t steps) { adam_steps_ = steps; }

private:
    std::vector<Entry> entries_;
    std::uint64_t adam_steps_ = 0;
};

struct AdamOptions {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over every parameter. A parameter without a
// gradient buffer is a state error.
void adam_step(ParamStore& params, const AdamOptions& opts);

} // namespace mss
