#pragma once

#include <cstddef>
#include <vector>

#include "mssdepth/tensor.hpp"

namespace mss {

// Differentiable building blocks. Every op records itself on `tape` when the
// tape is recording and at least one input requires a gradient.

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// input [C_in,H,W] or [N,C_in,H,W] (frames share the weight), weight
// [C_out,C_in,k,k], optional bias [C_out]. Cross-correlation, no flipping.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, Conv2dOptions opts = {},
              const Tensor& bias = Tensor());

// Nearest-neighbour upsampling of the two trailing axes.
Tensor nearest_upsample(Tape& tape, const Tensor& input, std::size_t factor);

enum class PoolMode { avg, max };

// Reduces over `axes`; reduced axes are dropped (a full reduction yields
// shape [1]). Max routes the gradient to the first maximum in row-major order.
Tensor pool(Tape& tape, const Tensor& input, const std::vector<std::size_t>& axes, PoolMode mode);

// input [N] or [B,N]; weight [M,N]; optional bias [M].
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias = Tensor());

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);

// `b` broadcasts into `a`: its shape, padded with trailing 1s to a's rank,
// must match `a` on every axis or be 1 there. The result has a's shape.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, std::size_t axis);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor sum(Tape& tape, const Tensor& x);

// Top-left [.., height, width] window of the two trailing axes.
Tensor crop2d(Tape& tape, const Tensor& x, std::size_t height, std::size_t width);

// Frame `index` of the leading axis; the result drops that axis.
Tensor select(Tape& tape, const Tensor& x, std::size_t index);

} // namespace mss
