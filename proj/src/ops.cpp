#include "mssdepth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mssdepth/error.hpp"

namespace mss {

namespace {

std::string axis_msg(const char* op, std::size_t axis, std::size_t got, std::size_t want) {
    return std::string(op) + ": axis " + std::to_string(axis) + " has size " + std::to_string(got) + ", expected " +
           std::to_string(want);
}

// For every flat index of `out_shape`, the flat index of `in_shape` after
// padding it with trailing 1s and broadcasting.
std::vector<std::size_t> broadcast_map(const char* op, const Shape& out_shape, const Shape& in_shape) {
    if (in_shape.size() > out_shape.size()) {
        fail(ErrorKind::dimension, std::string(op) + ": cannot broadcast " + shape_str(in_shape) + " into " +
                                       shape_str(out_shape));
    }
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t k = rank; k-- > 0;) {
        std::size_t d = k < in_shape.size() ? in_shape[k] : 1;
        if (d != out_shape[k] && d != 1) fail(ErrorKind::dimension, axis_msg(op, k, d, out_shape[k]));
        strides[k] = (d == 1) ? 0 : stride;
        stride *= d;
    }
    std::vector<std::size_t> map(shape_numel(out_shape));
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < map.size(); ++flat) {
        map[flat] = src;
        for (std::size_t k = rank; k-- > 0;) {
            ++idx[k];
            src += strides[k];
            if (idx[k] < out_shape[k]) break;
            src -= strides[k] * idx[k];
            idx[k] = 0;
        }
    }
    return map;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

struct ConvGeom {
    std::size_t frames, cin, h, w, cout, k, oh, ow, stride, pad;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, const Conv2dOptions& opts) {
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    if (is.size() != 3 && is.size() != 4) {
        fail(ErrorKind::dimension, "conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(is));
    }
    if (ws.size() != 4) fail(ErrorKind::dimension, "conv2d: weight must be [C_out,C_in,k,k], got " + shape_str(ws));
    const std::size_t off = is.size() - 3;
    ConvGeom g{};
    g.frames = off ? is[0] : 1;
    g.cin = is[off];
    g.h = is[off + 1];
    g.w = is[off + 2];
    g.cout = ws[0];
    g.k = ws[2];
    g.stride = opts.stride;
    g.pad = opts.padding;
    if (ws[1] != g.cin) fail(ErrorKind::dimension, axis_msg("conv2d weight", 1, ws[1], g.cin));
    if (ws[3] != g.k) fail(ErrorKind::dimension, axis_msg("conv2d weight", 3, ws[3], g.k));
    if (g.k % 2 == 0) fail(ErrorKind::argument, "conv2d: kernel size must be odd, got " + std::to_string(g.k));
    if (g.stride < 1) fail(ErrorKind::argument, "conv2d: stride must be >= 1");
    if (g.h + 2 * g.pad < g.k) fail(ErrorKind::dimension, "conv2d: input height smaller than kernel");
    if (g.w + 2 * g.pad < g.k) fail(ErrorKind::dimension, "conv2d: input width smaller than kernel");
    // a trailing partial window is dropped
    g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
    return g;
}

// Output columns whose tap at kernel offset `kx` lands inside [0, extent).
inline void tap_range(std::size_t kx, std::size_t pad, std::size_t stride, std::size_t extent, std::size_t out_extent,
                      std::size_t& lo, std::size_t& hi) {
    // input = o*stride + kx - pad must lie in [0, extent)
    lo = 0;
    if (pad > kx) lo = (pad - kx + stride - 1) / stride;
    long long top = static_cast<long long>(extent) - 1 + static_cast<long long>(pad) - static_cast<long long>(kx);
    if (top < 0) {
        hi = 0;
        return;
    }
    hi = std::min(out_extent, static_cast<std::size_t>(top) / stride + 1);
    if (hi < lo) hi = lo;
}

// Calls fn(out_row_offset, in_row_offset, ow_lo, ow_hi, in_col_start) for
// every valid (oh, kh) pair at kernel column kw.
template <class Fn>
void for_each_tap(const ConvGeom& g, std::size_t kh, std::size_t kw, Fn&& fn) {
    std::size_t oh_lo, oh_hi, ow_lo, ow_hi;
    tap_range(kh, g.pad, g.stride, g.h, g.oh, oh_lo, oh_hi);
    tap_range(kw, g.pad, g.stride, g.w, g.ow, ow_lo, ow_hi);
    if (ow_lo >= ow_hi) return;
    for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
        const std::size_t ih = oh * g.stride + kh - g.pad;
        fn(oh * g.ow, ih * g.w, ow_lo, ow_hi, ow_lo * g.stride + kw - g.pad);
    }
}

} // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, Conv2dOptions opts, const Tensor& bias) {
    const ConvGeom g = conv_geometry(input, weight, opts);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
        fail(ErrorKind::dimension, "conv2d: bias must be [" + std::to_string(g.cout) + "], got " +
                                       shape_str(bias.shape()));
    }
    Shape out_shape = input.rank() == 4 ? Shape{g.frames, g.cout, g.oh, g.ow} : Shape{g.cout, g.oh, g.ow};
    Tensor out(out_shape);

    const double* x = input.data().data();
    const double* wt = weight.data().data();
    double* y = out.mutable_data().data();
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.oh * g.ow;
    const std::size_t s = g.stride;

    for (std::size_t n = 0; n < g.frames; ++n) {
        for (std::size_t co = 0; co < g.cout; ++co) {
            double* yp = y + (n * g.cout + co) * out_plane;
            if (bias.defined()) std::fill(yp, yp + out_plane, bias.data()[co]);
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double* xp = x + (n * g.cin + ci) * in_plane;
                const double* wp = wt + (co * g.cin + ci) * g.k * g.k;
                for (std::size_t kh = 0; kh < g.k; ++kh) {
                    for (std::size_t kw = 0; kw < g.k; ++kw) {
                        const double wv = wp[kh * g.k + kw];
                        if (wv == 0.0) continue;
                        for_each_tap(g, kh, kw, [&](std::size_t orow, std::size_t irow, std::size_t lo, std::size_t hi,
                                                    std::size_t icol) {
                            double* yr = yp + orow;
                            const double* xr = xp + irow + icol;
                            for (std::size_t ow = lo; ow < hi; ++ow, xr += s) yr[ow] += wv * *xr;
                        });
                    }
                }
            }
        }
    }

    if (tape.needs_grad({&input, &weight, &bias})) {
        tape.record({input, weight, bias}, {out}, [g, input, weight, bias, out]() mutable {
            const double* gy = out.grad().data();
            const double* x = input.data().data();
            const double* wt = weight.data().data();
            const std::size_t in_plane = g.h * g.w;
            const std::size_t out_plane = g.oh * g.ow;
            const std::size_t s = g.stride;
            double* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
            double* gw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad_buffer();
                for (std::size_t n = 0; n < g.frames; ++n) {
                    for (std::size_t co = 0; co < g.cout; ++co) {
                        const double* gp = gy + (n * g.cout + co) * out_plane;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < out_plane; ++i) acc += gp[i];
                        gb[co] += acc;
                    }
                }
            }
            for (std::size_t n = 0; n < g.frames; ++n) {
                for (std::size_t co = 0; co < g.cout; ++co) {
                    const double* gp = gy + (n * g.cout + co) * out_plane;
                    for (std::size_t ci = 0; ci < g.cin; ++ci) {
                        const std::size_t plane = (n * g.cin + ci) * in_plane;
                        const std::size_t wbase = (co * g.cin + ci) * g.k * g.k;
                        for (std::size_t kh = 0; kh < g.k; ++kh) {
                            for (std::size_t kw = 0; kw < g.k; ++kw) {
                                const double wv = wt[wbase + kh * g.k + kw];
                                double wacc = 0.0;
                                for_each_tap(g, kh, kw, [&](std::size_t orow, std::size_t irow, std::size_t lo,
                                                            std::size_t hi, std::size_t icol) {
                                    const double* gr = gp + orow;
                                    const std::size_t base = plane + irow + icol;
                                    if (gx) {
                                        double* gxr = gx + base;
                                        for (std::size_t ow = lo; ow < hi; ++ow, gxr += s) *gxr += wv * gr[ow];
                                    }
                                    if (gw) {
                                        const double* xr = x + base;
                                        for (std::size_t ow = lo; ow < hi; ++ow, xr += s) wacc += gr[ow] * *xr;
                                    }
                                });
                                if (gw) gw[wbase + kh * g.k + kw] += wacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor nearest_upsample(Tape& tape, const Tensor& input, std::size_t factor) {
    if (factor < 1) fail(ErrorKind::argument, "nearest_upsample: factor must be >= 1");
    if (input.rank() < 2) fail(ErrorKind::dimension, "nearest_upsample: input needs two spatial axes");
    Shape out_shape = input.shape();
    const std::size_t h = out_shape[out_shape.size() - 2];
    const std::size_t w = out_shape[out_shape.size() - 1];
    out_shape[out_shape.size() - 2] = h * factor;
    out_shape[out_shape.size() - 1] = w * factor;
    const std::size_t planes = input.numel() / (h * w);
    const std::size_t oh = h * factor, ow = w * factor;

    Tensor out(out_shape);
    const double* x = input.data().data();
    double* y = out.mutable_data().data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < oh; ++i) {
            const double* xr = x + p * h * w + (i / factor) * w;
            double* yr = y + p * oh * ow + i * ow;
            for (std::size_t j = 0; j < ow; ++j) yr[j] = xr[j / factor];
        }
    }
    if (tape.needs_grad({&input})) {
        tape.record({input}, {out}, [input, out, planes, h, w, factor]() mutable {
            const double* gy = out.grad().data();
            double* gx = input.grad_buffer().data();
            const std::size_t oh = h * factor, ow = w * factor;
            for (std::size_t p = 0; p < planes; ++p) {
                for (std::size_t i = 0; i < oh; ++i) {
                    double* gxr = gx + p * h * w + (i / factor) * w;
                    const double* gyr = gy + p * oh * ow + i * ow;
                    for (std::size_t j = 0; j < ow; ++j) gxr[j / factor] += gyr[j];
                }
            }
        });
    }
    return out;
}

Tensor pool(Tape& tape, const Tensor& input, const std::vector<std::size_t>& axes, PoolMode mode) {
    const Shape& is = input.shape();
    if (axes.empty()) fail(ErrorKind::argument, "pool: axis set is empty");
    std::vector<bool> reduced(is.size(), false);
    for (auto a : axes) {
        if (a >= is.size()) {
            fail(ErrorKind::argument, "pool: axis " + std::to_string(a) + " invalid for rank " +
                                          std::to_string(is.size()));
        }
        if (reduced[a]) fail(ErrorKind::argument, "pool: axis " + std::to_string(a) + " listed twice");
        reduced[a] = true;
    }
    Shape out_shape;
    Shape keep_shape(is.size(), 1);
    for (std::size_t k = 0; k < is.size(); ++k) {
        if (!reduced[k]) {
            out_shape.push_back(is[k]);
            keep_shape[k] = is[k];
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);

    // Input flat index -> output flat index, reusing the broadcast mapping of
    // the kept-axes shape (reduced axes collapse to size 1).
    auto map = broadcast_map("pool", is, keep_shape);
    Tensor out(out_shape);
    const std::size_t n_out = out.numel();
    const std::size_t group = input.numel() / n_out;
    const double* x = input.data().data();
    double* y = out.mutable_data().data();
    std::vector<std::size_t> argmax;

    if (mode == PoolMode::avg) {
        for (std::size_t i = 0; i < map.size(); ++i) y[map[i]] += x[i];
        for (std::size_t o = 0; o < n_out; ++o) y[o] /= static_cast<double>(group);
    } else {
        argmax.assign(n_out, std::numeric_limits<std::size_t>::max());
        for (std::size_t i = 0; i < map.size(); ++i) {
            auto& a = argmax[map[i]];
            if (a == std::numeric_limits<std::size_t>::max() || x[i] > x[a]) a = i;
        }
        for (std::size_t o = 0; o < n_out; ++o) y[o] = x[argmax[o]];
    }

    if (tape.needs_grad({&input})) {
        tape.record({input}, {out}, [input, out, mode, group, map = std::move(map), argmax = std::move(argmax)]() mutable {
            const double* gy = out.grad().data();
            double* gx = input.grad_buffer().data();
            if (mode == PoolMode::avg) {
                const double inv = 1.0 / static_cast<double>(group);
                for (std::size_t i = 0; i < map.size(); ++i) gx[i] += gy[map[i]] * inv;
            } else {
                for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += gy[o];
            }
        });
    }
    return out;
}

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2) fail(ErrorKind::dimension, "linear: weight must be [M,N], got " + shape_str(weight.shape()));
    const std::size_t m = weight.dim(0), n = weight.dim(1);
    if (input.rank() != 1 && input.rank() != 2) {
        fail(ErrorKind::dimension, "linear: input must be [N] or [B,N], got " + shape_str(input.shape()));
    }
    const std::size_t rows = input.rank() == 2 ? input.dim(0) : 1;
    const std::size_t in_n = input.shape().back();
    if (in_n != n) fail(ErrorKind::dimension, axis_msg("linear input", input.rank() - 1, in_n, n));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m)) {
        fail(ErrorKind::dimension, "linear: bias must be [" + std::to_string(m) + "], got " + shape_str(bias.shape()));
    }
    Tensor out(input.rank() == 2 ? Shape{rows, m} : Shape{m});
    const double* x = input.data().data();
    const double* wt = weight.data().data();
    double* y = out.mutable_data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < m; ++i) {
            double acc = bias.defined() ? bias.data()[i] : 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += wt[i * n + j] * x[r * n + j];
            y[r * m + i] = acc;
        }
    }
    if (tape.needs_grad({&input, &weight, &bias})) {
        tape.record({input, weight, bias}, {out}, [input, weight, bias, out, rows, m, n]() mutable {
            const double* gy = out.grad().data();
            const double* x = input.data().data();
            const double* wt = weight.data().data();
            double* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
            double* gw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
            double* gb = bias.defined() && bias.requires_grad() ? bias.grad_buffer().data() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double g = gy[r * m + i];
                    if (gb) gb[i] += g;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (gx) gx[r * n + j] += wt[i * n + j] * g;
                        if (gw) gw[i * n + j] += x[r * n + j] * g;
                    }
                }
            }
        });
    }
    return out;
}

namespace {

// Elementwise unary op with derivative expressed through input and output.
template <class F, class DF>
Tensor unary(Tape& tape, const Tensor& x, F f, DF df) {
    Tensor out(x.shape());
    auto xs = x.data();
    auto ys = out.mutable_data();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
    if (tape.needs_grad({&x})) {
        tape.record({x}, {out}, [x, out, df]() mutable {
            auto gy = out.grad();
            auto xs = x.data();
            auto ys = out.data();
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * df(xs[i], ys[i]);
        });
    }
    return out;
}

enum class Binary { add, sub, mul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, Binary kind) {
    static const char* names[] = {"add", "sub", "mul"};
    const char* name = names[static_cast<int>(kind)];
    const bool same = same_shape(a.shape(), b.shape());
    std::vector<std::size_t> map;
    if (!same) map = broadcast_map(name, a.shape(), b.shape());
    auto bi = [&map, same](std::size_t i) { return same ? i : map[i]; };

    Tensor out(a.shape());
    auto as = a.data();
    auto bs = b.data();
    auto ys = out.mutable_data();
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const double bv = bs[bi(i)];
        switch (kind) {
        case Binary::add: ys[i] = as[i] + bv; break;
        case Binary::sub: ys[i] = as[i] - bv; break;
        case Binary::mul: ys[i] = as[i] * bv; break;
        }
    }
    if (tape.needs_grad({&a, &b})) {
        tape.record({a, b}, {out}, [a, b, out, kind, same, map = std::move(map)]() mutable {
            auto gy = out.grad();
            auto as = a.data();
            auto bs = b.data();
            // Gradients are staged so a == b (same storage) accumulates twice.
            std::vector<double> ga, gb;
            if (a.requires_grad()) ga.assign(as.size(), 0.0);
            if (b.requires_grad()) gb.assign(bs.size(), 0.0);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                const std::size_t j = same ? i : map[i];
                const double g = gy[i];
                switch (kind) {
                case Binary::add:
                    if (!ga.empty()) ga[i] += g;
                    if (!gb.empty()) gb[j] += g;
                    break;
                case Binary::sub:
                    if (!ga.empty()) ga[i] += g;
                    if (!gb.empty()) gb[j] -= g;
                    break;
                case Binary::mul:
                    if (!ga.empty()) ga[i] += g * bs[j];
                    if (!gb.empty()) gb[j] += g * as[i];
                    break;
                }
            }
            if (!ga.empty()) {
                auto buf = a.grad_buffer();
                for (std::size_t i = 0; i < ga.size(); ++i) buf[i] += ga[i];
            }
            if (!gb.empty()) {
                auto buf = b.grad_buffer();
                for (std::size_t i = 0; i < gb.size(); ++i) buf[i] += gb[i];
            }
        });
    }
    return out;
}

} // namespace

Tensor sigmoid(Tape& tape, const Tensor& x) {
    return unary(
        tape, x,
        [](double v) {
            // Split by sign so exp never overflows. Saturated values are
            // pinned just inside (0, 1).
            constexpr double lo = std::numeric_limits<double>::min();
            constexpr double hi = 1.0 - 0x1p-53;
            if (v >= 0) return std::min(hi, 1.0 / (1.0 + std::exp(-v)));
            const double e = std::exp(v);
            return std::max(lo, e / (1.0 + e));
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape& tape, const Tensor& x) {
    return unary(
        tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, Binary::add); }
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, Binary::sub); }
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, Binary::mul); }

Tensor scale(Tape& tape, const Tensor& x, double factor) {
    return unary(
        tape, x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, std::size_t axis) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size()) {
        fail(ErrorKind::dimension, "concat: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    }
    if (axis >= sa.size()) fail(ErrorKind::argument, "concat: axis " + std::to_string(axis) + " out of range");
    for (std::size_t k = 0; k < sa.size(); ++k) {
        if (k != axis && sa[k] != sb[k]) fail(ErrorKind::dimension, axis_msg("concat", k, sb[k], sa[k]));
    }
    Shape out_shape = sa;
    out_shape[axis] = sa[axis] + sb[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t k = 0; k < axis; ++k) outer *= sa[k];
    for (std::size_t k = axis + 1; k < sa.size(); ++k) inner *= sa[k];
    const std::size_t ca = sa[axis] * inner, cb = sb[axis] * inner;

    Tensor out(out_shape);
    auto y = out.mutable_data();
    auto xa = a.data();
    auto xb = b.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(xa.begin() + o * ca, ca, y.begin() + o * (ca + cb));
        std::copy_n(xb.begin() + o * cb, cb, y.begin() + o * (ca + cb) + ca);
    }
    if (tape.needs_grad({&a, &b})) {
        tape.record({a, b}, {out}, [a, b, out, outer, ca, cb]() mutable {
            auto gy = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad_buffer();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += gy[o * (ca + cb) + i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad_buffer();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += gy[o * (ca + cb) + ca + i];
            }
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        fail(ErrorKind::dimension, "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    if (tape.needs_grad({&x})) {
        tape.record({x}, {out}, [x, out]() mutable {
            auto gy = out.grad();
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (tape.needs_grad({&x})) {
        tape.record({x}, {out}, [x, out]() mutable {
            const double g = out.grad()[0];
            for (double& v : x.grad_buffer()) v += g;
        });
    }
    return out;
}

Tensor crop2d(Tape& tape, const Tensor& x, std::size_t height, std::size_t width) {
    if (x.rank() < 2) fail(ErrorKind::dimension, "crop2d: input needs two spatial axes");
    Shape s = x.shape();
    const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
    if (height == 0 || width == 0 || height > h || width > w) {
        fail(ErrorKind::dimension, "crop2d: window " + std::to_string(height) + "x" + std::to_string(width) +
                                       " does not fit " + shape_str(s));
    }
    s[s.size() - 2] = height;
    s[s.size() - 1] = width;
    const std::size_t planes = x.numel() / (h * w);
    Tensor out(s);
    auto y = out.mutable_data();
    auto xs = x.data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < height; ++i)
            std::copy_n(xs.begin() + (p * h + i) * w, width, y.begin() + (p * height + i) * width);
    if (tape.needs_grad({&x})) {
        tape.record({x}, {out}, [x, out, planes, h, w, height, width]() mutable {
            auto gy = out.grad();
            auto gx = x.grad_buffer();
            for (std::size_t p = 0; p < planes; ++p)
                for (std::size_t i = 0; i < height; ++i)
                    for (std::size_t j = 0; j < width; ++j)
                        gx[(p * h + i) * w + j] += gy[(p * height + i) * width + j];
        });
    }
    return out;
}

Tensor select(Tape& tape, const Tensor& x, std::size_t index) {
    if (x.rank() < 2) fail(ErrorKind::dimension, "select: input needs a leading axis and a frame");
    if (index >= x.dim(0)) fail(ErrorKind::argument, "select: frame " + std::to_string(index) + " out of range");
    Shape s(x.shape().begin() + 1, x.shape().end());
    const std::size_t frame = shape_numel(s);
    auto xs = x.data();
    Tensor out(s, std::vector<double>(xs.begin() + index * frame, xs.begin() + (index + 1) * frame));
    if (tape.needs_grad({&x})) {
        tape.record({x}, {out}, [x, out, index, frame]() mutable {
            auto gy = out.grad();
            auto gx = x.grad_buffer();
            for (std::size_t i = 0; i < frame; ++i) gx[index * frame + i] += gy[i];
        });
    }
    return out;
}

} // namespace mss
