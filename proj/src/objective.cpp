#include "mssdepth/objective.hpp"

#include <cmath>

#include "mssdepth/error.hpp"
#include "mssdepth/ops.hpp"

namespace mss::objective {

void LossConfig::validate() const {
    if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
        fail(ErrorKind::validation, "lambda_reg must be a finite value >= 0");
    }
}

SsiSign parse_ssi_sign(const std::string& s) {
    if (s == "minus") return SsiSign::minus;
    if (s == "plus") return SsiSign::plus;
    fail(ErrorKind::validation, "ssi_sign must be 'minus' or 'plus', got '" + s + "'");
}

const char* to_string(SsiSign s) { return s == SsiSign::minus ? "minus" : "plus"; }

namespace {

std::size_t checked_count(const Tensor& pred, const events::DepthFrame& gt, const char* what) {
    if (pred.rank() != 2 || pred.shape() != gt.depth.shape()) {
        fail(ErrorKind::dimension, std::string(what) + ": prediction " + shape_str(pred.shape()) +
                                       " does not match ground truth " + shape_str(gt.depth.shape()));
    }
    const std::size_t n = gt.valid_count();
    if (n == 0) fail(ErrorKind::metric, std::string(what) + ": ground truth has no valid pixels");
    return n;
}

} // namespace

Tensor ssi_loss(Tape& tape, const Tensor& pred, const events::DepthFrame& gt, const LossConfig& cfg) {
    const std::size_t count = checked_count(pred, gt, "ssi_loss");
    const double n = static_cast<double>(count);
    const double sign = cfg.ssi_sign == SsiSign::minus ? -1.0 : 1.0;
    auto p = pred.data();
    auto d = gt.depth.data();
    double sum_r = 0.0, sum_r2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!gt.valid[i]) continue;
        const double r = d[i] - p[i];
        sum_r += r;
        sum_r2 += r * r;
    }
    Tensor out = Tensor::scalar(sum_r2 / n + sign * sum_r * sum_r / (n * n));
    if (tape.needs_grad({&pred})) {
        tape.record({pred}, {out}, [pred, out, gt, n, sign, sum_r]() mutable {
            const double g = out.grad()[0];
            auto p = pred.data();
            auto d = gt.depth.data();
            auto gp = pred.grad_buffer();
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!gt.valid[i]) continue;
                const double r = d[i] - p[i];
                // dL/dR, then dR/dpred = -1
                const double dr = 2.0 * r / n + sign * 2.0 * sum_r / (n * n);
                gp[i] -= g * dr;
            }
        });
    }
    return out;
}

Tensor reg_loss(Tape& tape, const Tensor& pred, const events::DepthFrame& gt) {
    const std::size_t count = checked_count(pred, gt, "reg_loss");
    const double n = static_cast<double>(count);
    const std::size_t h = pred.dim(0), w = pred.dim(1);
    auto p = pred.data();
    auto d = gt.depth.data();
    auto residual = [&](std::size_t i) { return d[i] - p[i]; };
    double acc = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            if (!gt.valid[i]) continue;
            if (x + 1 < w && gt.valid[i + 1]) acc += std::abs(residual(i + 1) - residual(i));
            if (y + 1 < h && gt.valid[i + w]) acc += std::abs(residual(i + w) - residual(i));
        }
    }
    Tensor out = Tensor::scalar(acc / n);
    if (tape.needs_grad({&pred})) {
        tape.record({pred}, {out}, [pred, out, gt, n, h, w]() mutable {
            const double g = out.grad()[0] / n;
            auto p = pred.data();
            auto d = gt.depth.data();
            auto gp = pred.grad_buffer();
            auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };
            // |R(j) - R(i)| with R = gt - pred: d/dpred(j) = -sgn, d/dpred(i) = +sgn
            auto pair = [&](std::size_t i, std::size_t j) {
                const double s = sgn((d[j] - p[j]) - (d[i] - p[i]));
                gp[j] -= g * s;
                gp[i] += g * s;
            };
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t i = y * w + x;
                    if (!gt.valid[i]) continue;
                    if (x + 1 < w && gt.valid[i + 1]) pair(i, i + 1);
                    if (y + 1 < h && gt.valid[i + w]) pair(i, i + w);
                }
            }
        });
    }
    return out;
}

Tensor total_loss(Tape& tape, std::span<const Tensor> preds, std::span<const events::DepthFrame> gts,
                  const LossConfig& cfg) {
    cfg.validate();
    if (preds.size() != gts.size() || preds.empty()) {
        fail(ErrorKind::argument, "total_loss: need one ground-truth frame per prediction");
    }
    Tensor total;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        Tensor term = ssi_loss(tape, preds[k], gts[k], cfg);
        if (cfg.lambda_reg != 0.0) term = add(tape, term, scale(tape, reg_loss(tape, preds[k], gts[k]), cfg.lambda_reg));
        total = total.defined() ? add(tape, total, term) : term;
    }
    return total;
}

double mde_cm(const Tensor& pred, const events::DepthFrame& gt) {
    const std::size_t count = checked_count(pred, gt, "mde");
    auto p = pred.data();
    auto d = gt.depth.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (gt.valid[i]) acc += std::abs(d[i] - p[i]);
    return 100.0 * acc / static_cast<double>(count);
}

} // namespace mss::objective
