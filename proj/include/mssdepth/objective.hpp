#pragma once

#include <span>
#include <string>

#include "mssdepth/events.hpp"
#include "mssdepth/tensor.hpp"

namespace mss::objective {

enum class SsiSign { minus, plus };

struct LossConfig {
    double lambda_reg = 0.5;
    SsiSign ssi_sign = SsiSign::minus;

    void validate() const;
};

SsiSign parse_ssi_sign(const std::string& s);
const char* to_string(SsiSign s);

// (1/n) sum R^2 -/+ (1/n^2) (sum R)^2 with R = gt - pred over valid pixels.
// The minus form is the variance of R and therefore shift invariant.
Tensor ssi_loss(Tape& tape, const Tensor& pred, const events::DepthFrame& gt, const LossConfig& cfg);

// (1/n) sum |dx R| + |dy R| using forward differences; a difference counts
// only when both of its pixels are valid.
Tensor reg_loss(Tape& tape, const Tensor& pred, const events::DepthFrame& gt);

// Sum over frames of ssi + lambda * reg.
Tensor total_loss(Tape& tape, std::span<const Tensor> preds, std::span<const events::DepthFrame> gts,
                  const LossConfig& cfg);

// Mean absolute depth error over valid pixels, in centimetres.
double mde_cm(const Tensor& pred, const events::DepthFrame& gt);

} // namespace mss::objective
