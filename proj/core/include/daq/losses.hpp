#pragma once

#include <torch/torch.h>

#include <map>

namespace daq {

inline constexpr double kBceEps = 1e-7;

/// Mean binary cross-entropy. `pred` is clamped to [eps, 1 - eps] and `gt` is
/// binarised at 0.5. Throws ShapeError when the shapes differ.
torch::Tensor bce(const torch::Tensor& pred, const torch::Tensor& gt);

struct LossTerms {
    torch::Tensor pred;   // L_pred
    torch::Tensor inter;  // L_inter (zero when nothing is supervised)
    torch::Tensor total;  // L_pred + alpha * L_inter
};

/// L_total = bce(P, GT) + alpha * mean_l bce(P~^l, GT) over the given levels.
LossTerms total_loss(const torch::Tensor& pred, const std::map<int, torch::Tensor>& intermediate,
                     const torch::Tensor& gt, double alpha);

}  // namespace daq
