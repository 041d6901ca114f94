#include "daq/losses.hpp"

#include "daq/errors.hpp"

namespace daq {

torch::Tensor bce(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.sizes() != gt.sizes()) {
        throw ShapeError("bce: prediction " + c10::str(pred.sizes()) + " vs ground truth " + c10::str(gt.sizes()));
    }
    auto p = pred.clamp(kBceEps, 1.0 - kBceEps);
    auto g = (gt >= 0.5).to(p.scalar_type());
    return -(g * torch::log(p) + (1 - g) * torch::log(1 - p)).mean();
}

LossTerms total_loss(const torch::Tensor& pred, const std::map<int, torch::Tensor>& intermediate,
                     const torch::Tensor& gt, double alpha) {
    LossTerms t;
    t.pred = bce(pred, gt);
    t.inter = torch::zeros({}, pred.options());
    for (const auto& [level, p] : intermediate) t.inter = t.inter + bce(p, gt);
    if (!intermediate.empty()) t.inter = t.inter / static_cast<double>(intermediate.size());
    t.total = t.pred + alpha * t.inter;
    return t;
}

}  // namespace daq
