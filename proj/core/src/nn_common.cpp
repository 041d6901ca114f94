#include "daq/nn_common.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "daq/errors.hpp"

namespace daq::nn {

namespace F = torch::nn::functional;

at::Generator make_generator(uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

namespace {

void init_weight(torch::Tensor& w, int64_t fan_in, at::Generator& gen, double gain) {
    torch::NoGradGuard no_grad;
    w.normal_(0.0, gain / std::sqrt(static_cast<double>(fan_in)), gen);
}

}  // namespace

void init_linear(torch::nn::Linear& layer, at::Generator& gen, double gain) {
    init_weight(layer->weight, layer->weight.size(1), gen, gain);
    if (layer->bias.defined()) {
        torch::NoGradGuard no_grad;
        layer->bias.zero_();
    }
}

void init_conv(torch::nn::Conv2d& layer, at::Generator& gen, double gain) {
    const auto& w = layer->weight;
    init_weight(layer->weight, w.size(1) * w.size(2) * w.size(3), gen, gain);
    if (layer->bias.defined()) {
        torch::NoGradGuard no_grad;
        layer->bias.zero_();
    }
}

void init_conv(torch::nn::ConvTranspose2d& layer, at::Generator& gen, double gain) {
    // Transposed conv weight is (in, out, kh, kw); each output sees `in` inputs.
    init_weight(layer->weight, layer->weight.size(0), gen, gain);
    if (layer->bias.defined()) {
        torch::NoGradGuard no_grad;
        layer->bias.zero_();
    }
}

void zero_linear(torch::nn::Linear& layer) {
    torch::NoGradGuard no_grad;
    layer->weight.zero_();
    if (layer->bias.defined()) layer->bias.zero_();
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width) {
    if (x.size(-2) == height && x.size(-1) == width) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

torch::Tensor resize_area(const torch::Tensor& x, int64_t height, int64_t width) {
    if (x.size(-2) == height && x.size(-1) == width) return x;
    return F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({height, width}));
}

torch::Tensor to_tokens(const torch::Tensor& x) {
    return x.flatten(2).transpose(1, 2);
}

torch::Tensor from_tokens(const torch::Tensor& t, int64_t height, int64_t width) {
    return t.transpose(1, 2).reshape({t.size(0), t.size(2), height, width});
}

torch::Tensor channel_linear(torch::nn::Linear& layer, const torch::Tensor& x) {
    if (x.size(1) != layer->weight.size(1)) {
        throw ShapeError("channel projection expects " + std::to_string(layer->weight.size(1)) +
                         " channels, got " + std::to_string(x.size(1)));
    }
    return layer->forward(x.permute({0, 2, 3, 1})).permute({0, 3, 1, 2});
}

torch::Tensor sinusoidal_position_encoding(int64_t height, int64_t width, int64_t dim,
                                           const torch::TensorOptions& options) {
    TORCH_CHECK(dim % 4 == 0, "positional encoding dim must be a multiple of 4");
    const int64_t quarter = dim / 4;
    auto opts = options.requires_grad(false);
    auto freq = torch::exp(torch::arange(quarter, opts) * (-std::log(10000.0) / static_cast<double>(quarter)));
    auto ys = torch::arange(height, opts).unsqueeze(1) * freq.unsqueeze(0);  // (H, q)
    auto xs = torch::arange(width, opts).unsqueeze(1) * freq.unsqueeze(0);   // (W, q)
    auto row = torch::cat({ys.sin(), ys.cos()}, 1);                          // (H, 2q)
    auto col = torch::cat({xs.sin(), xs.cos()}, 1);                          // (W, 2q)
    auto grid = torch::cat({row.unsqueeze(1).expand({height, width, 2 * quarter}),
                            col.unsqueeze(0).expand({height, width, 2 * quarter})},
                           2);
    return grid.reshape({height * width, dim});
}

std::vector<torch::Tensor> trainable_parameters(const torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (const auto& p : module.parameters()) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

}  // namespace daq::nn
