#pragma once

#include <torch/torch.h>

#include <array>
#include <map>

#include "daq/adapter.hpp"
#include "daq/backbone.hpp"
#include "daq/config.hpp"

namespace daq {

/// Three-level image embedding pyramid plus the self-reasoning predictions.
struct EncoderOutput {
    /// E_I^2, E_I^3, E_I^4, each (B, fpn_width, h, w); E_I^4 is the smallest.
    std::array<torch::Tensor, 3> pyramid;
    /// Raw head logits at pyramid resolution, keyed by level.
    std::map<int, torch::Tensor> intermediate_logits;
    /// Sigmoid of the logits resized to the input size, keyed by level.
    std::map<int, torch::Tensor> intermediate_preds;
    /// RGB stream after each stage (F_RGB^1..4).
    std::array<torch::Tensor, 4> rgb_features;

    const torch::Tensor& level(int i) const { return pyramid.at(static_cast<size_t>(i - 2)); }
};

namespace nn {

/// Linear per-position map of the depth embedding into the RGB feature space.
/// Initialised to the identity.
class DepthProjectorImpl : public torch::nn::Module {
public:
    explicit DepthProjectorImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& depth_embedding);
    void reset_parameters();

    torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(DepthProjector);

/// Lateral 1x1 projections plus nearest-neighbour top-down fusion.
class FpnImpl : public torch::nn::Module {
public:
    FpnImpl(std::array<int64_t, 3> in_channels, int64_t width);
    std::array<torch::Tensor, 3> forward(const torch::Tensor& c2, const torch::Tensor& c3, const torch::Tensor& c4);
    void reset_parameters(at::Generator& gen);

    std::array<torch::nn::Conv2d, 3> lateral{nullptr, nullptr, nullptr};
};
TORCH_MODULE(Fpn);

/// 1x1 convolution to a single saliency logit. Zero-initialised.
class IntermediateHeadImpl : public torch::nn::Module {
public:
    explicit IntermediateHeadImpl(int64_t width);
    torch::Tensor forward(const torch::Tensor& embedding);  // logits
    void reset_parameters();

    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(IntermediateHead);

/// Frozen hierarchical encoder with a depth branch and trainable adapters.
///
/// Parallel topology (default):
///   F_D^i   = Stage_i(F_D^{i-1})   + DS(Adapter_D^i(F_D^{i-1}))                i = 1..3
///   F_RGB^1 = Stage_1(F_RGB^0)
///   F_RGB^i = Stage_i(F_RGB^{i-1}) + DS(Adapter_R^i(Cat(F_RGB^{i-1}, F_D^{i-1})))   i = 2..4
/// With `grad_bypass` the frozen stages run without autograd, so gradients only
/// travel through the adapter branches.
///
/// Sequential and low-rank topologies reuse the same backbone, projector, FPN
/// and heads; only the trainable adaptation differs.
class PamieImpl : public torch::nn::Module {
public:
    explicit PamieImpl(const Config& cfg);

    void reset_parameters(at::Generator& gen);

    /// F_D^0: depth replicated to three channels, patch-embedded by the frozen
    /// embedding, then projected.
    torch::Tensor depth_embedding(const torch::Tensor& depth);
    torch::Tensor depth_project(const torch::Tensor& depth_embedding);

    /// Parallel topology only; `index` in 1..3.
    torch::Tensor encode_depth_stage(int index, const torch::Tensor& depth_prev);
    /// Parallel topology only; `index` in 1..4. Stage 1 ignores `depth_prev`.
    torch::Tensor encode_rgb_stage(int index, const torch::Tensor& rgb_prev, const torch::Tensor& depth_prev);

    /// Full encoder on one batch of frame pairs: rgb (B,3,S,S), depth (B,1,S,S).
    EncoderOutput encode(const torch::Tensor& rgb, const torch::Tensor& depth);

    /// FPN over the untouched frozen RGB path (no adapters, no depth).
    std::array<torch::Tensor, 3> frozen_pyramid(const torch::Tensor& rgb);

    /// Head logits for one pyramid level, at that level's resolution.
    torch::Tensor intermediate_logits(int level, const torch::Tensor& embedding);

    /// Output of a frozen stage; honours the gradient bypass.
    torch::Tensor frozen_stage(int index, const torch::Tensor& x);

    bool bypass_active() const;
    const Config& config() const { return cfg_; }

    nn::Backbone backbone{nullptr};
    DepthProjector depth_projector{nullptr};
    std::map<int, Adapter> depth_adapters;       // parallel, 1..3
    std::map<int, Adapter> rgb_adapters;         // parallel, 2..4
    std::map<int, SequentialAdapter> seq_depth;  // sequential, 1..4
    std::map<int, SequentialAdapter> seq_rgb;    // sequential, 2..4
    Fpn fpn{nullptr};
    std::map<int, IntermediateHead> heads;       // supervised levels only

private:
    Config cfg_;
    std::array<StageSpec, 4> specs_;
};
TORCH_MODULE(Pamie);

}  // namespace nn
}  // namespace daq
