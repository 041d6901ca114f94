#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "daq/attention.hpp"
#include "daq/config.hpp"

namespace daq {

/// Geometry of one encoder stage. Stride is cumulative relative to the input
/// image and includes the patch embedding for stage 1.
struct StageSpec {
    int index = 1;
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t spatial_stride = 1;
    int64_t block_count = 1;
    int64_t heads = 1;
};

std::array<StageSpec, 4> stage_specs(const Config& cfg);

namespace nn {

/// 3x3 stride-2 convolution from an RGB-like 3-channel image to stage-1 width.
class PatchEmbedImpl : public torch::nn::Module {
public:
    explicit PatchEmbedImpl(int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& image);
    void reset_parameters(at::Generator& gen);

    torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(PatchEmbed);

/// Pre-norm transformer block over all tokens of a map (global attention).
class EncoderBlockImpl : public torch::nn::Module {
public:
    EncoderBlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio = 4);
    torch::Tensor forward(const torch::Tensor& tokens);
    void reset_parameters(at::Generator& gen);

    torch::nn::LayerNorm norm1{nullptr};
    MultiHeadAttention attn{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(EncoderBlock);

/// One hierarchical stage. Stages after the first begin with a transition
/// (LayerNorm + channel projection + 2x2 average pooling).
class EncoderStageImpl : public torch::nn::Module {
public:
    explicit EncoderStageImpl(const StageSpec& spec);
    torch::Tensor forward(const torch::Tensor& x);  // (B, Cin, H, W) -> (B, Cout, H', W')
    void reset_parameters(at::Generator& gen);

    const StageSpec& spec() const { return spec_; }

    torch::nn::LayerNorm transition_norm{nullptr};
    torch::nn::Linear transition_proj{nullptr};
    torch::nn::ModuleList blocks{nullptr};

private:
    StageSpec spec_;
};
TORCH_MODULE(EncoderStage);

/// Randomly initialised stand-in for the frozen hierarchical image encoder:
/// same 4-stage / stride-doubling topology, global attention, no pretrained weights.
class BackboneImpl : public torch::nn::Module {
public:
    explicit BackboneImpl(const Config& cfg);

    torch::Tensor embed(const torch::Tensor& image);  // (B,3,S,S) -> (B,C1,S/2,S/2)
    torch::Tensor stage(int index, const torch::Tensor& x);  // index in 1..4
    /// All four stage outputs of the plain frozen path.
    std::array<torch::Tensor, 4> forward(const torch::Tensor& image);

    void reset_parameters(uint64_t seed);

    /// Injects low-rank deltas on the query and value projections of every
    /// attention layer. Only the deltas are trainable.
    void enable_low_rank(int64_t rank, double alpha, at::Generator& gen);

    /// Every attention layer in the backbone.
    std::vector<MultiHeadAttention> attention_layers() const;

    PatchEmbed patch_embed{nullptr};
    std::vector<EncoderStage> stages;
};
TORCH_MODULE(Backbone);

}  // namespace nn
}  // namespace daq
