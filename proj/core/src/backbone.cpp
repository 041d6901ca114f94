#include "daq/backbone.hpp"

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq {

std::array<StageSpec, 4> stage_specs(const Config& cfg) {
    std::array<StageSpec, 4> specs{};
    for (int i = 0; i < 4; ++i) {
        auto& s = specs[i];
        s.index = i + 1;
        s.in_channels = i == 0 ? cfg.stage_channels[0] : cfg.stage_channels[i - 1];
        s.out_channels = cfg.stage_channels[i];
        s.spatial_stride = int64_t{2} << i;
        s.block_count = cfg.stage_blocks[i];
        s.heads = cfg.stage_heads[i];
    }
    return specs;
}

namespace nn {

PatchEmbedImpl::PatchEmbedImpl(int64_t out_channels) {
    proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, out_channels, 3).stride(2).padding(1)));
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != 3) {
        throw ShapeError("patch embedding expects (B,3,H,W), got " + std::to_string(image.dim()) + "-d input");
    }
    return proj->forward(image);
}

void PatchEmbedImpl::reset_parameters(at::Generator& gen) { init_conv(proj, gen); }

EncoderBlockImpl::EncoderBlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", MultiHeadAttention(dim, heads));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1 = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
    fc2 = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
}

torch::Tensor EncoderBlockImpl::forward(const torch::Tensor& tokens) {
    auto h = norm1->forward(tokens);
    auto x = tokens + attn->forward(h, h, h);
    return x + fc2->forward(torch::gelu(fc1->forward(norm2->forward(x))));
}

void EncoderBlockImpl::reset_parameters(at::Generator& gen) {
    attn->reset_parameters(gen);
    init_linear(fc1, gen);
    init_linear(fc2, gen);
}

EncoderStageImpl::EncoderStageImpl(const StageSpec& spec) : spec_(spec) {
    if (spec.index > 1) {
        transition_norm =
            register_module("transition_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({spec.in_channels})));
        transition_proj = register_module("transition_proj", torch::nn::Linear(spec.in_channels, spec.out_channels));
    }
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t b = 0; b < spec.block_count; ++b) blocks->push_back(EncoderBlock(spec.out_channels, spec.heads));
}

torch::Tensor EncoderStageImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
        throw ShapeError("stage " + std::to_string(spec_.index) + " expects " + std::to_string(spec_.in_channels) +
                         " input channels, got " + (x.dim() == 4 ? std::to_string(x.size(1)) : std::string("non-4d")));
    }
    auto h = x;
    if (spec_.index > 1) {
        auto t = transition_proj->forward(transition_norm->forward(h.permute({0, 2, 3, 1})));
        h = torch::avg_pool2d(t.permute({0, 3, 1, 2}), {2, 2});
    }
    const auto height = h.size(2);
    const auto width = h.size(3);
    auto tokens = to_tokens(h);
    for (const auto& block : *blocks) tokens = block->as<EncoderBlock>()->forward(tokens);
    // canonical NCHW layout so downstream convs see identical strides on every path
    return from_tokens(tokens, height, width).contiguous();
}

void EncoderStageImpl::reset_parameters(at::Generator& gen) {
    if (transition_proj) init_linear(transition_proj, gen);
    for (const auto& block : *blocks) block->as<EncoderBlock>()->reset_parameters(gen);
}

BackboneImpl::BackboneImpl(const Config& cfg) {
    auto specs = stage_specs(cfg);
    patch_embed = register_module("patch_embed", PatchEmbed(cfg.stage_channels[0]));
    for (const auto& s : specs) {
        stages.push_back(register_module("stage" + std::to_string(s.index), EncoderStage(s)));
    }
}

torch::Tensor BackboneImpl::embed(const torch::Tensor& image) { return patch_embed->forward(image); }

torch::Tensor BackboneImpl::stage(int index, const torch::Tensor& x) {
    if (index < 1 || index > 4) throw ConfigError("stage index must be in 1..4, got " + std::to_string(index));
    return stages[index - 1]->forward(x);
}

std::array<torch::Tensor, 4> BackboneImpl::forward(const torch::Tensor& image) {
    std::array<torch::Tensor, 4> out;
    auto x = embed(image);
    for (int i = 1; i <= 4; ++i) {
        x = stage(i, x);
        out[i - 1] = x;
    }
    return out;
}

void BackboneImpl::reset_parameters(uint64_t seed) {
    auto gen = make_generator(seed);
    patch_embed->reset_parameters(gen);
    for (auto& s : stages) s->reset_parameters(gen);
}

void BackboneImpl::enable_low_rank(int64_t rank, double alpha, at::Generator& gen) {
    for (auto& attn : attention_layers()) {
        attn->q_proj->enable_low_rank(rank, alpha, gen);
        attn->v_proj->enable_low_rank(rank, alpha, gen);
    }
}

std::vector<MultiHeadAttention> BackboneImpl::attention_layers() const {
    std::vector<MultiHeadAttention> out;
    for (const auto& s : stages) {
        for (const auto& block : *s->blocks) out.push_back(block->as<EncoderBlock>()->attn);
    }
    return out;
}

}  // namespace nn
}  // namespace daq
