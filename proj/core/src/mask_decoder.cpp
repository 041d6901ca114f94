#include "daq/mask_decoder.hpp"

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq::nn {

TwoWayBlockImpl::TwoWayBlockImpl(int64_t dim, int64_t heads, int64_t mlp_dim) {
    auto ln = [&] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})); };
    token_to_image = register_module("token_to_image", MultiHeadAttention(dim, heads));
    norm1 = register_module("norm1", ln());
    self_attn = register_module("self_attn", MultiHeadAttention(dim, heads));
    norm2 = register_module("norm2", ln());
    mlp_in = register_module("mlp_in", torch::nn::Linear(dim, mlp_dim));
    mlp_out = register_module("mlp_out", torch::nn::Linear(mlp_dim, dim));
    norm3 = register_module("norm3", ln());
    image_to_token = register_module("image_to_token", MultiHeadAttention(dim, heads));
    norm4 = register_module("norm4", ln());
}

void TwoWayBlockImpl::forward(torch::Tensor& tokens, torch::Tensor& image, const torch::Tensor& token_pe,
                              const torch::Tensor& image_pe) {
    auto keys = image + image_pe;
    tokens = norm1->forward(tokens + token_to_image->forward(tokens + token_pe, keys, image));
    auto q = tokens + token_pe;
    tokens = norm2->forward(tokens + self_attn->forward(q, q, tokens));
    tokens = norm3->forward(tokens + mlp_out->forward(torch::gelu(mlp_in->forward(tokens))));
    image = norm4->forward(image + image_to_token->forward(image + image_pe, tokens + token_pe, tokens));
}

void TwoWayBlockImpl::reset_parameters(at::Generator& gen) {
    token_to_image->reset_parameters(gen);
    self_attn->reset_parameters(gen);
    init_linear(mlp_in, gen);
    init_linear(mlp_out, gen);
    image_to_token->reset_parameters(gen);
}

MaskDecoderImpl::MaskDecoderImpl(const Config& cfg) : cfg_(cfg) {
    const auto c = cfg_.query_hidden_dim;
    const auto heads = cfg_.attention_heads;
    mask_token = register_parameter("mask_token", torch::zeros({1, c}));
    if (cfg_.embedding_mode != EmbeddingMode::Sparse) {
        dense_proj = register_module("dense_proj", torch::nn::Linear(c, c));
    }
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < cfg_.decoder_rounds; ++i) blocks->push_back(TwoWayBlock(c, heads, 4 * c));
    final_attn = register_module("final_attn", MultiHeadAttention(c, heads));
    final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    up1 = register_module("up1", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(c, c / 2, 2).stride(2)));
    skip3 = register_module("skip3", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.fpn_width, c / 2, 1)));
    up2 = register_module("up2",
                          torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(c / 2, c / 4, 2).stride(2)));
    skip2 = register_module("skip2", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.fpn_width, c / 4, 1)));
    hyper1 = register_module("hyper1", torch::nn::Linear(c, c));
    hyper2 = register_module("hyper2", torch::nn::Linear(c, c));
    hyper3 = register_module("hyper3", torch::nn::Linear(c, c / 4));
}

void MaskDecoderImpl::reset_parameters(at::Generator& gen) {
    {
        torch::NoGradGuard no_grad;
        mask_token.normal_(0.0, 1.0, gen);
    }
    if (dense_proj) init_linear(dense_proj, gen);
    for (const auto& b : *blocks) b->as<TwoWayBlock>()->reset_parameters(gen);
    final_attn->reset_parameters(gen);
    init_conv(up1, gen);
    init_conv(skip3, gen);
    init_conv(up2, gen);
    init_conv(skip2, gen);
    init_linear(hyper1, gen);
    init_linear(hyper2, gen);
    // Zero last layer: the untrained decoder predicts 0.5 everywhere.
    zero_linear(hyper3);
}

DecoderOutput MaskDecoderImpl::forward(const torch::Tensor& image, const torch::Tensor& e3, const torch::Tensor& e2,
                                       const torch::Tensor& embeddings) {
    const auto c = cfg_.query_hidden_dim;
    if (image.dim() != 4 || image.size(1) != c) throw ShapeError("decoder image embedding must have c channels");
    if (embeddings.dim() != 3 || embeddings.size(2) != c || embeddings.size(0) != image.size(0)) {
        throw ShapeError("learnable embeddings must be (B, N_v, c)");
    }
    const auto b = image.size(0);
    const auto h = image.size(2);
    const auto w = image.size(3);
    if (e3.size(2) != 2 * h || e2.size(2) != 4 * h) throw ShapeError("pyramid levels are not 2x/4x the top level");

    auto src = image;
    if (dense_proj) {
        auto dense = dense_proj->forward(embeddings.mean(1));  // (B, c)
        src = src + dense.unsqueeze(-1).unsqueeze(-1);
    }

    auto tokens = mask_token.unsqueeze(0).expand({b, 1, c});
    if (cfg_.embedding_mode != EmbeddingMode::Dense) tokens = torch::cat({tokens, embeddings}, 1);
    const auto token_pe = tokens;
    const auto image_pe = sinusoidal_position_encoding(h, w, c, image.options()).unsqueeze(0).expand({b, h * w, c});

    auto img = to_tokens(src);
    for (const auto& blk : *blocks) blk->as<TwoWayBlock>()->forward(tokens, img, token_pe, image_pe);
    tokens = final_norm->forward(tokens + final_attn->forward(tokens + token_pe, img + image_pe, img));

    auto up = from_tokens(img, h, w);
    up = torch::gelu(up1->forward(up) + skip3->forward(e3));
    up = torch::gelu(up2->forward(up) + skip2->forward(e2));

    auto mask = tokens.select(1, 0);
    auto hyper = hyper3->forward(torch::gelu(hyper2->forward(torch::gelu(hyper1->forward(mask)))));  // (B, c/4)
    auto low = torch::einsum("bc,bchw->bhw", {hyper, up}).unsqueeze(1);

    DecoderOutput out;
    out.logits = resize_bilinear(low, cfg_.input_size, cfg_.input_size);
    out.prediction = torch::sigmoid(out.logits);
    out.mask_token = mask;
    return out;
}

}  // namespace daq::nn
