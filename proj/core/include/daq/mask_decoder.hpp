#pragma once

#include <torch/torch.h>

#include "daq/attention.hpp"
#include "daq/config.hpp"

namespace daq::nn {

/// One round of two-way attention between the decoder tokens and the image
/// tokens. Post-norm, as in SAM's decoder.
class TwoWayBlockImpl : public torch::nn::Module {
public:
    TwoWayBlockImpl(int64_t dim, int64_t heads, int64_t mlp_dim);

    /// Updates `tokens` (B, N, c) and `image` (B, L, c) in place of the caller's handles.
    void forward(torch::Tensor& tokens, torch::Tensor& image, const torch::Tensor& token_pe,
                 const torch::Tensor& image_pe);
    void reset_parameters(at::Generator& gen);

    MultiHeadAttention token_to_image{nullptr};
    torch::nn::LayerNorm norm1{nullptr};
    MultiHeadAttention self_attn{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    torch::nn::Linear mlp_in{nullptr};
    torch::nn::Linear mlp_out{nullptr};
    torch::nn::LayerNorm norm3{nullptr};
    MultiHeadAttention image_to_token{nullptr};
    torch::nn::LayerNorm norm4{nullptr};
};
TORCH_MODULE(TwoWayBlock);

/// Output of the decoder for one frame.
struct DecoderOutput {
    torch::Tensor logits;       // (B, 1, S, S)
    torch::Tensor prediction;   // sigmoid(logits)
    torch::Tensor mask_token;   // (B, c) after the transformer
};

/// Prompt-free mask decoder. The learnable embeddings E_L take the place of the
/// sparse prompt tokens; a single mask token is decoded against the
/// highest-level embedding and upsampled with skips from the two finer levels.
class MaskDecoderImpl : public torch::nn::Module {
public:
    explicit MaskDecoderImpl(const Config& cfg);
    void reset_parameters(at::Generator& gen);

    /// image (B, c, h, w) is E_I^4 at the decoder width; e3/e2 are the finer
    /// pyramid levels at the FPN width; embeddings is E_L (B, N_v, c).
    DecoderOutput forward(const torch::Tensor& image, const torch::Tensor& e3, const torch::Tensor& e2,
                          const torch::Tensor& embeddings);

    torch::Tensor mask_token;  // (1, c)
    torch::nn::Linear dense_proj{nullptr};  // dense / both modes
    torch::nn::ModuleList blocks{nullptr};
    MultiHeadAttention final_attn{nullptr};
    torch::nn::LayerNorm final_norm{nullptr};
    torch::nn::ConvTranspose2d up1{nullptr};
    torch::nn::Conv2d skip3{nullptr};
    torch::nn::ConvTranspose2d up2{nullptr};
    torch::nn::Conv2d skip2{nullptr};
    torch::nn::Linear hyper1{nullptr};
    torch::nn::Linear hyper2{nullptr};
    torch::nn::Linear hyper3{nullptr};

private:
    Config cfg_;
};
TORCH_MODULE(MaskDecoder);

}  // namespace daq::nn
