#pragma once

#include <torch/torch.h>

#include <deque>

#include "daq/attention.hpp"
#include "daq/config.hpp"

namespace daq {

/// Video-level queries carried from frame t to t+1 along one clip.
struct VideoQueryState {
    torch::Tensor queries;  // Q_{v,t}: (B, N_v, c)
    int64_t t = 0;
    /// Stored memory features, only used by the memory-bank ablation.
    std::deque<torch::Tensor> bank;
};

/// softmax(Q F^T / sqrt(c)) F over the token axis of `features`.
/// queries (B, N, c), features (B, L, c) -> (B, N, c).
torch::Tensor attention_pool(const torch::Tensor& queries, const torch::Tensor& features,
                             torch::Tensor* weights = nullptr);

namespace nn {

/// Cross-attention -> self-attention -> FFN on the video queries. Returns the
/// FFN output (the update), not the updated queries.
class QueryUpdateBlockImpl : public torch::nn::Module {
public:
    QueryUpdateBlockImpl(int64_t dim, int64_t heads);
    torch::Tensor forward(const torch::Tensor& queries, const torch::Tensor& memory,
                          torch::Tensor* cross_weights = nullptr, torch::Tensor* self_weights = nullptr);
    void reset_parameters(at::Generator& gen);

    torch::nn::LayerNorm norm_cross{nullptr};
    MultiHeadAttention cross_attn{nullptr};
    torch::nn::LayerNorm norm_self{nullptr};
    MultiHeadAttention self_attn{nullptr};
    torch::nn::LayerNorm norm_ffn{nullptr};
    torch::nn::Linear ffn_in{nullptr};
    torch::nn::Linear ffn_out{nullptr};
};
TORCH_MODULE(QueryUpdateBlock);

/// Two 3x3 convolutions over Cat(E_I^4, downsampled prediction), then a
/// per-position linear projection to the query width.
class MemoryEncoderImpl : public torch::nn::Module {
public:
    MemoryEncoderImpl(int64_t in_channels, int64_t dim);
    /// embedding (B, C', h, w), prediction (B, 1, H, W) -> (B, h*w, dim)
    torch::Tensor forward(const torch::Tensor& embedding, const torch::Tensor& prediction);
    void reset_parameters(at::Generator& gen);

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
    torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(MemoryEncoder);

/// Query-driven temporal memory.
class QtmImpl : public torch::nn::Module {
public:
    explicit QtmImpl(const Config& cfg);
    void reset_parameters(at::Generator& gen);

    /// E_I^4 (B, fpn_width, h, w) projected to the query width c.
    torch::Tensor project_image(const torch::Tensor& e4);

    /// Q'_f = query_embed(Q_f), (N_f, c).
    torch::Tensor projected_frame_queries();
    /// Q_{v,0} = query_embed(Q_v) broadcast to a batch.
    VideoQueryState initial_state(int64_t batch);

    /// E_f = Linear(attention_pool(Q'_f, E_I^4)): (B, N_f, c).
    torch::Tensor pool_frame_queries(const torch::Tensor& frame_queries, const torch::Tensor& image,
                                     torch::Tensor* weights = nullptr);
    /// Q~_v = CA(Q_v, E_f) + Q_v.
    torch::Tensor enhance_video_queries(const torch::Tensor& video_queries, const torch::Tensor& frame_embeddings,
                                        torch::Tensor* weights = nullptr);
    /// E_L = Q~_v * GAP(E_I^4), shape (B, N_v, c).
    torch::Tensor form_learnable_embeddings(const torch::Tensor& enhanced_queries, const torch::Tensor& image);
    /// F_m = Linear(ME(E_I^4, P)), shape (B, h*w, c).
    torch::Tensor encode_memory(const torch::Tensor& e4, const torch::Tensor& prediction);

    /// Q_{v,t+1} = Q_{v,t} + FFN(SA(CA(Q_{v,t}, F_m))).
    VideoQueryState update_video_queries(const VideoQueryState& state, const torch::Tensor& memory);
    /// Dispatches on the configured strategy (addition, multiply, none, sam2_bank).
    VideoQueryState update(const VideoQueryState& state, const torch::Tensor& memory);
    VideoQueryState update(UpdateStrategy strategy, const VideoQueryState& state, const torch::Tensor& memory);

    /// Memory-bank ablation: image tokens cross-attend to the stored memories.
    /// Returns the input unchanged when the bank is empty or the strategy is not sam2_bank.
    torch::Tensor condition_on_bank(const torch::Tensor& image, const VideoQueryState& state);

    const Config& config() const { return cfg_; }
    int64_t dim() const { return cfg_.query_hidden_dim; }

    torch::Tensor frame_queries;  // (N_f, c)
    torch::Tensor video_queries;  // (N_v, c)
    torch::nn::Linear query_embed{nullptr};
    torch::nn::Conv2d image_proj{nullptr};  // only when fpn_width != c
    torch::nn::Linear pool_proj{nullptr};
    torch::nn::LayerNorm enhance_norm{nullptr};
    MultiHeadAttention enhance_attn{nullptr};
    MemoryEncoder memory_encoder{nullptr};
    QueryUpdateBlock update_block{nullptr};
    torch::nn::LayerNorm bank_norm{nullptr};      // sam2_bank only
    MultiHeadAttention bank_attn{nullptr};        // sam2_bank only

private:
    Config cfg_;
};
TORCH_MODULE(Qtm);

}  // namespace nn
}  // namespace daq
