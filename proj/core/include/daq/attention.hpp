#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace daq::nn {

/// Linear projection with an optional low-rank delta:
///   y = x W^T + b + (alpha / r) * (x A^T) B^T
/// `B` starts at zero, so enabling the delta does not change the output until
/// it has been trained. The base weight is never touched by the delta.
class ProjectionImpl : public torch::nn::Module {
public:
    ProjectionImpl(int64_t in_features, int64_t out_features, bool bias = true);

    torch::Tensor forward(const torch::Tensor& x);

    void enable_low_rank(int64_t rank, double alpha, at::Generator& gen);
    /// Re-draws A and zeroes B; no-op without a low-rank delta.
    void reset_low_rank(at::Generator& gen);
    bool has_low_rank() const { return rank_ > 0; }
    int64_t low_rank() const { return rank_; }
    double low_rank_scale() const { return scale_; }

    /// W + (alpha / r) B A, for single-path inference.
    torch::Tensor merged_weight() const;

    torch::nn::Linear base{nullptr};
    torch::Tensor lora_a;  // (r, in)
    torch::Tensor lora_b;  // (out, r)

private:
    int64_t rank_ = 0;
    double scale_ = 0.0;
};
TORCH_MODULE(Projection);

/// softmax(q k^T / sqrt(d)) v for (B, H, N, d) inputs. When `weights` is
/// non-null it receives the (B, H, Nq, Nk) attention matrix.
torch::Tensor scaled_dot_product(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                 torch::Tensor* weights = nullptr);

/// Multi-head attention with separate q/k/v/out projections.
class MultiHeadAttentionImpl : public torch::nn::Module {
public:
    MultiHeadAttentionImpl(int64_t dim, int64_t heads, int64_t kv_dim = -1);

    /// q: (B, Nq, dim), k/v: (B, Nk, kv_dim) -> (B, Nq, dim)
    torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                          torch::Tensor* weights = nullptr);

    void reset_parameters(at::Generator& gen);

    int64_t dim() const { return dim_; }
    int64_t heads() const { return heads_; }

    Projection q_proj{nullptr};
    Projection k_proj{nullptr};
    Projection v_proj{nullptr};
    Projection out_proj{nullptr};

private:
    int64_t dim_;
    int64_t heads_;
};
TORCH_MODULE(MultiHeadAttention);

}  // namespace daq::nn
