#include "daq/attention.hpp"

#include <cmath>

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq::nn {

ProjectionImpl::ProjectionImpl(int64_t in_features, int64_t out_features, bool bias) {
    base = register_module("base", torch::nn::Linear(torch::nn::LinearOptions(in_features, out_features).bias(bias)));
}

torch::Tensor ProjectionImpl::forward(const torch::Tensor& x) {
    auto y = base->forward(x);
    if (rank_ > 0) {
        y = y + scale_ * torch::matmul(torch::matmul(x, lora_a.t()), lora_b.t());
    }
    return y;
}

void ProjectionImpl::enable_low_rank(int64_t rank, double alpha, at::Generator& gen) {
    if (rank <= 0) throw ConfigError("low-rank delta needs rank >= 1");
    const auto in = base->weight.size(1);
    const auto out = base->weight.size(0);
    auto opts = base->weight.options().requires_grad(false);
    rank_ = rank;
    scale_ = alpha / static_cast<double>(rank);
    lora_a = register_parameter("lora_a", torch::empty({rank, in}, opts));
    lora_b = register_parameter("lora_b", torch::zeros({out, rank}, opts));
    reset_low_rank(gen);
}

void ProjectionImpl::reset_low_rank(at::Generator& gen) {
    if (rank_ == 0) return;
    torch::NoGradGuard no_grad;
    lora_a.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(lora_a.size(1))), gen);
    lora_b.zero_();
}

torch::Tensor ProjectionImpl::merged_weight() const {
    auto w = base->weight;
    if (rank_ > 0) w = w + scale_ * torch::matmul(lora_b, lora_a);
    return w;
}

torch::Tensor scaled_dot_product(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                 torch::Tensor* weights) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) * scale, -1);
    if (weights) *weights = attn;
    return torch::matmul(attn, v);
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t dim, int64_t heads, int64_t kv_dim)
    : dim_(dim), heads_(heads) {
    if (kv_dim < 0) kv_dim = dim;
    if (heads < 1 || dim % heads != 0) {
        throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide dim " + std::to_string(dim));
    }
    q_proj = register_module("q", Projection(dim, dim));
    k_proj = register_module("k", Projection(kv_dim, dim));
    v_proj = register_module("v", Projection(kv_dim, dim));
    out_proj = register_module("out", Projection(dim, dim));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                              torch::Tensor* weights) {
    const auto b = q.size(0);
    const auto nq = q.size(1);
    const auto nk = k.size(1);
    const auto hd = dim_ / heads_;
    auto split = [&](const torch::Tensor& t, int64_t n) { return t.reshape({b, n, heads_, hd}).transpose(1, 2); };
    auto qh = split(q_proj->forward(q), nq);
    auto kh = split(k_proj->forward(k), nk);
    auto vh = split(v_proj->forward(v), nk);
    auto o = scaled_dot_product(qh, kh, vh, weights);
    return out_proj->forward(o.transpose(1, 2).reshape({b, nq, dim_}));
}

void MultiHeadAttentionImpl::reset_parameters(at::Generator& gen) {
    for (auto* p : {&q_proj, &k_proj, &v_proj, &out_proj}) init_linear((*p)->base, gen);
}

}  // namespace daq::nn
