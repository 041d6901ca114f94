#include "daq/qtm.hpp"

#include <cmath>

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq {

torch::Tensor attention_pool(const torch::Tensor& queries, const torch::Tensor& features, torch::Tensor* weights) {
    if (queries.size(-1) != features.size(-1)) {
        throw ShapeError("attention_pool: query width " + std::to_string(queries.size(-1)) +
                         " != feature width " + std::to_string(features.size(-1)));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.size(-1)));
    auto attn = torch::softmax(torch::matmul(queries, features.transpose(-2, -1)) * scale, -1);
    if (weights) *weights = attn;
    return torch::matmul(attn, features);
}

namespace nn {

namespace {

bool uses_update_block(UpdateStrategy s) { return s == UpdateStrategy::Addition || s == UpdateStrategy::Multiply; }
bool uses_memory(UpdateStrategy s) { return s != UpdateStrategy::None; }

}  // namespace

QueryUpdateBlockImpl::QueryUpdateBlockImpl(int64_t dim, int64_t heads) {
    norm_cross = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    cross_attn = register_module("cross_attn", MultiHeadAttention(dim, heads));
    norm_self = register_module("norm_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    self_attn = register_module("self_attn", MultiHeadAttention(dim, heads));
    norm_ffn = register_module("norm_ffn", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    ffn_in = register_module("ffn_in", torch::nn::Linear(dim, 4 * dim));
    ffn_out = register_module("ffn_out", torch::nn::Linear(4 * dim, dim));
}

torch::Tensor QueryUpdateBlockImpl::forward(const torch::Tensor& queries, const torch::Tensor& memory,
                                            torch::Tensor* cross_weights, torch::Tensor* self_weights) {
    auto a = cross_attn->forward(norm_cross->forward(queries), memory, memory, cross_weights);
    auto n = norm_self->forward(a);
    auto b = a + self_attn->forward(n, n, n, self_weights);
    return ffn_out->forward(torch::gelu(ffn_in->forward(norm_ffn->forward(b))));
}

void QueryUpdateBlockImpl::reset_parameters(at::Generator& gen) {
    cross_attn->reset_parameters(gen);
    self_attn->reset_parameters(gen);
    init_linear(ffn_in, gen);
    init_linear(ffn_out, gen, 0.1);
}

MemoryEncoderImpl::MemoryEncoderImpl(int64_t in_channels, int64_t dim) {
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels + 1, dim, 3).padding(1)));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 3).padding(1)));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
}

torch::Tensor MemoryEncoderImpl::forward(const torch::Tensor& embedding, const torch::Tensor& prediction) {
    if (prediction.dim() != 4 || prediction.size(1) != 1) throw ShapeError("prediction must be (B,1,H,W)");
    const auto h = embedding.size(2);
    const auto w = embedding.size(3);
    auto p = resize_area(prediction, h, w);
    auto x = conv2->forward(torch::gelu(conv1->forward(torch::cat({embedding, p}, 1))));
    return proj->forward(to_tokens(x));
}

void MemoryEncoderImpl::reset_parameters(at::Generator& gen) {
    init_conv(conv1, gen);
    init_conv(conv2, gen);
    init_linear(proj, gen);
}

QtmImpl::QtmImpl(const Config& cfg) : cfg_(cfg) {
    const auto c = cfg_.query_hidden_dim;
    const auto heads = cfg_.attention_heads;
    frame_queries = register_parameter("frame_queries", torch::zeros({cfg_.num_frame_queries, c}));
    video_queries = register_parameter("video_queries", torch::zeros({cfg_.num_video_queries, c}));
    query_embed = register_module("query_embed", torch::nn::Linear(c, c));
    if (cfg_.fpn_width != c) {
        image_proj = register_module("image_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.fpn_width, c, 1)));
    }
    pool_proj = register_module("pool_proj", torch::nn::Linear(c, c));
    enhance_norm = register_module("enhance_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    enhance_attn = register_module("enhance_attn", MultiHeadAttention(c, heads));
    if (uses_memory(cfg_.update_strategy)) {
        memory_encoder = register_module("memory_encoder", MemoryEncoder(cfg_.fpn_width, c));
    }
    if (uses_update_block(cfg_.update_strategy)) {
        update_block = register_module("update_block", QueryUpdateBlock(c, heads));
    }
    if (cfg_.update_strategy == UpdateStrategy::Sam2Bank) {
        bank_norm = register_module("bank_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
        bank_attn = register_module("bank_attn", MultiHeadAttention(c, heads));
    }
}

void QtmImpl::reset_parameters(at::Generator& gen) {
    {
        torch::NoGradGuard no_grad;
        frame_queries.normal_(0.0, 1.0, gen);
        video_queries.normal_(0.0, 1.0, gen);
    }
    init_linear(query_embed, gen);
    if (image_proj) init_conv(image_proj, gen);
    init_linear(pool_proj, gen);
    enhance_attn->reset_parameters(gen);
    if (memory_encoder) memory_encoder->reset_parameters(gen);
    if (update_block) update_block->reset_parameters(gen);
    if (bank_attn) bank_attn->reset_parameters(gen);
}

torch::Tensor QtmImpl::project_image(const torch::Tensor& e4) {
    if (e4.dim() != 4 || e4.size(1) != cfg_.fpn_width) {
        throw ShapeError("QTM expects E_I^4 with " + std::to_string(cfg_.fpn_width) + " channels");
    }
    return image_proj ? image_proj->forward(e4) : e4;
}

torch::Tensor QtmImpl::projected_frame_queries() { return query_embed->forward(frame_queries); }

VideoQueryState QtmImpl::initial_state(int64_t batch) {
    VideoQueryState s;
    auto q = query_embed->forward(video_queries);
    s.queries = q.unsqueeze(0).expand({batch, q.size(0), q.size(1)});
    s.t = 0;
    return s;
}

torch::Tensor QtmImpl::pool_frame_queries(const torch::Tensor& fq, const torch::Tensor& image, torch::Tensor* weights) {
    if (image.dim() != 4 || image.size(1) != dim()) throw ShapeError("pool_frame_queries expects a (B,c,h,w) map");
    auto tokens = to_tokens(image);
    auto q = fq.dim() == 2 ? fq.unsqueeze(0).expand({tokens.size(0), fq.size(0), fq.size(1)}) : fq;
    return pool_proj->forward(attention_pool(q, tokens, weights));
}

torch::Tensor QtmImpl::enhance_video_queries(const torch::Tensor& vq, const torch::Tensor& fe, torch::Tensor* weights) {
    return enhance_attn->forward(enhance_norm->forward(vq), fe, fe, weights) + vq;
}

torch::Tensor QtmImpl::form_learnable_embeddings(const torch::Tensor& enhanced, const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != enhanced.size(-1)) {
        throw ShapeError("form_learnable_embeddings: image channels must equal query width");
    }
    auto g = image.mean({2, 3});  // (B, c)
    return enhanced * g.unsqueeze(1);
}

torch::Tensor QtmImpl::encode_memory(const torch::Tensor& e4, const torch::Tensor& prediction) {
    if (!memory_encoder) throw ConfigError("update_strategy=none has no memory encoder");
    return memory_encoder->forward(e4, prediction);
}

VideoQueryState QtmImpl::update_video_queries(const VideoQueryState& state, const torch::Tensor& memory) {
    return update(UpdateStrategy::Addition, state, memory);
}

VideoQueryState QtmImpl::update(const VideoQueryState& state, const torch::Tensor& memory) {
    return update(cfg_.update_strategy, state, memory);
}

VideoQueryState QtmImpl::update(UpdateStrategy strategy, const VideoQueryState& state, const torch::Tensor& memory) {
    VideoQueryState next = state;
    next.t = state.t + 1;
    switch (strategy) {
        case UpdateStrategy::Addition:
        case UpdateStrategy::Multiply: {
            if (!update_block) {
                throw ConfigError("update strategy " + to_string(strategy) + " needs the update block, which the '" +
                                  to_string(cfg_.update_strategy) + "' configuration does not build");
            }
            auto delta = update_block->forward(state.queries, memory);
            next.queries = strategy == UpdateStrategy::Addition ? state.queries + delta : state.queries * delta;
            break;
        }
        case UpdateStrategy::None:
            break;
        case UpdateStrategy::Sam2Bank:
            next.bank.push_back(memory);
            while (static_cast<int64_t>(next.bank.size()) > cfg_.memory_bank_size) next.bank.pop_front();
            break;
    }
    return next;
}

torch::Tensor QtmImpl::condition_on_bank(const torch::Tensor& image, const VideoQueryState& state) {
    if (!bank_attn || state.bank.empty()) return image;
    const auto h = image.size(2);
    const auto w = image.size(3);
    auto tokens = to_tokens(image);
    auto memory = torch::cat(std::vector<torch::Tensor>(state.bank.begin(), state.bank.end()), 1);
    auto out = tokens + bank_attn->forward(bank_norm->forward(tokens), memory, memory);
    return from_tokens(out, h, w);
}

}  // namespace nn
}  // namespace daq
