#include "daq/pamie.hpp"

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq::nn {

namespace F = torch::nn::functional;

namespace {

std::string dims(const torch::Tensor& t) {
    std::string s = "(";
    for (int64_t i = 0; i < t.dim(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.size(i));
    }
    return s + ")";
}

torch::Tensor upsample2x(const torch::Tensor& x, const torch::Tensor& like) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kNearest));
}

}  // namespace

DepthProjectorImpl::DepthProjectorImpl(int64_t channels) {
    proj = register_module("proj", torch::nn::Linear(channels, channels));
    reset_parameters();
}

torch::Tensor DepthProjectorImpl::forward(const torch::Tensor& depth_embedding) {
    const auto c = proj->weight.size(1);
    if (depth_embedding.dim() != 4 || depth_embedding.size(1) != c) {
        throw ConfigError("depth projector configured for " + std::to_string(c) + " channels, got input " +
                          dims(depth_embedding));
    }
    return channel_linear(proj, depth_embedding);
}

void DepthProjectorImpl::reset_parameters() {
    torch::NoGradGuard no_grad;
    proj->weight.copy_(torch::eye(proj->weight.size(0), proj->weight.options()));
    proj->bias.zero_();
}

FpnImpl::FpnImpl(std::array<int64_t, 3> in_channels, int64_t width) {
    for (size_t i = 0; i < 3; ++i) {
        lateral[i] = register_module("lateral" + std::to_string(i + 2),
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels[i], width, 1)));
    }
}

std::array<torch::Tensor, 3> FpnImpl::forward(const torch::Tensor& c2, const torch::Tensor& c3,
                                              const torch::Tensor& c4) {
    auto p4 = lateral[2]->forward(c4);
    auto p3 = lateral[1]->forward(c3) + upsample2x(p4, c3);
    auto p2 = lateral[0]->forward(c2) + upsample2x(p3, c2);
    return {p2, p3, p4};
}

void FpnImpl::reset_parameters(at::Generator& gen) {
    for (auto& l : lateral) init_conv(l, gen);
}

IntermediateHeadImpl::IntermediateHeadImpl(int64_t width) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, 1, 1)));
    reset_parameters();
}

torch::Tensor IntermediateHeadImpl::forward(const torch::Tensor& embedding) { return conv->forward(embedding); }

void IntermediateHeadImpl::reset_parameters() {
    torch::NoGradGuard no_grad;
    conv->weight.zero_();
    conv->bias.zero_();
}

PamieImpl::PamieImpl(const Config& cfg) : cfg_(cfg), specs_(stage_specs(cfg)) {
    cfg_.validate();
    const auto& ch = cfg_.stage_channels;
    const auto r = cfg_.adapter_rank;
    backbone = register_module("backbone", Backbone(cfg_));

    if (cfg_.use_depth && cfg_.use_depth_projector) {
        depth_projector = register_module("depth_projector", DepthProjector(ch[0]));
    }

    switch (cfg_.peft_topology) {
        case PeftTopology::Parallel:
            if (cfg_.use_depth) {
                for (int i = 1; i <= 3; ++i) {
                    const auto& s = specs_[i - 1];
                    depth_adapters.emplace(i, register_module("depth_adapter" + std::to_string(i),
                                                            Adapter(s.in_channels, r, s.out_channels, AdapterModality::Depth)));
                }
            }
            for (int i = 2; i <= 4; ++i) {
                const auto& s = specs_[i - 1];
                rgb_adapters.emplace(i, register_module("rgb_adapter" + std::to_string(i),
                                                      Adapter(2 * s.in_channels, r, s.out_channels, AdapterModality::RgbDpa)));
            }
            break;
        case PeftTopology::Sequential:
            if (cfg_.use_depth) {
                for (int i = 1; i <= 4; ++i) {
                    seq_depth.emplace(i, register_module("seq_depth_adapter" + std::to_string(i),
                                                       SequentialAdapter(specs_[i - 1].out_channels, 0, r)));
                }
            }
            for (int i = 2; i <= 4; ++i) {
                const auto c = specs_[i - 1].out_channels;
                seq_rgb.emplace(i, register_module("seq_rgb_adapter" + std::to_string(i), SequentialAdapter(c, c, r)));
            }
            break;
        case PeftTopology::Lora: {
            auto gen = make_generator(cfg_.seed ^ 0x10a5ULL);
            backbone->enable_low_rank(cfg_.lora_rank, cfg_.lora_alpha, gen);
            break;
        }
    }

    fpn = register_module("fpn", Fpn(std::array<int64_t, 3>{ch[1], ch[2], ch[3]}, cfg_.fpn_width));
    for (int level : cfg_.supervised_levels) {
        heads.emplace(level, register_module("head" + std::to_string(level), IntermediateHead(cfg_.fpn_width)));
    }
}

void PamieImpl::reset_parameters(at::Generator& gen) {
    backbone->reset_parameters(cfg_.backbone_seed);
    for (auto& attn : backbone->attention_layers()) {
        attn->q_proj->reset_low_rank(gen);
        attn->v_proj->reset_low_rank(gen);
    }
    if (depth_projector) depth_projector->reset_parameters();
    for (auto& [i, a] : depth_adapters) a->reset_parameters(gen);
    for (auto& [i, a] : rgb_adapters) a->reset_parameters(gen);
    for (auto& [i, a] : seq_depth) a->reset_parameters(gen);
    for (auto& [i, a] : seq_rgb) a->reset_parameters(gen);
    fpn->reset_parameters(gen);
    for (auto& [l, h] : heads) h->reset_parameters();
}

bool PamieImpl::bypass_active() const {
    return cfg_.peft_topology == PeftTopology::Parallel && cfg_.grad_bypass && cfg_.freeze_backbone &&
           torch::GradMode::is_enabled();
}

torch::Tensor PamieImpl::frozen_stage(int index, const torch::Tensor& x) {
    if (bypass_active()) {
        torch::NoGradGuard no_grad;
        return backbone->stage(index, x.detach());
    }
    return backbone->stage(index, x);
}

torch::Tensor PamieImpl::depth_project(const torch::Tensor& depth_embedding) {
    return depth_projector ? depth_projector->forward(depth_embedding) : depth_embedding;
}

torch::Tensor PamieImpl::depth_embedding(const torch::Tensor& depth) {
    if (depth.dim() != 4 || depth.size(1) != 1) throw ShapeError("depth must be (B,1,S,S), got " + dims(depth));
    torch::Tensor embedded;
    {
        // The patch embedding is frozen and its input carries no gradient.
        torch::NoGradGuard no_grad;
        embedded = backbone->embed(depth.expand({depth.size(0), 3, depth.size(2), depth.size(3)}).contiguous());
    }
    return depth_project(embedded);
}

torch::Tensor PamieImpl::encode_depth_stage(int index, const torch::Tensor& depth_prev) {
    if (cfg_.peft_topology != PeftTopology::Parallel) {
        throw ConfigError("encode_depth_stage is defined for the parallel topology");
    }
    auto it = depth_adapters.find(index);
    if (it == depth_adapters.end()) {
        throw ConfigError("no depth adapter at stage " + std::to_string(index) +
                          " (the depth branch feeds the RGB stream through stage 3)");
    }
    auto main = frozen_stage(index, depth_prev);
    auto side = it->second->forward(depth_prev);
    return main + resize_bilinear(side, main.size(2), main.size(3));
}

torch::Tensor PamieImpl::encode_rgb_stage(int index, const torch::Tensor& rgb_prev, const torch::Tensor& depth_prev) {
    if (cfg_.peft_topology != PeftTopology::Parallel) {
        throw ConfigError("encode_rgb_stage is defined for the parallel topology");
    }
    if (index == 1) return frozen_stage(1, rgb_prev);
    auto it = rgb_adapters.find(index);
    if (it == rgb_adapters.end()) throw ConfigError("stage index must be in 1..4, got " + std::to_string(index));
    if (!depth_prev.defined() || depth_prev.dim() != 4 || depth_prev.sizes().slice(2) != rgb_prev.sizes().slice(2)) {
        throw ShapeError("RGB and depth features are not spatially aligned at stage " + std::to_string(index) + ": " +
                         dims(rgb_prev) + " vs " + (depth_prev.defined() ? dims(depth_prev) : std::string("undefined")));
    }
    auto main = frozen_stage(index, rgb_prev);
    auto side = it->second->forward(torch::cat({rgb_prev, depth_prev}, 1));
    return main + resize_bilinear(side, main.size(2), main.size(3));
}

torch::Tensor PamieImpl::intermediate_logits(int level, const torch::Tensor& embedding) {
    auto it = heads.find(level);
    if (it == heads.end()) throw ConfigError("no intermediate head for level " + std::to_string(level));
    return it->second->forward(embedding);
}

EncoderOutput PamieImpl::encode(const torch::Tensor& rgb, const torch::Tensor& depth) {
    const auto s = cfg_.input_size;
    if (rgb.dim() != 4 || rgb.size(1) != 3 || rgb.size(2) != s || rgb.size(3) != s) {
        throw ShapeError("rgb must be (B,3," + std::to_string(s) + "," + std::to_string(s) + "), got " + dims(rgb));
    }
    if (depth.dim() != 4 || depth.size(1) != 1 || depth.size(2) != s || depth.size(3) != s ||
        depth.size(0) != rgb.size(0)) {
        throw ShapeError("depth must be aligned with rgb as (B,1,S,S), got " + dims(depth));
    }

    EncoderOutput out;
    torch::Tensor rgb_x;
    {
        torch::NoGradGuard no_grad;
        rgb_x = backbone->embed(rgb);
    }
    torch::Tensor depth_x = cfg_.use_depth ? depth_embedding(depth) : torch::Tensor();

    switch (cfg_.peft_topology) {
        case PeftTopology::Parallel:
            for (int i = 1; i <= 4; ++i) {
                auto guide = depth_x.defined() ? depth_x : torch::zeros_like(rgb_x);
                auto next_rgb = encode_rgb_stage(i, rgb_x, guide);
                if (cfg_.use_depth && i <= 3) depth_x = encode_depth_stage(i, depth_x);
                rgb_x = next_rgb;
                out.rgb_features[i - 1] = rgb_x;
            }
            break;
        case PeftTopology::Sequential:
            for (int i = 1; i <= 4; ++i) {
                auto h = backbone->stage(i, rgb_x);
                if (cfg_.use_depth) depth_x = seq_depth.at(i)->forward(backbone->stage(i, depth_x));
                if (i == 1) {
                    rgb_x = h;
                } else {
                    rgb_x = seq_rgb.at(i)->forward(h, cfg_.use_depth ? depth_x : torch::zeros_like(h));
                }
                out.rgb_features[i - 1] = rgb_x;
            }
            break;
        case PeftTopology::Lora:
            for (int i = 1; i <= 4; ++i) {
                auto h = backbone->stage(i, rgb_x);
                if (cfg_.use_depth) depth_x = backbone->stage(i, depth_x);
                rgb_x = (i == 1 || !cfg_.use_depth) ? h : h + depth_x;
                out.rgb_features[i - 1] = rgb_x;
            }
            break;
    }

    out.pyramid = fpn->forward(out.rgb_features[1], out.rgb_features[2], out.rgb_features[3]);
    for (auto& [level, head] : heads) {
        auto logits = head->forward(out.level(level));
        out.intermediate_logits[level] = logits;
        out.intermediate_preds[level] = torch::sigmoid(resize_bilinear(logits, s, s));
    }
    return out;
}

std::array<torch::Tensor, 3> PamieImpl::frozen_pyramid(const torch::Tensor& rgb) {
    auto feats = backbone->forward(rgb);
    return fpn->forward(feats[1], feats[2], feats[3]);
}

}  // namespace daq::nn
