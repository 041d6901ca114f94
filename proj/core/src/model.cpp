#include "daq/model.hpp"

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq {

bool is_frozen_name(const std::string& name) {
    return name.rfind("encoder.backbone.", 0) == 0 && name.find("lora_") == std::string::npos;
}

namespace nn {

SamDaqImpl::SamDaqImpl(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    encoder = register_module("encoder", Pamie(cfg_));
    qtm = register_module("qtm", Qtm(cfg_));
    decoder = register_module("decoder", MaskDecoder(cfg_));
}

void SamDaqImpl::reset_parameters() {
    auto gen = make_generator(cfg_.seed);
    encoder->reset_parameters(gen);
    qtm->reset_parameters(gen);
    decoder->reset_parameters(gen);
}

void SamDaqImpl::apply_freeze() {
    for (auto& p : named_parameters()) {
        const bool frozen = cfg_.freeze_backbone && is_frozen_name(p.key());
        p.value().set_requires_grad(!frozen);
    }
}

torch::Dtype SamDaqImpl::dtype() const {
    return cfg_.precision == Precision::Float64 ? torch::kFloat64 : torch::kFloat32;
}

VideoQueryState SamDaqImpl::initial_state(int64_t batch) { return qtm->initial_state(batch); }

FrameOutput SamDaqImpl::step(const torch::Tensor& rgb, const torch::Tensor& depth, VideoQueryState& state) {
    auto enc = encoder->encode(rgb, depth);
    const auto& e4 = enc.level(4);

    auto image = qtm->project_image(e4);
    image = qtm->condition_on_bank(image, state);

    auto frame_emb = qtm->pool_frame_queries(qtm->projected_frame_queries(), image);
    auto enhanced = qtm->enhance_video_queries(state.queries, frame_emb);
    auto el = qtm->form_learnable_embeddings(enhanced, image);

    auto dec = decoder->forward(image, enc.level(3), enc.level(2), el);

    FrameOutput out;
    out.prediction = dec.prediction;
    out.logits = dec.logits;
    out.intermediate_preds = std::move(enc.intermediate_preds);
    out.learnable_embeddings = el;

    if (cfg_.update_strategy != UpdateStrategy::None) out.memory = qtm->encode_memory(e4, dec.prediction);
    state = qtm->update(state, out.memory);
    return out;
}

std::vector<FrameOutput> SamDaqImpl::forward_clip(const torch::Tensor& rgb, const torch::Tensor& depth) {
    if (rgb.dim() != 4 || depth.dim() != 4 || rgb.size(0) != depth.size(0)) {
        throw ShapeError("clip tensors must be (T,3,S,S) and (T,1,S,S) with equal T");
    }
    auto state = initial_state(1);
    std::vector<FrameOutput> outs;
    outs.reserve(static_cast<size_t>(rgb.size(0)));
    for (int64_t t = 0; t < rgb.size(0); ++t) {
        outs.push_back(step(rgb.slice(0, t, t + 1), depth.slice(0, t, t + 1), state));
    }
    return outs;
}

}  // namespace nn

nn::SamDaq build_model(const Config& cfg) {
    nn::SamDaq model(cfg);
    model->reset_parameters();
    model->apply_freeze();
    if (cfg.precision == Precision::Float64) model->to(torch::kFloat64);
    return model;
}

}  // namespace daq
