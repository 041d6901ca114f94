#pragma once

#include <torch/torch.h>

#include <map>
#include <vector>

#include "daq/config.hpp"
#include "daq/mask_decoder.hpp"
#include "daq/pamie.hpp"
#include "daq/qtm.hpp"

namespace daq {

/// Everything produced for one frame of a clip.
struct FrameOutput {
    torch::Tensor prediction;   // P, (B, 1, S, S)
    torch::Tensor logits;       // pre-sigmoid P
    std::map<int, torch::Tensor> intermediate_preds;  // P~ at S x S, supervised levels only
    torch::Tensor learnable_embeddings;  // E_L, (B, N_v, c)
    torch::Tensor memory;       // F_m, undefined for update_strategy = none
};

namespace nn {

/// Encoder, temporal memory and decoder wired frame by frame.
class SamDaqImpl : public torch::nn::Module {
public:
    explicit SamDaqImpl(const Config& cfg);

    /// Deterministic initialisation: the backbone from `backbone_seed`,
    /// everything else from `seed`.
    void reset_parameters();

    VideoQueryState initial_state(int64_t batch = 1);

    /// One frame: rgb (B,3,S,S), depth (B,1,S,S). Returns the frame output and
    /// replaces `state` by Q_{v,t+1}.
    FrameOutput step(const torch::Tensor& rgb, const torch::Tensor& depth, VideoQueryState& state);

    /// Runs the recurrence over a clip; rgb (T,3,S,S), depth (T,1,S,S), batch 1.
    std::vector<FrameOutput> forward_clip(const torch::Tensor& rgb, const torch::Tensor& depth);

    /// Marks the frozen backbone as non-trainable (low-rank deltas excepted).
    void apply_freeze();

    const Config& config() const { return cfg_; }
    torch::Dtype dtype() const;

    Pamie encoder{nullptr};
    Qtm qtm{nullptr};
    MaskDecoder decoder{nullptr};

private:
    Config cfg_;
};
TORCH_MODULE(SamDaq);

}  // namespace nn

/// Builds, initialises, freezes and casts a model for `cfg`.
nn::SamDaq build_model(const Config& cfg);

/// True for parameters that belong to the frozen backbone (including the
/// shared patch embedding) and are not low-rank deltas.
bool is_frozen_name(const std::string& name);

}  // namespace daq
