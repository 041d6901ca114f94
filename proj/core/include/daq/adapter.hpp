#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace daq::nn {

enum class AdapterModality { Depth, RgbDpa, Sequential };

/// Bottleneck adapter applied per spatial position:
///   up(gelu(down(x)))
/// The up-projection (weights and bias) starts at zero, so a fresh adapter
/// contributes exactly nothing.
class AdapterImpl : public torch::nn::Module {
public:
    AdapterImpl(int64_t in_channels, int64_t rank, int64_t out_channels, AdapterModality modality);

    /// (B, in, H, W) -> (B, out, H, W). Throws ConfigError on a channel mismatch.
    torch::Tensor forward(const torch::Tensor& features);

    void reset_parameters(at::Generator& gen);

    int64_t in_channels() const { return in_; }
    int64_t out_channels() const { return out_; }
    int64_t bottleneck_rank() const { return rank_; }
    AdapterModality modality() const { return modality_; }

    torch::nn::Linear down{nullptr};
    torch::nn::Linear up{nullptr};

private:
    int64_t in_;
    int64_t rank_;
    int64_t out_;
    AdapterModality modality_;
};
TORCH_MODULE(Adapter);

/// Parameter count of an adapter with biases.
constexpr int64_t adapter_param_count(int64_t in, int64_t rank, int64_t out) {
    return in * rank + rank + rank * out + out;
}

/// Adapter placed in series on the main path with an internal residual:
///   h + Adapter(Cat(h, guide))   (guide optional)
class SequentialAdapterImpl : public torch::nn::Module {
public:
    SequentialAdapterImpl(int64_t channels, int64_t guide_channels, int64_t rank);

    torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& guide = {});

    void reset_parameters(at::Generator& gen);

    Adapter adapter{nullptr};

private:
    int64_t guide_channels_;
};
TORCH_MODULE(SequentialAdapter);

}  // namespace daq::nn
