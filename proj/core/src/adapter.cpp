#include "daq/adapter.hpp"

#include "daq/errors.hpp"
#include "daq/nn_common.hpp"

namespace daq::nn {

AdapterImpl::AdapterImpl(int64_t in_channels, int64_t rank, int64_t out_channels, AdapterModality modality)
    : in_(in_channels), rank_(rank), out_(out_channels), modality_(modality) {
    if (rank < 1) throw ConfigError("adapter bottleneck rank must be >= 1");
    down = register_module("down", torch::nn::Linear(in_channels, rank));
    up = register_module("up", torch::nn::Linear(rank, out_channels));
}

torch::Tensor AdapterImpl::forward(const torch::Tensor& features) {
    if (features.dim() != 4 || features.size(1) != in_) {
        throw ConfigError("adapter expects " + std::to_string(in_) + " input channels, got " +
                          (features.dim() == 4 ? std::to_string(features.size(1)) : std::string("non-4d input")));
    }
    auto x = features.permute({0, 2, 3, 1});
    return up->forward(torch::gelu(down->forward(x))).permute({0, 3, 1, 2});
}

void AdapterImpl::reset_parameters(at::Generator& gen) {
    init_linear(down, gen);
    zero_linear(up);
}

SequentialAdapterImpl::SequentialAdapterImpl(int64_t channels, int64_t guide_channels, int64_t rank)
    : guide_channels_(guide_channels) {
    adapter = register_module("adapter", Adapter(channels + guide_channels, rank, channels, AdapterModality::Sequential));
}

torch::Tensor SequentialAdapterImpl::forward(const torch::Tensor& h, const torch::Tensor& guide) {
    if (guide_channels_ > 0) {
        if (!guide.defined() || guide.sizes().slice(2) != h.sizes().slice(2)) {
            throw ShapeError("sequential adapter guide must match the stage output's spatial size");
        }
        return h + adapter->forward(torch::cat({h, guide}, 1));
    }
    return h + adapter->forward(h);
}

void SequentialAdapterImpl::reset_parameters(at::Generator& gen) { adapter->reset_parameters(gen); }

}  // namespace daq::nn
