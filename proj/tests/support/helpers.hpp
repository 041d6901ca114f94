#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "daq/config.hpp"
#include "daq/model.hpp"
#include "daq/nn_common.hpp"

namespace testing_support {

/// Small and fast: 16x16 input, narrow stages, few queries.
inline daq::Config tiny_config() {
    daq::Config c;
    c.input_size = 16;
    c.stage_channels = {4, 8, 12, 16};
    c.stage_heads = {1, 1, 1, 2};
    c.fpn_width = 8;
    c.adapter_rank = 2;
    c.lora_rank = 2;
    c.num_frame_queries = 3;
    c.num_video_queries = 2;
    c.query_hidden_dim = 8;
    c.decoder_rounds = 1;
    return c;
}

/// Overwrites every trainable parameter with N(0, scale) draws so that
/// zero-initialised branches become live.
inline void randomize_trainable(torch::nn::Module& m, uint64_t seed, double scale = 0.3) {
    auto gen = daq::nn::make_generator(seed);
    torch::NoGradGuard no_grad;
    for (auto& p : m.parameters()) {
        if (p.requires_grad()) p.normal_(0.0, scale, gen);
    }
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a - b).abs().max().item<double>();
}

inline torch::Tensor rand_like_gen(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
    auto gen = daq::nn::make_generator(seed);
    return torch::rand(shape, gen, torch::TensorOptions().dtype(dtype));
}

inline torch::Tensor randn_gen(at::IntArrayRef shape, uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
    auto gen = daq::nn::make_generator(seed);
    return torch::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("daq_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Bytes of every parameter, for bitwise comparisons.
inline std::map<std::string, torch::Tensor> snapshot(const torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters()) out.emplace(p.key(), p.value().detach().clone());
    return out;
}

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
    auto ac = a.contiguous();
    auto bc = b.contiguous();
    return std::memcmp(ac.data_ptr(), bc.data_ptr(), ac.nbytes()) == 0;
}

/// Central-difference check of d loss / d param at the given flat indices.
/// Returns the worst relative error |a - n| / max(|a|, |n|, floor).
inline double fd_relative_error(const std::function<torch::Tensor()>& loss_fn, torch::Tensor param,
                                const std::vector<int64_t>& flat_indices, double h = 1e-6, double floor = 1e-8) {
    auto loss = loss_fn();
    auto grad = torch::autograd::grad({loss}, {param}, {}, false, false, true)[0];
    double worst = 0.0;
    auto flat = param.data().view({-1});
    for (int64_t idx : flat_indices) {
        const double analytic = grad.defined() ? grad.reshape({-1})[idx].item<double>() : 0.0;
        const double orig = flat[idx].item<double>();
        double up = 0, down = 0;
        {
            torch::NoGradGuard no_grad;
            flat[idx] = orig + h;
            up = loss_fn().item<double>();
            flat[idx] = orig - h;
            down = loss_fn().item<double>();
            flat[idx] = orig;
        }
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

/// Spread-out sample of flat indices into a tensor of `numel` elements.
inline std::vector<int64_t> sample_indices(int64_t numel, int64_t count) {
    std::vector<int64_t> out;
    const int64_t n = std::min(numel, count);
    for (int64_t i = 0; i < n; ++i) out.push_back((i * numel) / n + (numel / n) / 2);
    return out;
}

}  // namespace testing_support
