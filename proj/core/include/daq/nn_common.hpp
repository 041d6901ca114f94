#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace daq::nn {

at::Generator make_generator(uint64_t seed);

/// Normal(0, 1/sqrt(fan_in)) weights, zero bias.
void init_linear(torch::nn::Linear& layer, at::Generator& gen, double gain = 1.0);
void init_conv(torch::nn::Conv2d& layer, at::Generator& gen, double gain = 1.0);
void init_conv(torch::nn::ConvTranspose2d& layer, at::Generator& gen, double gain = 1.0);
void zero_linear(torch::nn::Linear& layer);

/// Bilinear resize with half-pixel centres (align_corners = false). Returns the
/// input unchanged when the size already matches. A factor-2 downsample is the
/// mean of each 2x2 cell.
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width);

/// Area (box-filter) resize, used to shrink full-resolution masks.
torch::Tensor resize_area(const torch::Tensor& x, int64_t height, int64_t width);

/// (B, C, H, W) -> (B, H*W, C)
torch::Tensor to_tokens(const torch::Tensor& x);
/// (B, H*W, C) -> (B, C, H, W)
torch::Tensor from_tokens(const torch::Tensor& t, int64_t height, int64_t width);

/// Applies a Linear over the channel axis of an NCHW map (a 1x1 projection).
torch::Tensor channel_linear(torch::nn::Linear& layer, const torch::Tensor& x);

/// Fixed 2-D sinusoidal encoding of an H x W grid, shape (H*W, dim).
/// Half the channels encode rows, half encode columns. `dim` must be a multiple of 4.
torch::Tensor sinusoidal_position_encoding(int64_t height, int64_t width, int64_t dim,
                                           const torch::TensorOptions& options);

/// Parameters of `module` whose gradient is required.
std::vector<torch::Tensor> trainable_parameters(const torch::nn::Module& module);

}  // namespace daq::nn
