#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace daq {

/// (3, H, W) float32 in [0, 1], channels in RGB order.
torch::Tensor read_rgb(const std::filesystem::path& path);

/// (1, H, W) float32 in [0, 1]. 8-bit files are divided by 255, 16-bit files
/// by 65535. Colour files are converted to grey first. Pass kFloat64 for
/// scoring, where float32 rounding would leak into the metrics.
torch::Tensor read_gray(const std::filesystem::path& path, torch::Dtype dtype = torch::kFloat32);

/// Writes round(x * 255) as an 8-bit PNG. `x` is (1, H, W) or (H, W) in [0, 1].
void write_gray8(const std::filesystem::path& path, const torch::Tensor& x);
/// Writes round(x * 65535) as a 16-bit PNG.
void write_gray16(const std::filesystem::path& path, const torch::Tensor& x);
/// Writes a (3, H, W) tensor in [0, 1] as an 8-bit RGB PNG.
void write_rgb8(const std::filesystem::path& path, const torch::Tensor& x);

}  // namespace daq
