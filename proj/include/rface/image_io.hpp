#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace rface {

/// Reads an RGB image as a 3 x H x W float tensor in [-1, 1], resized to size x size
/// with area interpolation when size > 0.
torch::Tensor read_rgb(const std::filesystem::path& path, int size = 0);

/// Reads a single-channel 8-bit image as an H x W int64 tensor, nearest-neighbour resized.
torch::Tensor read_gray_u8(const std::filesystem::path& path, int size = 0);

/// Writes a 3 x H x W tensor in [-1, 1] as an 8-bit RGB image.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);

/// Writes an H x W integer tensor (values 0..255) as an 8-bit grayscale PNG.
void write_gray_u8(const std::filesystem::path& path, const torch::Tensor& labels);

/// Places 3 x H x W images side by side.
torch::Tensor hconcat(const std::vector<torch::Tensor>& images);

}  // namespace rface
