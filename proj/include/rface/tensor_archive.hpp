#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace rface {

/// Self-describing container for named tensors plus JSON metadata.
///
/// Layout (all integers little-endian):
///
///     offset 0   8 bytes   magic "RFACEARC"
///     offset 8   u32       format version (currently 1)
///     offset 12  u64       header length L in bytes
///     offset 20  L bytes   UTF-8 JSON header:
///                            {"meta": {...},
///                             "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
///     offset 20+L          payload; tensor i occupies [offset, offset + nbytes) of the payload
///
/// dtype is one of "f32", "f64", "i64", "u8"; data is C-contiguous, row-major.
/// Writing the same archive twice produces identical bytes.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

inline constexpr uint32_t kTensorArchiveVersion = 1;

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_tensor_archive(const std::filesystem::path& path);

}  // namespace rface
