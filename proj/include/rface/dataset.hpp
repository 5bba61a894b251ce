#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rface/imagecore.hpp"

namespace rface {

struct FaceSample {
  std::string id;
  torch::Tensor image;   // 3 x S x S, float, [-1, 1]
  torch::Tensor labels;  // S x S, int64 class ids
};

using FaceDataset = std::vector<FaceSample>;

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline constexpr int64_t kDefaultTestCount = 2000;

/// Holds out the last test_count ids (in the given order); the rest train.
DatasetSplit split_ids(const std::vector<std::string>& ids, int64_t test_count = kDefaultTestCount);

/// Samples whose ids appear in `ids`, in that order.
FaceDataset select(const FaceDataset& dataset, const std::vector<std::string>& ids);

// ---------------------------------------------------------------------------
// CelebAMask-HQ

struct CelebAMaskLayout {
  /// Directory with <id>.jpg images, relative to the root ("" = root itself).
  std::string image_dir;
  /// Directory searched recursively for <id>_<class>.png masks ("" = root itself).
  std::string mask_dir;
};

/// The released archive's layout (CelebA-HQ-img/, CelebAMask-HQ-mask-anno/) when those
/// directories exist under root; otherwise everything is expected in root itself.
CelebAMaskLayout detect_celebamask_layout(const std::filesystem::path& root);

/// Ids present in the layout, numerically sorted when all ids are numeric. Zero-padded
/// numeric ids ("00012") are canonicalised ("12"). Throws FormatError naming the first id
/// that lacks its image or has no mask file.
std::vector<std::string> scan_celebamask_index(const std::filesystem::path& root,
                                               const CelebAMaskLayout& layout = {});

/// Loads images resized to `size` (area interpolation) and label maps composed from the
/// per-class masks and resized with nearest neighbour.
FaceDataset load_celebamask_hq(const std::filesystem::path& root, int size,
                               const CelebAMaskLayout& layout = {}, int64_t limit = 0);

// ---------------------------------------------------------------------------
// Prepared dataset: <dir>/<id>.png, <dir>/<id>_label.png, <dir>/split.tsv

void write_prepared(const std::filesystem::path& dir, const FaceDataset& dataset,
                    const DatasetSplit& split);
FaceDataset load_prepared(const std::filesystem::path& dir, DatasetSplit* split = nullptr);

// ---------------------------------------------------------------------------
// Synthetic faces

/// Procedural face-like images with exact label maps; deterministic per seed.
/// Every label map contains both eyes, nose, mouth and both lips.
FaceDataset synth_toy_dataset(int64_t n, int64_t size, uint64_t seed);

/// Per-pixel component guess for toy-palette images (3 x H x W in [-1, 1]):
/// 0 = none, 1 + int(Component) otherwise.
torch::Tensor toy_palette_components(const torch::Tensor& image);

// ---------------------------------------------------------------------------

/// Uniform size from `sizes`, then a uniformly random subset of that size.
ComponentSet sample_component_subset(std::mt19937_64& rng, const std::vector<int>& sizes = {2, 3});

}  // namespace rface
