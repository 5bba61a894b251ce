#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "rface/featnet.hpp"

namespace rface {

/// Canonical five-scale MS-SSIM exponents.
inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MsSsimOptions {
  int levels = 5;
  /// Per-scale exponents; empty selects the first `levels` canonical weights, renormalised
  /// to sum to one when levels < 5.
  std::vector<double> weights;
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Smallest square side accepted for the given options: 2^(levels-1) * window.
int64_t ms_ssim_min_size(const MsSsimOptions& options);

/// Largest level count (<= 5) that fits an image of side `size`, or 0 if none does.
int ms_ssim_max_levels(int64_t size, int window = 11);

/// Mean multi-scale SSIM over the batch. x, y: B x C x H x W in [0, 1].
double ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const MsSsimOptions& options = {});

struct DistributionStats {
  torch::Tensor mean;        // D, double
  torch::Tensor covariance;  // D x D, double, symmetric
  int64_t count = 0;
};

/// Maps a batch of images (B x C x H x W in [0, 1]) to B x D embeddings.
using Embedder = std::function<torch::Tensor(const torch::Tensor&)>;

/// Flattens each image; useful as an oracle-friendly embedder.
Embedder flatten_embedder();
/// Global-average-pooled deepest backbone layer.
Embedder backbone_embedder(const Backbone& backbone);

/// Mean and unbiased covariance of the embeddings. Needs at least two images.
DistributionStats embed_stats(const torch::Tensor& images, const Embedder& embedder);
DistributionStats stats_from_embeddings(const torch::Tensor& embeddings);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const DistributionStats& a, const DistributionStats& b);

}  // namespace rface
