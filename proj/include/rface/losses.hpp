#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include <torch/torch.h>

#include "rface/featnet.hpp"

namespace rface {

enum class LossTerm : int { kPerceptual = 0, kStyle, kContextual, kPixel, kTv, kAdversarial };

inline constexpr int kNumLossTerms = 6;
inline constexpr std::array<std::string_view, kNumLossTerms> kLossTermNames{
    "perceptual", "style", "contextual", "pixel", "tv", "adversarial"};

/// lambda_1 .. lambda_6 of the total objective.
struct LossWeights {
  double perceptual = 0.1;
  double style = 250.0;
  double contextual = 1.0;
  double pixel = 0.5;
  double tv = 0.1;
  double adversarial = 0.01;

  std::array<double, kNumLossTerms> as_array() const {
    return {perceptual, style, contextual, pixel, tv, adversarial};
  }
  double& operator[](LossTerm t);
};

/// Raw and weighted terms of one generator update. total is the left-to-right sum of
/// the weighted terms.
struct LossReport {
  int64_t step = 0;
  std::array<double, kNumLossTerms> raw{};
  std::array<double, kNumLossTerms> weighted{};
  double total = 0.0;
  double discriminator = 0.0;

  /// One JSON object per line; doubles are printed with round-trip precision.
  std::string to_json_line() const;
  static LossReport from_json_line(std::string_view line);
};

/// Thrown by total_loss for NaN/inf terms; carries the offending report.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, LossReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

/// Thrown by contextual_loss when an image has no hole locations at a layer.
class EmptyHoleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------

/// B x C x H x W -> B x C x C, G = phi phi^T over the flattened spatial axis.
torch::Tensor gram(const torch::Tensor& features);

/// sum_l mean |phi_l(I_g) - phi_l(I_s)|.
torch::Tensor perceptual_loss(const torch::Tensor& generated, const torch::Tensor& source,
                              const Backbone& backbone, std::span<const std::string> layers);
torch::Tensor perceptual_loss(const torch::Tensor& generated, const torch::Tensor& source,
                              const Backbone& backbone);

/// sum_l (1 / C_l^2) || (G_l(I_g * M) - G_l(I_c)) / (C_l H_l W_l) ||_1, averaged over the batch.
torch::Tensor style_loss(const torch::Tensor& generated, const torch::Tensor& corrupted,
                         const torch::Tensor& mask, const Backbone& backbone,
                         std::span<const std::string> layers);
torch::Tensor style_loss(const torch::Tensor& generated, const torch::Tensor& corrupted,
                         const torch::Tensor& mask, const Backbone& backbone);

struct ContextualParams {
  double bandwidth = 0.5;
  double epsilon = 1e-5;
};

/// CX(X, Y) for feature sets given as N x C matrices (one feature per row).
torch::Tensor contextual_similarity(const torch::Tensor& x, const torch::Tensor& y,
                                    const ContextualParams& params = {});

/// sum_l -log CX between hole-region features of the component content of I_g and I_r,
/// averaged over the batch. When hole counts differ the larger set is subsampled with rng.
/// Throws EmptyHoleError if a sample has no hole location at some layer.
torch::Tensor contextual_loss(const torch::Tensor& generated, const torch::Tensor& source_mask,
                              const torch::Tensor& reference, const torch::Tensor& reference_mask,
                              const Backbone& backbone, std::span<const std::string> layers,
                              std::mt19937_64& rng, const ContextualParams& params = {});
torch::Tensor contextual_loss(const torch::Tensor& generated, const torch::Tensor& source_mask,
                              const torch::Tensor& reference, const torch::Tensor& reference_mask,
                              const Backbone& backbone, std::mt19937_64& rng,
                              const ContextualParams& params = {});

/// Hole-region feature rows (N x C) of one sample's feature map (C x H x W).
torch::Tensor hole_features(const torch::Tensor& feature_map, const torch::Tensor& keep_mask);

/// mean |phi(I_g * M) - phi(I_s * M)|; backbone == nullptr selects the identity (per-pixel) form.
torch::Tensor pixel_loss(const torch::Tensor& generated, const torch::Tensor& source,
                         const torch::Tensor& mask, const Backbone* backbone = nullptr);

/// mean |horizontal differences| + mean |vertical differences|.
torch::Tensor tv_loss(const torch::Tensor& image);

struct AdversarialLosses {
  torch::Tensor generator;
  torch::Tensor discriminator;
};

/// Least-squares objectives on raw discriminator scores.
AdversarialLosses adversarial_losses(const torch::Tensor& real_scores,
                                     const torch::Tensor& fake_scores);
torch::Tensor lsgan_generator_loss(const torch::Tensor& fake_scores);
torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_scores,
                                       const torch::Tensor& fake_scores);

/// Weighted sum of the six raw terms. Throws NonFiniteLossError naming the first bad term.
LossReport total_loss(const std::array<double, kNumLossTerms>& raw, const LossWeights& weights,
                      int64_t step = 0);

/// Differentiable counterpart of total_loss. Undefined tensors count as zero.
torch::Tensor weighted_objective(const std::array<torch::Tensor, kNumLossTerms>& terms,
                                 const LossWeights& weights);

}  // namespace rface
