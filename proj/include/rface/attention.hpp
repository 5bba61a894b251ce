#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace rface {

/// Which region receives the attention-warped reference features.
enum class FlowPolarity {
  /// F_e = M * (F_r (x) F_m) + (1 - M) * F_r: raw reference features in the hole.
  kLiteral,
  /// Swapped reading: warped features in the hole, raw reference features elsewhere.
  kSwapped,
};

/// How F_a and F_e are fused before the decoder.
enum class FusionMode { kConcatProject, kAdd };

/// Query channel count for C feature channels: C / 8, at least 1.
int64_t query_channels(int64_t channels);

/// F_m[b, j, i] = softmax_i <q_i, q_j> for a query projection q (B x Cq x H x W).
/// Returns B x N x N with N = H * W; each row sums to 1.
torch::Tensor attention_map_from_query(const torch::Tensor& query);

/// Projects F_s through a 1x1 convolution and forms the attention map.
torch::Tensor attention_map(const torch::Tensor& source_features, const torch::Tensor& query_weight,
                            const torch::Tensor& query_bias);

/// out[:, j] = sum_i features[:, i] * F_m[j, i]. Used for both F_a and F_e'.
torch::Tensor self_attend(const torch::Tensor& features, const torch::Tensor& attention);

/// Example-guided flow. mask is the keep-mask at feature resolution (B x 1 x H x W).
/// Selection is exact: output equals F_r or F_e' bit for bit in the respective regions.
torch::Tensor example_flow(const torch::Tensor& reference_features, const torch::Tensor& attention,
                           const torch::Tensor& mask, FlowPolarity polarity = FlowPolarity::kLiteral);

/// Concatenates F_a and F_e along channels (2C) and projects back to C with a 1x1 kernel
/// (projection_weight: C x 2C x 1 x 1).
torch::Tensor fuse(const torch::Tensor& attended, const torch::Tensor& flow,
                   const torch::Tensor& projection_weight, const torch::Tensor& projection_bias);

struct AttentionOptions {
  int64_t channels = 64;
  FusionMode fusion = FusionMode::kConcatProject;
  FlowPolarity polarity = FlowPolarity::kLiteral;
};

/// Example-guided attention block with learned query and fusion projections.
class ExampleGuidedAttentionImpl : public torch::nn::Module {
 public:
  explicit ExampleGuidedAttentionImpl(AttentionOptions options);

  /// source, reference: B x C x H x W; mask: B x 1 x H x W keep-mask at feature resolution.
  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& reference,
                        const torch::Tensor& mask);

  const AttentionOptions& options() const { return options_; }

  torch::nn::Conv2d query{nullptr};
  torch::nn::Conv2d fusion{nullptr};

 private:
  AttentionOptions options_;
};
TORCH_MODULE(ExampleGuidedAttention);

}  // namespace rface
