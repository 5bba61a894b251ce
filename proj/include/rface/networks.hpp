#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "rface/attention.hpp"
#include "rface/imagecore.hpp"

namespace rface {

enum class NormKind { kInstance, kNone };
enum class BlendMode { kRaw, kPaste };

std::string_view to_string(NormKind k);
std::string_view to_string(BlendMode m);
std::string_view to_string(FusionMode m);
std::string_view to_string(FlowPolarity p);

struct GeneratorConfig {
  int64_t base_channels = 16;
  int64_t downsample_steps = 2;
  std::vector<int64_t> dilation_schedule{1, 2, 4, 8, 4, 2, 1};
  int64_t image_size = 32;
  NormKind norm = NormKind::kInstance;
  /// false selects the "w/o attention" variant: reference features are concatenated
  /// with source features and projected by a 1x1 convolution.
  bool use_attention = true;
  FusionMode fusion = FusionMode::kConcatProject;
  FlowPolarity polarity = FlowPolarity::kLiteral;
  MaskAnchor mask_anchor = MaskAnchor::kCenter;
  int64_t discriminator_channels = 16;
  int64_t discriminator_stages = 3;  // stride-2 stages before the score layer

  void validate() const;
  int64_t bottleneck_channels() const { return base_channels << downsample_steps; }
  int64_t bottleneck_size() const { return image_size >> downsample_steps; }
  int64_t score_size() const { return image_size >> discriminator_stages; }
};

/// Stride-2 convolutional encoder; input is image (3 ch) plus one conditioning channel.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Encoder);

class DilatedResidualBlockImpl : public torch::nn::Module {
 public:
  DilatedResidualBlockImpl(int64_t channels, int64_t dilation, NormKind norm);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(DilatedResidualBlock);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Decoder);

/// Inpainting generator: encoder, seven dilated residual blocks, attention, decoder.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config);

  /// Bottleneck features of the corrupted image with the mask as a fourth channel.
  torch::Tensor encode(const torch::Tensor& corrupted, const torch::Tensor& mask);
  torch::Tensor forward(const torch::Tensor& corrupted, const torch::Tensor& mask,
                        const torch::Tensor& reference_features);

  Encoder encoder{nullptr};
  torch::nn::Sequential blocks{nullptr};
  ExampleGuidedAttention attention{nullptr};
  torch::nn::Conv2d concat_projection{nullptr};  // w/o attention variant only
  Decoder decoder{nullptr};

 private:
  GeneratorConfig config_;
};
TORCH_MODULE(Generator);

/// Patch discriminator emitting raw (unsquashed) scores.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(Discriminator);

/// All trainable weights: generator (with attention), reference encoder, discriminator.
class RFaceModelImpl : public torch::nn::Module {
 public:
  explicit RFaceModelImpl(GeneratorConfig config);

  /// Zero-mean Gaussian (std 0.02) conv weights, zero biases, unit norm scales.
  void initialize(uint64_t seed);

  const GeneratorConfig& config() const { return config_; }

  std::vector<torch::Tensor> generator_parameters();
  std::vector<torch::Tensor> discriminator_parameters();

  Generator generator{nullptr};
  Encoder reference_encoder{nullptr};
  Discriminator discriminator{nullptr};

 private:
  GeneratorConfig config_;
};
TORCH_MODULE(RFaceModel);

/// F_r = E_r(I_r). The reference encoder shares the generator encoder's structure, so
/// its conditioning channel is filled with ones.
torch::Tensor encode_reference(RFaceModel& model, const torch::Tensor& reference);

/// I_g = G(I_c, mask, F_r); output in [-1, 1].
torch::Tensor generate(RFaceModel& model, const torch::Tensor& corrupted, const torch::Tensor& mask,
                       const torch::Tensor& reference_features);

torch::Tensor discriminate(RFaceModel& model, const torch::Tensor& image);

/// raw: I_g as produced; paste: mask * I_s + (1 - mask) * I_g.
torch::Tensor compose_output(const torch::Tensor& generated, const torch::Tensor& source,
                             const torch::Tensor& mask, BlendMode mode);

}  // namespace rface
