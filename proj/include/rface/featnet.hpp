#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace rface {

enum class BackboneKind { kPretrainedVgg19, kFixedRandomCnn, kIdentity };

std::string_view to_string(BackboneKind kind);
std::optional<BackboneKind> parse_backbone_kind(std::string_view name);

/// Loss names that may select backbone layers.
inline constexpr std::array<std::string_view, 4> kFeatureLosses{"perceptual", "style",
                                                                "contextual", "pixel"};

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kFixedRandomCnn;
  /// Output channels of each fixed-random-cnn stage; stage k > 1 halves the resolution.
  std::vector<int64_t> random_channels{16, 32, 32, 64};
  uint64_t seed = 7;
  /// Tensor archive with conv{b}_{i}.weight / .bias entries for the VGG-19 backbone.
  std::string weights_path;
  /// Per-loss layer selection; losses without an entry use the backbone's defaults.
  std::map<std::string, std::vector<std::string>> loss_layers;
};

/// Feature maps in backbone depth order.
class FeaturePyramid {
 public:
  void push(std::string name, torch::Tensor feature);

  const torch::Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  size_t size() const { return layers_.size(); }
  std::vector<std::string> names() const;

  auto begin() const { return layers_.begin(); }
  auto end() const { return layers_.end(); }

 private:
  std::vector<std::pair<std::string, torch::Tensor>> layers_;
};

/// Frozen convolutional feature extractor. Weights never require gradients; gradients
/// still flow to the input image.
class Backbone {
 public:
  explicit Backbone(BackboneSpec spec);

  const BackboneSpec& spec() const { return spec_; }
  BackboneKind kind() const { return spec_.kind; }
  const std::vector<std::string>& layer_names() const { return layer_names_; }

  /// image: B x 3 x H x W in [-1, 1]. Returns every layer.
  FeaturePyramid extract(const torch::Tensor& image) const;
  /// Returns only the requested layers; stops at the deepest one. Throws ContractError
  /// listing the available layers for unknown names.
  FeaturePyramid extract(const torch::Tensor& image, std::span<const std::string> layers) const;

  /// Layers feeding a loss (configured or default).
  const std::vector<std::string>& layers_for(std::string_view loss) const;

  /// Global average pool of the deepest layer: B x C.
  torch::Tensor pooled_embedding(const torch::Tensor& image) const;

  /// Casts the weights, e.g. to double for gradient checks.
  void to(torch::ScalarType dtype);

  std::vector<torch::Tensor> weights() const;

 private:
  enum class OpKind { kConv, kRelu, kLeakyRelu, kMaxPool };
  struct Op {
    OpKind kind;
    torch::Tensor weight;
    torch::Tensor bias;
    int64_t stride = 1;
    int64_t padding = 0;
    std::string output;  // non-empty when the result is an exposed layer
  };

  torch::Tensor prepare_input(const torch::Tensor& image) const;
  int64_t layer_index(const std::string& name) const;
  void build_random_cnn();
  void build_vgg19();

  BackboneSpec spec_;
  std::vector<Op> ops_;
  std::vector<std::string> layer_names_;
  std::map<std::string, std::vector<std::string>, std::less<>> resolved_layers_;
};

}  // namespace rface
