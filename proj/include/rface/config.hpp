#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rface/featnet.hpp"
#include "rface/losses.hpp"
#include "rface/networks.hpp"

namespace rface {

enum class PixelLossMode { kIdentity, kFeature };

struct AdamSettings {
  double learning_rate = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
};

struct TrainConfig {
  LossWeights weights;
  AdamSettings adam;
  int64_t batch_size = 4;
  int64_t steps = 2000;
  int64_t image_size = 32;
  /// Number of components removed per training sample, drawn uniformly from this list.
  std::vector<int> components_per_sample{2, 3};
  uint64_t seed = 0;
  /// Ablation switches: "attention" or any loss term name.
  std::vector<std::string> disabled;
  int dilation_radius = 1;
  PixelLossMode pixel_mode = PixelLossMode::kIdentity;
  ContextualParams contextual;
  BlendMode blend = BlendMode::kPaste;
  int threads = 1;

  bool is_disabled(std::string_view what) const;
  /// Loss weights with disabled terms zeroed.
  LossWeights effective_weights() const;
};

struct DataConfig {
  std::string kind = "toy";  // toy | prepared | celebamask
  std::string root;
  int64_t toy_count = 24;
  uint64_t toy_seed = 1;
  /// Held-out images (the last ones in id order).
  int64_t test_count = 8;
};

struct EvalConfig {
  /// Comma-separated component list, or "random" for the training policy.
  std::string components = "eyes,nose,mouth";
  uint64_t seed = 99;
  int64_t max_pairs = 0;  // 0 = whole test split
};

struct ExperimentConfig {
  GeneratorConfig generator;
  BackboneSpec backbone;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  /// Cross-field checks (ablation flags, image sizes, component policy).
  void validate() const;
};

/// Strict parse: unknown keys and wrongly typed values are FormatErrors naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_yaml(const std::string& text);

/// YAML document -> JSON value (scalars typed as int, float, bool or string).
nlohmann::json yaml_to_json(const std::string& text);

}  // namespace rface
