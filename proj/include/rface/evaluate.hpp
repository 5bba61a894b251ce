#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rface/config.hpp"
#include "rface/dataset.hpp"
#include "rface/featnet.hpp"
#include "rface/networks.hpp"

namespace rface {

struct ExperimentData {
  FaceDataset train;
  FaceDataset test;
};

/// Materialises the configured dataset and its train/test split.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct EditOutput {
  torch::Tensor mask;       // B x 1 x S x S keep-mask actually used
  torch::Tensor corrupted;  // B x 3 x S x S
  torch::Tensor raw;        // generator output
  torch::Tensor composed;   // after blending
};

/// Inference-time editing; needs no reference mask.
EditOutput edit_images(RFaceModel& model, const torch::Tensor& source,
                       const torch::Tensor& source_labels, const torch::Tensor& reference,
                       const std::vector<ComponentSet>& components, int dilation_radius,
                       BlendMode blend);

struct EvalPair {
  size_t source;
  size_t reference;
  ComponentSet components;
};

/// One pair per test image (up to max_pairs), with a different reference drawn per pair.
std::vector<EvalPair> make_eval_pairs(size_t test_size, const ExperimentConfig& config);

struct MetricsRow {
  std::string label;
  double fid = 0.0;
  double ms_ssim = 0.0;
};

/// FID between real and edited test images (backbone embedder) and mean MS-SSIM between
/// each edit and its source. MS-SSIM uses the most scales the image size allows.
MetricsRow evaluate_model(RFaceModel& model, const Backbone& embedder_backbone,
                          const FaceDataset& test, const ExperimentConfig& config,
                          const std::string& label);

/// Tab-separated table: header "method\tFID\tMS-SSIM", one row per configuration.
std::string format_metrics_table(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_table(const std::string& text);

struct ShapeIou {
  double iou = 0.0;
  int64_t intersection = 0;
  int64_t union_size = 0;
};

/// Pooled hole-region IoU between palette-thresholded component silhouettes of pasted
/// edits and the reference's labelled components (toy data only).
ShapeIou toy_shape_iou(RFaceModel& model, const FaceDataset& test, const ExperimentConfig& config);

// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string label;
  /// "" for the full model, "attention", or a loss term name.
  std::string disable;
};

struct AblationGrid {
  ExperimentConfig base;
  std::vector<AblationVariant> variants;
};

/// full, w/o attention, w/o contextual loss, w/o style loss, w/o perceptual loss.
std::vector<AblationVariant> default_ablation_variants();

/// YAML: {config: <path relative to the grid file>, steps: <optional override>,
///        variants: [{label: ..., disable: none|attention|<loss>}, ...]}
AblationGrid load_ablation_grid(const std::filesystem::path& path);

/// Base config with one mechanism switched off.
ExperimentConfig apply_variant(const ExperimentConfig& base, const AblationVariant& variant);

/// Trains and evaluates every variant on the same data; one row per variant.
std::vector<MetricsRow> run_ablation(const AblationGrid& grid, const ExperimentData& data,
                                     std::ostream* progress = nullptr);

}  // namespace rface
