#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "rface/errors.hpp"

namespace rface {

struct ValueRange {
  double lo;
  double hi;
};

/// Images fed to the networks.
inline constexpr ValueRange kNetworkRange{-1.0, 1.0};
/// Images fed to metrics.
inline constexpr ValueRange kMetricRange{0.0, 1.0};

/// Batched raster (B x C x H x W) whose elements lie in a declared range.
class ImageTensor {
 public:
  /// Validates rank, spatial size and range; throws ContractError.
  ImageTensor(torch::Tensor data, ValueRange range);

  const torch::Tensor& data() const { return data_; }
  ValueRange range() const { return range_; }

  int64_t batch() const { return data_.size(0); }
  int64_t channels() const { return data_.size(1); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }

  /// Affine remap into another range (e.g. network -> metric).
  ImageTensor to_range(ValueRange target) const;

 private:
  torch::Tensor data_;
  ValueRange range_;
};

/// Binary keep-mask (B x 1 x H x W): 1 keeps the source pixel, 0 marks the hole.
class ComponentMask {
 public:
  explicit ComponentMask(torch::Tensor data);

  static ComponentMask ones(int64_t batch, int64_t height, int64_t width);

  const torch::Tensor& data() const { return data_; }
  int64_t batch() const { return data_.size(0); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }

  /// 1 where the hole is.
  torch::Tensor hole() const { return 1.0 - data_; }
  int64_t hole_count() const;

 private:
  torch::Tensor data_;
};

// ---------------------------------------------------------------------------
// Face parsing classes (CelebAMask-HQ, 19 classes including background)
// ---------------------------------------------------------------------------

inline constexpr int kNumFaceClasses = 19;

namespace face_class {
inline constexpr int kBackground = 0;
inline constexpr int kSkin = 1;
inline constexpr int kNose = 2;
inline constexpr int kEyeGlasses = 3;
inline constexpr int kLeftEye = 4;
inline constexpr int kRightEye = 5;
inline constexpr int kLeftBrow = 6;
inline constexpr int kRightBrow = 7;
inline constexpr int kLeftEar = 8;
inline constexpr int kRightEar = 9;
inline constexpr int kMouth = 10;
inline constexpr int kUpperLip = 11;
inline constexpr int kLowerLip = 12;
inline constexpr int kHair = 13;
inline constexpr int kHat = 14;
inline constexpr int kEarRing = 15;
inline constexpr int kNecklace = 16;
inline constexpr int kNeck = 17;
inline constexpr int kCloth = 18;
}  // namespace face_class

/// Annotation file suffixes, indexed by class id (index 0 has no file).
const std::array<std::string_view, kNumFaceClasses>& face_class_names();

enum class Component : uint8_t { kEyes = 0, kNose = 1, kMouth = 2 };

inline constexpr std::array<Component, 3> kAllComponents{Component::kEyes, Component::kNose,
                                                         Component::kMouth};

std::string_view component_name(Component c);
std::optional<Component> parse_component(std::string_view name);

/// Parsing-label class ids that make up a component.
const std::vector<int>& component_class_ids(Component c);

/// Subset of {eyes, nose, mouth}.
class ComponentSet {
 public:
  ComponentSet() = default;
  ComponentSet(std::initializer_list<Component> components);

  /// Comma-separated names, e.g. "eyes,mouth". Throws ContractError listing valid names.
  static ComponentSet parse(std::string_view list);
  static ComponentSet all() { return {Component::kEyes, Component::kNose, Component::kMouth}; }

  void insert(Component c) { bits_ |= bit(c); }
  bool contains(Component c) const { return (bits_ & bit(c)) != 0; }
  bool empty() const { return bits_ == 0; }
  int size() const;
  std::vector<Component> components() const;
  /// Union of the class ids of all selected components.
  std::vector<int> class_ids() const;
  std::string to_string() const;

  bool operator==(const ComponentSet&) const = default;

 private:
  static uint8_t bit(Component c) { return static_cast<uint8_t>(1u << static_cast<int>(c)); }
  uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// I_c = I_s * mask (elementwise, broadcast over channels).
ImageTensor corrupt(const ImageTensor& source, const ComponentMask& mask);

/// Tensor-level form of corrupt used inside autograd graphs.
torch::Tensor apply_keep_mask(const torch::Tensor& image, const torch::Tensor& mask);

/// label_map: integer tensor (H x W) or (B x H x W). Pixels whose class belongs to a
/// selected component become holes.
ComponentMask components_to_mask(const torch::Tensor& label_map, const ComponentSet& set);

/// Grows the hole with a (2r+1)^2 square structuring element, clipped at the border.
ComponentMask dilate_mask(const ComponentMask& mask, int radius);

enum class MaskAnchor { kTopLeft, kCenter };

/// Nearest-neighbour subsampling by an integer factor. The anchor picks which pixel of
/// each factor x factor cell is sampled.
ComponentMask downsample_mask(const ComponentMask& mask, int factor,
                              MaskAnchor anchor = MaskAnchor::kCenter);

}  // namespace rface
