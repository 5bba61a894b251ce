#include "rface/imagecore.hpp"

#include <algorithm>
#include <sstream>

namespace rface {

namespace {

void check_spatial(const torch::Tensor& t, const char* what) {
  if (t.dim() != 4) {
    std::ostringstream os;
    os << what << ": expected a 4-d tensor (B x C x H x W), got " << t.dim() << " dims";
    throw ContractError(os.str());
  }
  if (t.size(0) < 1 || t.size(2) < 1 || t.size(3) < 1) {
    throw ContractError(std::string(what) + ": batch, height and width must be positive");
  }
}

void check_aligned(const torch::Tensor& image, const torch::Tensor& mask, const char* op) {
  const bool batch_ok = mask.size(0) == image.size(0) || mask.size(0) == 1;
  if (!batch_ok || mask.size(2) != image.size(2) || mask.size(3) != image.size(3)) {
    std::ostringstream os;
    os << op << ": mask " << mask.sizes() << " does not align with image " << image.sizes();
    throw ContractError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ImageTensor::ImageTensor(torch::Tensor data, ValueRange range)
    : data_(std::move(data)), range_(range) {
  check_spatial(data_, "ImageTensor");
  if (!data_.is_floating_point()) throw ContractError("ImageTensor: data must be floating point");
  if (range_.lo >= range_.hi) throw ContractError("ImageTensor: empty value range");
  if (data_.numel() > 0) {
    const auto lo = data_.min().item<double>();
    const auto hi = data_.max().item<double>();
    if (lo < range_.lo || hi > range_.hi || std::isnan(lo) || std::isnan(hi)) {
      std::ostringstream os;
      os << "ImageTensor: values [" << lo << ", " << hi << "] outside declared range ["
         << range_.lo << ", " << range_.hi << "]";
      throw ContractError(os.str());
    }
  }
}

ImageTensor ImageTensor::to_range(ValueRange target) const {
  const double scale = (target.hi - target.lo) / (range_.hi - range_.lo);
  auto mapped = (data_ - range_.lo) * scale + target.lo;
  return ImageTensor(mapped.clamp(target.lo, target.hi), target);
}

ComponentMask::ComponentMask(torch::Tensor data) : data_(std::move(data)) {
  check_spatial(data_, "ComponentMask");
  if (data_.size(1) != 1) throw ContractError("ComponentMask: expected a single channel");
  if (!data_.is_floating_point()) data_ = data_.to(torch::kFloat32);
  const auto binary = data_.eq(0).logical_or(data_.eq(1)).all().item<bool>();
  if (!binary) throw ContractError("ComponentMask: elements must be exactly 0 or 1");
}

ComponentMask ComponentMask::ones(int64_t batch, int64_t height, int64_t width) {
  return ComponentMask(torch::ones({batch, 1, height, width}));
}

int64_t ComponentMask::hole_count() const { return data_.eq(0).sum().item<int64_t>(); }

// ---------------------------------------------------------------------------

const std::array<std::string_view, kNumFaceClasses>& face_class_names() {
  static const std::array<std::string_view, kNumFaceClasses> names{
      "background", "skin",  "nose",  "eye_g", "l_eye", "r_eye",  "l_brow",
      "r_brow",     "l_ear", "r_ear", "mouth", "u_lip", "l_lip",  "hair",
      "hat",        "ear_r", "neck_l", "neck", "cloth"};
  return names;
}

std::string_view component_name(Component c) {
  switch (c) {
    case Component::kEyes: return "eyes";
    case Component::kNose: return "nose";
    case Component::kMouth: return "mouth";
  }
  return "?";
}

std::optional<Component> parse_component(std::string_view name) {
  for (auto c : kAllComponents) {
    if (component_name(c) == name) return c;
  }
  return std::nullopt;
}

const std::vector<int>& component_class_ids(Component c) {
  static const std::vector<int> eyes{face_class::kLeftEye, face_class::kRightEye};
  static const std::vector<int> nose{face_class::kNose};
  static const std::vector<int> mouth{face_class::kMouth, face_class::kUpperLip,
                                      face_class::kLowerLip};
  switch (c) {
    case Component::kEyes: return eyes;
    case Component::kNose: return nose;
    case Component::kMouth: return mouth;
  }
  return eyes;
}

ComponentSet::ComponentSet(std::initializer_list<Component> components) {
  for (auto c : components) insert(c);
}

ComponentSet ComponentSet::parse(std::string_view list) {
  ComponentSet set;
  size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto token = list.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      auto c = parse_component(token);
      if (!c) {
        throw ContractError("unknown face component '" + std::string(token) +
                            "' (valid: eyes, nose, mouth)");
      }
      set.insert(*c);
    }
    start = end + 1;
  }
  return set;
}

int ComponentSet::size() const {
  return static_cast<int>(std::count_if(kAllComponents.begin(), kAllComponents.end(),
                                        [this](Component c) { return contains(c); }));
}

std::vector<Component> ComponentSet::components() const {
  std::vector<Component> out;
  for (auto c : kAllComponents) {
    if (contains(c)) out.push_back(c);
  }
  return out;
}

std::vector<int> ComponentSet::class_ids() const {
  std::vector<int> ids;
  for (auto c : components()) {
    const auto& cls = component_class_ids(c);
    ids.insert(ids.end(), cls.begin(), cls.end());
  }
  return ids;
}

std::string ComponentSet::to_string() const {
  std::string out;
  for (auto c : components()) {
    if (!out.empty()) out += ',';
    out += component_name(c);
  }
  return out;
}

// ---------------------------------------------------------------------------

torch::Tensor apply_keep_mask(const torch::Tensor& image, const torch::Tensor& mask) {
  check_spatial(image, "corrupt");
  check_spatial(mask, "corrupt");
  check_aligned(image, mask, "corrupt");
  return image * mask.to(image.dtype());
}

ImageTensor corrupt(const ImageTensor& source, const ComponentMask& mask) {
  auto out = apply_keep_mask(source.data(), mask.data());
  // 0 must be representable; it is for both standard ranges.
  return ImageTensor(out, source.range());
}

ComponentMask components_to_mask(const torch::Tensor& label_map, const ComponentSet& set) {
  auto labels = label_map;
  if (labels.dim() == 2) labels = labels.unsqueeze(0);
  if (labels.dim() != 3) throw ContractError("components_to_mask: label map must be H x W or B x H x W");
  if (labels.is_floating_point()) throw ContractError("components_to_mask: label map must be integral");
  labels = labels.to(torch::kLong);
  if (labels.numel() > 0) {
    const auto bad = labels.lt(0).logical_or(labels.ge(kNumFaceClasses));
    if (bad.any().item<bool>()) {
      const auto offending = labels.masked_select(bad)[0].item<int64_t>();
      throw ContractError("components_to_mask: unknown class id " + std::to_string(offending));
    }
  }
  auto hole = torch::zeros(labels.sizes(), torch::kBool);
  for (int id : set.class_ids()) hole = hole.logical_or(labels.eq(id));
  return ComponentMask(hole.logical_not().to(torch::kFloat32).unsqueeze(1));
}

ComponentMask dilate_mask(const ComponentMask& mask, int radius) {
  if (radius < 0) throw ContractError("dilate_mask: radius must be non-negative");
  if (radius == 0) return mask;
  // max-pool pads with -inf, so the structuring element is clipped at the border.
  auto hole = torch::max_pool2d(mask.hole(), {2 * radius + 1, 2 * radius + 1}, {1, 1},
                                {radius, radius});
  return ComponentMask(1.0 - hole);
}

ComponentMask downsample_mask(const ComponentMask& mask, int factor, MaskAnchor anchor) {
  if (factor < 1) throw ContractError("downsample_mask: factor must be positive");
  if (mask.height() % factor != 0 || mask.width() % factor != 0) {
    std::ostringstream os;
    os << "downsample_mask: spatial size " << mask.height() << "x" << mask.width()
       << " not divisible by " << factor;
    throw ContractError(os.str());
  }
  if (factor == 1) return mask;
  const int64_t offset = anchor == MaskAnchor::kCenter ? factor / 2 : 0;
  using torch::indexing::Slice;
  auto sub = mask.data().index({Slice(), Slice(), Slice(offset, torch::indexing::None, factor),
                                Slice(offset, torch::indexing::None, factor)});
  return ComponentMask(sub.contiguous());
}

}  // namespace rface
