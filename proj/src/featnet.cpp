#include "rface/featnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rface/errors.hpp"
#include "rface/tensor_archive.hpp"

namespace rface {

std::string_view to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kPretrainedVgg19: return "pretrained-vgg19";
    case BackboneKind::kFixedRandomCnn: return "fixed-random-cnn";
    case BackboneKind::kIdentity: return "identity";
  }
  return "?";
}

std::optional<BackboneKind> parse_backbone_kind(std::string_view name) {
  for (auto k : {BackboneKind::kPretrainedVgg19, BackboneKind::kFixedRandomCnn,
                 BackboneKind::kIdentity}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void FeaturePyramid::push(std::string name, torch::Tensor feature) {
  layers_.emplace_back(std::move(name), std::move(feature));
}

bool FeaturePyramid::contains(std::string_view name) const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [&](const auto& l) { return l.first == name; });
}

const torch::Tensor& FeaturePyramid::at(std::string_view name) const {
  for (const auto& [key, t] : layers_) {
    if (key == name) return t;
  }
  throw ContractError("feature pyramid has no layer '" + std::string(name) + "'");
}

std::vector<std::string> FeaturePyramid::names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) out.push_back(l.first);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

Backbone::Backbone(BackboneSpec spec) : spec_(std::move(spec)) {
  std::vector<std::string> defaults;
  switch (spec_.kind) {
    case BackboneKind::kIdentity:
      layer_names_ = {"input"};
      defaults = {"input"};
      break;
    case BackboneKind::kFixedRandomCnn:
      build_random_cnn();
      defaults = layer_names_;
      if (defaults.size() > 4) defaults.resize(4);
      break;
    case BackboneKind::kPretrainedVgg19:
      build_vgg19();
      defaults = {"relu1_2", "relu2_2", "relu3_4", "relu4_4"};
      break;
  }

  for (auto loss : kFeatureLosses) {
    std::string key(loss);
    auto it = spec_.loss_layers.find(key);
    auto selected = it != spec_.loss_layers.end() && !it->second.empty() ? it->second : defaults;
    for (const auto& name : selected) layer_index(name);
    resolved_layers_[key] = std::move(selected);
  }
  for (const auto& [loss, names] : spec_.loss_layers) {
    if (std::find(kFeatureLosses.begin(), kFeatureLosses.end(), loss) == kFeatureLosses.end()) {
      throw ContractError("backbone layer selection for unknown loss '" + loss + "'");
    }
  }
}

void Backbone::build_random_cnn() {
  if (spec_.random_channels.empty()) {
    throw ContractError("fixed-random-cnn needs at least one stage");
  }
  auto gen = at::make_generator<at::CPUGeneratorImpl>(spec_.seed);
  int64_t in = 3;
  for (size_t s = 0; s < spec_.random_channels.size(); ++s) {
    const int64_t out = spec_.random_channels[s];
    // He-style scale keeps activations O(1) through the frozen stack.
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    auto w = at::normal(0.0, std, {out, in, 3, 3}, gen);
    auto b = at::normal(0.0, 0.1, {out}, gen);
    std::string name = "stage" + std::to_string(s + 1);
    ops_.push_back({OpKind::kConv, w, b, s == 0 ? 1 : 2, 1, ""});
    ops_.push_back({OpKind::kLeakyRelu, {}, {}, 1, 0, name});
    layer_names_.push_back(name);
    in = out;
  }
}

void Backbone::build_vgg19() {
  if (spec_.weights_path.empty()) {
    throw ContractError("pretrained-vgg19 backbone requires weights_path");
  }
  const auto archive = read_tensor_archive(spec_.weights_path);
  const std::vector<int> convs_per_block{2, 2, 4, 4, 4};
  const std::vector<int64_t> widths{64, 128, 256, 512, 512};
  int64_t in = 3;
  for (size_t b = 0; b < convs_per_block.size(); ++b) {
    for (int i = 1; i <= convs_per_block[b]; ++i) {
      const std::string conv = "conv" + std::to_string(b + 1) + "_" + std::to_string(i);
      const auto* w = archive.find(conv + ".weight");
      const auto* bias = archive.find(conv + ".bias");
      if (w == nullptr || bias == nullptr) {
        throw FormatError(spec_.weights_path + ": missing weights for " + conv);
      }
      if (w->sizes() != torch::IntArrayRef{widths[b], in, 3, 3}) {
        std::ostringstream os;
        os << spec_.weights_path << ": " << conv << ".weight has shape " << w->sizes();
        throw FormatError(os.str());
      }
      ops_.push_back({OpKind::kConv, w->to(torch::kFloat32), bias->to(torch::kFloat32), 1, 1, conv});
      const std::string relu = "relu" + std::to_string(b + 1) + "_" + std::to_string(i);
      ops_.push_back({OpKind::kRelu, {}, {}, 1, 0, relu});
      layer_names_.push_back(conv);
      layer_names_.push_back(relu);
      in = widths[b];
    }
    const std::string pool = "pool" + std::to_string(b + 1);
    ops_.push_back({OpKind::kMaxPool, {}, {}, 2, 0, pool});
    layer_names_.push_back(pool);
  }
}

int64_t Backbone::layer_index(const std::string& name) const {
  auto it = std::find(layer_names_.begin(), layer_names_.end(), name);
  if (it == layer_names_.end()) {
    throw ContractError("unknown backbone layer '" + name + "' (available: " + join(layer_names_) +
                        ")");
  }
  return it - layer_names_.begin();
}

const std::vector<std::string>& Backbone::layers_for(std::string_view loss) const {
  auto it = resolved_layers_.find(loss);
  if (it == resolved_layers_.end()) {
    throw ContractError("no layer selection for loss '" + std::string(loss) + "'");
  }
  return it->second;
}

torch::Tensor Backbone::prepare_input(const torch::Tensor& image) const {
  if (image.dim() != 4) throw ContractError("Backbone: expected a B x C x H x W image");
  if (spec_.kind != BackboneKind::kPretrainedVgg19) return image;
  // ImageNet statistics on [0, 1] inputs.
  auto opts = image.options().requires_grad(false);
  auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
  auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
  return ((image + 1.0) * 0.5 - mean) / std;
}

FeaturePyramid Backbone::extract(const torch::Tensor& image) const {
  return extract(image, layer_names_);
}

FeaturePyramid Backbone::extract(const torch::Tensor& image,
                                 std::span<const std::string> layers) const {
  std::vector<bool> wanted(layer_names_.size(), false);
  int64_t deepest = -1;
  for (const auto& name : layers) {
    const auto idx = layer_index(name);
    wanted[idx] = true;
    deepest = std::max(deepest, idx);
  }

  FeaturePyramid pyramid;
  auto x = prepare_input(image);
  if (spec_.kind == BackboneKind::kIdentity) {
    if (deepest >= 0) pyramid.push("input", x);
    return pyramid;
  }
  int64_t produced = -1;
  for (const auto& op : ops_) {
    if (produced >= deepest) break;
    switch (op.kind) {
      case OpKind::kConv:
        x = torch::conv2d(x, op.weight.to(x.dtype()), op.bias.to(x.dtype()), op.stride, op.padding);
        break;
      case OpKind::kRelu: x = torch::relu(x); break;
      case OpKind::kLeakyRelu: x = torch::leaky_relu(x, 0.2); break;
      case OpKind::kMaxPool: x = torch::max_pool2d(x, {2, 2}, {op.stride, op.stride}); break;
    }
    if (!op.output.empty()) {
      ++produced;
      if (wanted[produced]) pyramid.push(op.output, x);
    }
  }
  return pyramid;
}

torch::Tensor Backbone::pooled_embedding(const torch::Tensor& image) const {
  const std::vector<std::string> last{layer_names_.back()};
  auto pyramid = extract(image, last);
  const auto& f = pyramid.at(last.front());
  return f.flatten(2).mean(2);
}

void Backbone::to(torch::ScalarType dtype) {
  for (auto& op : ops_) {
    if (op.weight.defined()) op.weight = op.weight.to(dtype);
    if (op.bias.defined()) op.bias = op.bias.to(dtype);
  }
}

std::vector<torch::Tensor> Backbone::weights() const {
  std::vector<torch::Tensor> out;
  for (const auto& op : ops_) {
    if (op.weight.defined()) out.push_back(op.weight);
    if (op.bias.defined()) out.push_back(op.bias);
  }
  return out;
}

}  // namespace rface
