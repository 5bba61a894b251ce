#include "rface/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rface/errors.hpp"

namespace rface {

using nlohmann::json;

bool TrainConfig::is_disabled(std::string_view what) const {
  return std::find(disabled.begin(), disabled.end(), what) != disabled.end();
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  for (int k = 0; k < kNumLossTerms; ++k) {
    if (is_disabled(kLossTermNames[k])) w[static_cast<LossTerm>(k)] = 0.0;
  }
  return w;
}

void ExperimentConfig::validate() const {
  generator.validate();
  if (train.image_size != generator.image_size) {
    throw ContractError("config: train and generator image sizes differ");
  }
  for (const auto& d : train.disabled) {
    const bool known = d == "attention" ||
                       std::find(kLossTermNames.begin(), kLossTermNames.end(), d) != kLossTermNames.end();
    if (!known) throw ContractError("config: unknown ablation switch '" + d + "'");
  }
  if (train.is_disabled("attention") && generator.use_attention) {
    throw ContractError("config: 'attention' disabled but generator.use_attention is true");
  }
  if (train.components_per_sample.empty()) {
    throw ContractError("config: components_per_sample must not be empty");
  }
  for (int k : train.components_per_sample) {
    if (k < 1 || k > 3) throw ContractError("config: components_per_sample entries must be 1..3");
  }
  if (train.batch_size < 1 || train.steps < 0) throw ContractError("config: bad batch size or steps");
  if (train.dilation_radius < 0) throw ContractError("config: dilation_radius must be >= 0");
  for (double w : train.weights.as_array()) {
    if (w < 0.0) throw ContractError("config: loss weights must be non-negative");
  }
  if (data.kind != "toy" && data.kind != "prepared" && data.kind != "celebamask") {
    throw ContractError("config: data.kind must be toy, prepared or celebamask");
  }
  if (data.test_count < 0) throw ContractError("config: data.test_count must be >= 0");
  if (eval.components != "random") ComponentSet::parse(eval.components);
}

// ---------------------------------------------------------------------------
// strict reader

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw FormatError("config: '" + label() + "' must be a mapping");
  }

  /// Rejects keys that were never requested.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw FormatError("config: unknown key '" + join(key) + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw FormatError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw FormatError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw FormatError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw FormatError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw FormatError("config: bad value for '" + join(key) + "'");
    }
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string text;
    get(key, text);
    if (text.empty()) return;
    auto v = parse(text);
    if (!v) throw FormatError("config: bad value '" + text + "' for '" + join(key) + "'");
    out = *v;
  }

  Reader child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const json empty = json::object();
    if (it == j_.end() || it->is_null()) return Reader(empty, join(key));
    return Reader(*it, join(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
std::optional<T> match(const std::string& text, std::initializer_list<std::pair<const char*, T>> table) {
  for (const auto& [name, value] : table) {
    if (text == name) return value;
  }
  return std::nullopt;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  {
    Reader root(j, "");
    int64_t image_size = cfg.generator.image_size;
    root.get("image_size", image_size);
    cfg.generator.image_size = image_size;
    cfg.train.image_size = image_size;
    root.get("seed", cfg.train.seed);

    {
      auto g = root.child("generator");
      auto& gc = cfg.generator;
      g.get("base_channels", gc.base_channels);
      g.get("downsample_steps", gc.downsample_steps);
      g.get("dilation_schedule", gc.dilation_schedule);
      g.get_enum("norm", gc.norm, [](const std::string& s) {
        return match<NormKind>(s, {{"instance", NormKind::kInstance}, {"none", NormKind::kNone}});
      });
      g.get("use_attention", gc.use_attention);
      g.get_enum("fusion", gc.fusion, [](const std::string& s) {
        return match<FusionMode>(s, {{"concat", FusionMode::kConcatProject}, {"add", FusionMode::kAdd}});
      });
      g.get_enum("flow_polarity", gc.polarity, [](const std::string& s) {
        return match<FlowPolarity>(
            s, {{"literal", FlowPolarity::kLiteral}, {"swapped", FlowPolarity::kSwapped}});
      });
      g.get_enum("mask_anchor", gc.mask_anchor, [](const std::string& s) {
        return match<MaskAnchor>(s, {{"center", MaskAnchor::kCenter}, {"top-left", MaskAnchor::kTopLeft}});
      });
      g.get("discriminator_channels", gc.discriminator_channels);
      g.get("discriminator_stages", gc.discriminator_stages);
      g.finish();
    }
    {
      auto b = root.child("backbone");
      auto& bs = cfg.backbone;
      b.get_enum("kind", bs.kind, [](const std::string& s) { return parse_backbone_kind(s); });
      b.get("random_channels", bs.random_channels);
      b.get("seed", bs.seed);
      b.get("weights_path", bs.weights_path);
      if (const auto* layers = b.raw("layers")) {
        if (!layers->is_object()) throw FormatError("config: 'backbone.layers' must be a mapping");
        for (const auto& [loss, names] : layers->items()) {
          if (std::find(kFeatureLosses.begin(), kFeatureLosses.end(), loss) == kFeatureLosses.end()) {
            throw FormatError("config: unknown key 'backbone.layers." + loss + "'");
          }
          try {
            bs.loss_layers[loss] = names.get<std::vector<std::string>>();
          } catch (const json::exception&) {
            throw FormatError("config: bad value for 'backbone.layers." + loss + "'");
          }
        }
      }
      b.finish();
    }
    {
      auto l = root.child("losses");
      {
        auto w = l.child("weights");
        auto& lw = cfg.train.weights;
        w.get("perceptual", lw.perceptual);
        w.get("style", lw.style);
        w.get("contextual", lw.contextual);
        w.get("pixel", lw.pixel);
        w.get("tv", lw.tv);
        w.get("adversarial", lw.adversarial);
        w.finish();
      }
      l.get_enum("pixel_mode", cfg.train.pixel_mode, [](const std::string& s) {
        return match<PixelLossMode>(
            s, {{"identity", PixelLossMode::kIdentity}, {"feature", PixelLossMode::kFeature}});
      });
      l.get("contextual_bandwidth", cfg.train.contextual.bandwidth);
      l.get("contextual_epsilon", cfg.train.contextual.epsilon);
      l.finish();
    }
    {
      auto t = root.child("train");
      auto& tc = cfg.train;
      t.get("batch_size", tc.batch_size);
      t.get("steps", tc.steps);
      t.get("learning_rate", tc.adam.learning_rate);
      t.get("beta1", tc.adam.beta1);
      t.get("beta2", tc.adam.beta2);
      t.get("components_per_sample", tc.components_per_sample);
      t.get("dilation_radius", tc.dilation_radius);
      t.get("disable", tc.disabled);
      t.get("threads", tc.threads);
      t.get_enum("blend", tc.blend, [](const std::string& s) {
        return match<BlendMode>(s, {{"raw", BlendMode::kRaw}, {"paste", BlendMode::kPaste}});
      });
      t.finish();
    }
    {
      auto d = root.child("data");
      d.get("kind", cfg.data.kind);
      d.get("root", cfg.data.root);
      d.get("toy_count", cfg.data.toy_count);
      d.get("toy_seed", cfg.data.toy_seed);
      d.get("test_count", cfg.data.test_count);
      d.finish();
    }
    {
      auto e = root.child("eval");
      e.get("components", cfg.eval.components);
      e.get("seed", cfg.eval.seed);
      e.get("max_pairs", cfg.eval.max_pairs);
      e.finish();
    }
    root.finish();
  }
  if (cfg.train.is_disabled("attention")) cfg.generator.use_attention = false;
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return cfg;
}

json config_to_json(const ExperimentConfig& c) {
  json layers = json::object();
  for (const auto& [loss, names] : c.backbone.loss_layers) layers[loss] = names;
  const auto& g = c.generator;
  const auto& t = c.train;
  return json{
      {"image_size", g.image_size},
      {"seed", t.seed},
      {"generator",
       {{"base_channels", g.base_channels},
        {"downsample_steps", g.downsample_steps},
        {"dilation_schedule", g.dilation_schedule},
        {"norm", to_string(g.norm)},
        {"use_attention", g.use_attention},
        {"fusion", to_string(g.fusion)},
        {"flow_polarity", to_string(g.polarity)},
        {"mask_anchor", g.mask_anchor == MaskAnchor::kCenter ? "center" : "top-left"},
        {"discriminator_channels", g.discriminator_channels},
        {"discriminator_stages", g.discriminator_stages}}},
      {"backbone",
       {{"kind", to_string(c.backbone.kind)},
        {"random_channels", c.backbone.random_channels},
        {"seed", c.backbone.seed},
        {"weights_path", c.backbone.weights_path},
        {"layers", layers}}},
      {"losses",
       {{"weights",
         {{"perceptual", t.weights.perceptual},
          {"style", t.weights.style},
          {"contextual", t.weights.contextual},
          {"pixel", t.weights.pixel},
          {"tv", t.weights.tv},
          {"adversarial", t.weights.adversarial}}},
        {"pixel_mode", t.pixel_mode == PixelLossMode::kIdentity ? "identity" : "feature"},
        {"contextual_bandwidth", t.contextual.bandwidth},
        {"contextual_epsilon", t.contextual.epsilon}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"steps", t.steps},
        {"learning_rate", t.adam.learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"components_per_sample", t.components_per_sample},
        {"dilation_radius", t.dilation_radius},
        {"disable", t.disabled},
        {"threads", t.threads},
        {"blend", to_string(t.blend)}}},
      {"data",
       {{"kind", c.data.kind},
        {"root", c.data.root},
        {"toy_count", c.data.toy_count},
        {"toy_seed", c.data.toy_seed},
        {"test_count", c.data.test_count}}},
      {"eval",
       {{"components", c.eval.components},
        {"seed", c.eval.seed},
        {"max_pairs", c.eval.max_pairs}}},
  };
}

// ---------------------------------------------------------------------------

namespace {

json scalar_to_json(const YAML::Node& node) {
  const auto& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  int64_t i;
  if (YAML::convert<int64_t>::decode(node, i)) return i;
  double d;
  if (YAML::convert<double>::decode(node, d)) return d;
  bool b;
  if (YAML::convert<bool>::decode(node, b)) return b;
  if (text == "~" || text == "null") return nullptr;
  return text;
}

json node_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(node_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (obj.contains(key)) throw FormatError("config: duplicate key '" + key + "'");
        obj[key] = node_to_json(kv.second);
      }
      return obj;
    }
  }
  return nullptr;
}

}  // namespace

json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw FormatError(std::string("config: YAML error: ") + e.what());
  }
}

ExperimentConfig parse_config_yaml(const std::string& text) {
  auto j = yaml_to_json(text);
  if (j.is_null()) j = json::object();
  return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_yaml(ss.str());
}

}  // namespace rface
