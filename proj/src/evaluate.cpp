#include "rface/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rface/errors.hpp"
#include "rface/metrics.hpp"
#include "rface/trainer.hpp"

namespace rface {

namespace fs = std::filesystem;

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  const auto size = config.generator.image_size;
  const auto& dc = config.data;
  FaceDataset all;
  DatasetSplit split;
  if (dc.kind == "toy") {
    all = synth_toy_dataset(dc.toy_count, size, dc.toy_seed);
    std::vector<std::string> ids;
    for (const auto& s : all) ids.push_back(s.id);
    split = split_ids(ids, dc.test_count);
  } else if (dc.kind == "prepared") {
    all = load_prepared(dc.root, &split);
    for (const auto& s : all) {
      if (s.image.size(1) != size || s.image.size(2) != size) {
        throw FormatError("prepared dataset " + dc.root + " does not match image_size " +
                          std::to_string(size));
      }
    }
  } else {
    all = load_celebamask_hq(dc.root, static_cast<int>(size), detect_celebamask_layout(dc.root));
    std::vector<std::string> ids;
    for (const auto& s : all) ids.push_back(s.id);
    split = split_ids(ids, dc.test_count);
  }
  return {select(all, split.train), select(all, split.test)};
}

EditOutput edit_images(RFaceModel& model, const torch::Tensor& source,
                       const torch::Tensor& source_labels, const torch::Tensor& reference,
                       const std::vector<ComponentSet>& components, int dilation_radius,
                       BlendMode blend) {
  if (source.dim() != 4 || static_cast<size_t>(source.size(0)) != components.size()) {
    throw ContractError("edit_images: need one component set per source image");
  }
  std::vector<torch::Tensor> masks;
  for (int64_t b = 0; b < source.size(0); ++b) {
    if (components[static_cast<size_t>(b)].empty()) {
      throw ContractError("edit_images: component set must not be empty");
    }
    masks.push_back(
        component_keep_mask(source_labels[b], components[static_cast<size_t>(b)], dilation_radius));
  }
  torch::NoGradGuard no_grad;
  model->eval();
  EditOutput out;
  out.mask = torch::cat(masks);
  out.corrupted = apply_keep_mask(source, out.mask);
  auto features = encode_reference(model, reference);
  out.raw = generate(model, out.corrupted, out.mask, features);
  out.composed = compose_output(out.raw, source, out.mask, blend);
  return out;
}

std::vector<EvalPair> make_eval_pairs(size_t test_size, const ExperimentConfig& config) {
  if (test_size < 2) throw ContractError("evaluation needs at least two test images");
  std::mt19937_64 rng(config.eval.seed);
  const bool random = config.eval.components == "random";
  const auto fixed = random ? ComponentSet{} : ComponentSet::parse(config.eval.components);
  size_t count = test_size;
  if (config.eval.max_pairs > 0) count = std::min(count, static_cast<size_t>(config.eval.max_pairs));
  std::uniform_int_distribution<size_t> pick_other(0, test_size - 2);
  std::vector<EvalPair> pairs;
  for (size_t i = 0; i < count; ++i) {
    auto r = pick_other(rng);
    if (r >= i) ++r;
    auto comps = random ? sample_component_subset(rng, config.train.components_per_sample) : fixed;
    pairs.push_back({i, r, comps});
  }
  return pairs;
}

namespace {

constexpr int64_t kEvalChunk = 16;

struct EditedSet {
  torch::Tensor sources;    // N x 3 x S x S, [-1, 1]
  torch::Tensor composed;   // N x 3 x S x S
  torch::Tensor masks;      // N x 1 x S x S
  torch::Tensor ref_labels; // N x S x S
};

EditedSet run_pairs(RFaceModel& model, const FaceDataset& test, const std::vector<EvalPair>& pairs,
                    const ExperimentConfig& config, BlendMode blend) {
  std::vector<torch::Tensor> sources, composed, masks, ref_labels;
  for (size_t start = 0; start < pairs.size(); start += kEvalChunk) {
    const auto end = std::min(pairs.size(), start + kEvalChunk);
    std::vector<torch::Tensor> src, lab, ref;
    std::vector<ComponentSet> comps;
    for (size_t i = start; i < end; ++i) {
      src.push_back(test[pairs[i].source].image);
      lab.push_back(test[pairs[i].source].labels);
      ref.push_back(test[pairs[i].reference].image);
      ref_labels.push_back(test[pairs[i].reference].labels);
      comps.push_back(pairs[i].components);
    }
    auto s = torch::stack(src);
    auto out = edit_images(model, s, torch::stack(lab), torch::stack(ref), comps,
                           config.train.dilation_radius, blend);
    sources.push_back(s);
    composed.push_back(out.composed);
    masks.push_back(out.mask);
  }
  return {torch::cat(sources), torch::cat(composed), torch::cat(masks), torch::stack(ref_labels)};
}

}  // namespace

MetricsRow evaluate_model(RFaceModel& model, const Backbone& embedder_backbone,
                          const FaceDataset& test, const ExperimentConfig& config,
                          const std::string& label) {
  const auto pairs = make_eval_pairs(test.size(), config);
  auto edited = run_pairs(model, test, pairs, config, config.train.blend);
  auto real01 = (edited.sources + 1.0) * 0.5;
  auto fake01 = ((edited.composed + 1.0) * 0.5).clamp(0.0, 1.0);

  MsSsimOptions opts;
  opts.levels = ms_ssim_max_levels(config.generator.image_size, opts.window);
  if (opts.levels == 0) throw ContractError("evaluate: images too small for MS-SSIM");

  const auto embed = backbone_embedder(embedder_backbone);
  MetricsRow row;
  row.label = label;
  row.ms_ssim = ms_ssim(fake01, real01, opts);
  row.fid = frechet_distance(embed_stats(real01, embed), embed_stats(fake01, embed));
  return row;
}

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "method\tFID\tMS-SSIM\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\n", r.fid, r.ms_ssim);
    os << r.label << buf;
  }
  return os.str();
}

std::vector<MetricsRow> parse_metrics_table(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "method\tFID\tMS-SSIM") {
    throw FormatError("metrics table: bad header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw FormatError("metrics table: malformed row: " + line);
    }
    rows.push_back({line.substr(0, t1), std::stod(line.substr(t1 + 1, t2 - t1 - 1)),
                    std::stod(line.substr(t2 + 1))});
  }
  return rows;
}

ShapeIou toy_shape_iou(RFaceModel& model, const FaceDataset& test, const ExperimentConfig& config) {
  const auto pairs = make_eval_pairs(test.size(), config);
  auto edited = run_pairs(model, test, pairs, config, BlendMode::kPaste);
  ShapeIou out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto b = static_cast<int64_t>(i);
    auto hole = edited.masks[b][0].lt(0.5);
    auto guess = toy_palette_components(edited.composed[b]);
    const auto& ref = edited.ref_labels[b];
    for (auto c : pairs[i].components.components()) {
      auto generated = hole.logical_and(guess.eq(1 + static_cast<int>(c)));
      auto reference = torch::zeros_like(hole);
      for (int id : ComponentSet{c}.class_ids()) reference = reference.logical_or(ref.eq(id));
      reference = reference.logical_and(hole);
      out.intersection += generated.logical_and(reference).sum().item<int64_t>();
      out.union_size += generated.logical_or(reference).sum().item<int64_t>();
    }
  }
  out.iou = out.union_size > 0 ? static_cast<double>(out.intersection) / out.union_size : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<AblationVariant> default_ablation_variants() {
  return {{"r-FACE (full)", ""},
          {"w/o attention", "attention"},
          {"w/o contextual loss", "contextual"},
          {"w/o style loss", "style"},
          {"w/o perceptual loss", "perceptual"}};
}

ExperimentConfig apply_variant(const ExperimentConfig& base, const AblationVariant& variant) {
  ExperimentConfig cfg = base;
  if (variant.disable.empty()) return cfg;
  const bool is_loss = std::find(kLossTermNames.begin(), kLossTermNames.end(), variant.disable) !=
                       kLossTermNames.end();
  if (variant.disable != "attention" && !is_loss) {
    throw ContractError("ablation variant '" + variant.label + "': unknown mechanism '" +
                        variant.disable + "'");
  }
  if (!cfg.train.is_disabled(variant.disable)) cfg.train.disabled.push_back(variant.disable);
  if (variant.disable == "attention") cfg.generator.use_attention = false;
  cfg.validate();
  return cfg;
}

AblationGrid load_ablation_grid(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw FormatError("ablation grid " + path.string() + ": " + e.what());
  }
  AblationGrid grid;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "config" && key != "steps" && key != "variants") {
      throw FormatError("ablation grid: unknown key '" + key + "'");
    }
  }
  if (!root["config"]) throw FormatError("ablation grid: missing 'config'");
  auto config_path = fs::path(root["config"].as<std::string>());
  if (config_path.is_relative()) config_path = path.parent_path() / config_path;
  grid.base = load_config(config_path);
  if (root["steps"]) grid.base.train.steps = root["steps"].as<int64_t>();
  if (root["variants"]) {
    for (const auto& v : root["variants"]) {
      AblationVariant variant;
      variant.label = v["label"].as<std::string>();
      const auto disable = v["disable"] ? v["disable"].as<std::string>() : std::string("none");
      variant.disable = disable == "none" ? "" : disable;
      grid.variants.push_back(variant);
    }
  } else {
    grid.variants = default_ablation_variants();
  }
  for (const auto& v : grid.variants) apply_variant(grid.base, v);
  return grid;
}

std::vector<MetricsRow> run_ablation(const AblationGrid& grid, const ExperimentData& data,
                                     std::ostream* progress) {
  const Backbone embedder(grid.base.backbone);
  std::vector<MetricsRow> rows;
  for (const auto& variant : grid.variants) {
    const auto cfg = apply_variant(grid.base, variant);
    Trainer trainer(cfg, data.train);
    trainer.run(cfg.train.steps);
    rows.push_back(evaluate_model(trainer.model(), embedder, data.test, cfg, variant.label));
    if (progress != nullptr) {
      *progress << "[ablate] " << variant.label << ": FID " << rows.back().fid << ", MS-SSIM "
                << rows.back().ms_ssim << std::endl;
    }
  }
  return rows;
}

}  // namespace rface
