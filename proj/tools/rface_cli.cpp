#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "rface/checkpoint.hpp"
#include "rface/config.hpp"
#include "rface/dataset.hpp"
#include "rface/evaluate.hpp"
#include "rface/image_io.hpp"
#include "rface/trainer.hpp"

namespace fs = std::filesystem;
using namespace rface;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct PrepareArgs {
  std::string root;
  std::string out;
  int size = 256;
  int64_t toy = 0;
  uint64_t toy_seed = 1;
  int64_t test_count = kDefaultTestCount;
  int64_t limit = 0;
  std::string image_dir;
  std::string mask_dir;
};

CelebAMaskLayout layout_for(const PrepareArgs& a) {
  auto layout = detect_celebamask_layout(a.root);
  if (!a.image_dir.empty()) layout.image_dir = a.image_dir;
  if (!a.mask_dir.empty()) layout.mask_dir = a.mask_dir;
  return layout;
}

int run_prepare(const PrepareArgs& a) {
  FaceDataset data;
  if (a.toy > 0) {
    data = synth_toy_dataset(a.toy, a.size, a.toy_seed);
  } else {
    if (a.root.empty()) throw std::invalid_argument("prepare-data: --root or --toy is required");
    data = load_celebamask_hq(a.root, a.size, layout_for(a), a.limit);
  }
  std::vector<std::string> ids;
  for (const auto& s : data) ids.push_back(s.id);
  const auto split = split_ids(ids, a.test_count);
  const fs::path out = a.out.empty() ? fs::path("prepared") : fs::path(a.out);
  write_prepared(out, data, split);
  std::cout << "prepared " << data.size() << " images (" << split.train.size() << " train, "
            << split.test.size() << " test) at " << a.size << "px in " << out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
  int64_t steps = -1;
};

int run_train(const TrainArgs& a) {
  auto config = load_config(a.config);
  if (a.steps >= 0) config.train.steps = a.steps;
  const auto data = load_experiment_data(config);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(config).dump(2) + "\n");
  Trainer trainer(config, data.train);
  std::ofstream log(out / "train_log.jsonl");
  const auto reports = trainer.run(config.train.steps, &log);
  trainer.save(out / "checkpoint.bin");
  if (!reports.empty()) {
    std::cout << "trained " << reports.size() << " steps, final generator loss "
              << reports.back().total << "\n";
  }
  std::cout << "checkpoint: " << (out / "checkpoint.bin") << "\n";
  return 0;
}

struct EditArgs {
  std::string source;
  std::string source_labels;
  std::string reference;
  std::string components = "eyes,nose,mouth";
  std::string checkpoint;
  std::string out;
  std::string blend;
  int dilation = -1;
};

int run_edit(const EditArgs& a) {
  auto ckpt = load_checkpoint(a.checkpoint);
  const auto& cfg = ckpt.config;
  const int size = static_cast<int>(cfg.generator.image_size);
  fs::path labels_path = a.source_labels;
  if (labels_path.empty()) {
    const fs::path src(a.source);
    labels_path = src.parent_path() / (src.stem().string() + "_label.png");
  }
  const auto source = read_rgb(a.source, size).unsqueeze(0);
  const auto labels = read_gray_u8(labels_path, size).to(torch::kLong).unsqueeze(0);
  const auto reference = read_rgb(a.reference, size).unsqueeze(0);
  const auto blend = a.blend.empty() ? cfg.train.blend
                     : a.blend == "raw" ? BlendMode::kRaw
                     : a.blend == "paste"
                         ? BlendMode::kPaste
                         : throw std::invalid_argument("--blend must be raw or paste");
  const int radius = a.dilation >= 0 ? a.dilation : cfg.train.dilation_radius;
  const auto components = ComponentSet::parse(a.components);
  const auto edit = edit_images(ckpt.model, source, labels, reference, {components}, radius, blend);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_rgb(out, edit.composed[0]);
  const auto grid_path = out.parent_path() / (out.stem().string() + "_grid" + out.extension().string());
  write_rgb(grid_path, hconcat({source[0], reference[0], edit.corrupted[0], edit.composed[0]}));
  std::cout << "edited " << components.to_string() << ": " << out << " (grid " << grid_path << ")\n";
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string split = "test";
  std::string out_table;
  std::string label = "r-FACE";
  bool shape_iou = false;
};

int run_evaluate(const EvaluateArgs& a) {
  auto ckpt = load_checkpoint(a.checkpoint);
  const auto data = load_experiment_data(ckpt.config);
  const auto& images = a.split == "train" ? data.train : data.test;
  const Backbone embedder(ckpt.config.backbone);
  const auto row = evaluate_model(ckpt.model, embedder, images, ckpt.config, a.label);
  const auto table = format_metrics_table({row});
  if (!a.out_table.empty()) write_text(a.out_table, table);
  std::cout << table;
  if (a.shape_iou) {
    const auto iou = toy_shape_iou(ckpt.model, images, ckpt.config);
    std::cout << "shape IoU " << iou.iou << " (" << iou.intersection << "/" << iou.union_size
              << ")\n";
  }
  return 0;
}

struct AblateArgs {
  std::string grid;
  std::string out_table;
  int64_t steps = -1;
};

int run_ablate(const AblateArgs& a) {
  auto grid = load_ablation_grid(a.grid);
  if (a.steps >= 0) grid.base.train.steps = a.steps;
  const auto data = load_experiment_data(grid.base);
  const auto rows = run_ablation(grid, data, &std::cerr);
  const auto table = format_metrics_table(rows);
  if (!a.out_table.empty()) write_text(a.out_table, table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-guided face component editing"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare-data", "Resize a CelebAMask-HQ tree (or synthesize toy faces) into a prepared dataset");
  p->add_option("--root", prep.root, "CelebAMask-HQ root");
  p->add_option("--size", prep.size, "Output image size")->capture_default_str();
  p->add_option("--out", prep.out, "Output directory")->capture_default_str();
  p->add_option("--toy", prep.toy, "Synthesize this many toy faces instead");
  p->add_option("--toy-seed", prep.toy_seed)->capture_default_str();
  p->add_option("--test-count", prep.test_count, "Held-out images")->capture_default_str();
  p->add_option("--limit", prep.limit, "Load at most this many images (0 = all)");
  p->add_option("--image-dir", prep.image_dir, "Image subdirectory of the root");
  p->add_option("--mask-dir", prep.mask_dir, "Mask subdirectory of the root (searched recursively)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model from a config file");
  t->add_option("--config", train.config)->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--steps", train.steps, "Override train.steps");

  EditArgs edit;
  auto* e = app.add_subcommand("edit", "Edit face components of a source image after a reference");
  e->add_option("--source", edit.source)->required()->check(CLI::ExistingFile);
  e->add_option("--source-labels", edit.source_labels, "Label map (default <source stem>_label.png)");
  e->add_option("--reference", edit.reference)->required()->check(CLI::ExistingFile);
  e->add_option("--components", edit.components)->capture_default_str();
  e->add_option("--checkpoint", edit.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--out", edit.out, "Output PNG")->required();
  e->add_option("--blend", edit.blend, "raw | paste (default from config)");
  e->add_option("--dilation", edit.dilation, "Mask dilation radius (default from config)");

  EvaluateArgs ev;
  auto* v = app.add_subcommand("evaluate", "FID and MS-SSIM of a checkpoint on a split");
  v->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  v->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  v->add_option("--out-table", ev.out_table);
  v->add_option("--label", ev.label)->capture_default_str();
  v->add_flag("--shape-iou", ev.shape_iou, "Also report hole-region component IoU (toy data)");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Train and evaluate every variant of an ablation grid");
  b->add_option("--grid", ab.grid)->required()->check(CLI::ExistingFile);
  b->add_option("--out-table", ab.out_table);
  b->add_option("--steps", ab.steps, "Override the grid's training steps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (p->parsed()) return run_prepare(prep);
    if (t->parsed()) return run_train(train);
    if (e->parsed()) return run_edit(edit);
    if (v->parsed()) return run_evaluate(ev);
    if (b->parsed()) return run_ablate(ab);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
