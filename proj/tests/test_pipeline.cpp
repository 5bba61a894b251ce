#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rface/errors.hpp"
#include "rface/evaluate.hpp"
#include "rface/trainer.hpp"

using namespace rface;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.generator.base_channels = 8;
  c.backbone.random_channels = {8, 8, 16};
  c.train.batch_size = 2;
  c.train.steps = 3;
  c.data.toy_count = 6;
  c.data.test_count = 3;
  return c;
}

std::map<std::string, torch::Tensor> snapshot(RFaceModel& m) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& kv : m->named_parameters()) out[kv.key()] = kv.value().detach().clone();
  return out;
}

bool generator_changed(RFaceModel& m, const std::map<std::string, torch::Tensor>& before) {
  for (const auto& kv : m->named_parameters()) {
    if (kv.key().rfind("discriminator", 0) == 0) continue;
    if (!torch::equal(kv.value(), before.at(kv.key()))) return true;
  }
  return false;
}

}  // namespace

TEST(Batch, MasksShareComponentsAndDilate) {
  auto data = synth_toy_dataset(3, 32, 1);
  auto batch = make_batch(data, {{0, 1}, {2, 0}}, {ComponentSet{Component::kEyes}, ComponentSet::all()}, 0);
  EXPECT_EQ(batch.source.sizes(), (std::vector<int64_t>{2, 3, 32, 32}));
  auto eyes = components_to_mask(data[0].labels, {Component::kEyes}).data();
  EXPECT_TRUE(torch::equal(batch.source_mask[0], eyes[0]));
  auto ref_all = components_to_mask(data[0].labels, ComponentSet::all()).data();
  EXPECT_TRUE(torch::equal(batch.reference_mask[1], ref_all[0]));
  auto dilated = component_keep_mask(data[0].labels, {Component::kEyes}, 2);
  EXPECT_GT((1 - dilated).sum().item<double>(), (1 - eyes).sum().item<double>());
}

TEST(Trainer, ReferencesDifferFromSources) {
  auto cfg = tiny_config();
  cfg.train.batch_size = 16;
  Trainer t(cfg, synth_toy_dataset(4, 32, 2));
  auto batch = t.sample_batch();
  for (int64_t b = 0; b < 16; ++b) {
    EXPECT_FALSE(torch::equal(batch.source[b], batch.reference[b]));
    EXPECT_GE(batch.components[static_cast<size_t>(b)].size(), 2);
  }
}

TEST(Trainer, StepUpdatesGeneratorNotBackbone) {
  Trainer t(tiny_config(), synth_toy_dataset(4, 32, 3));
  auto backbone_before = t.backbone().weights();
  std::vector<torch::Tensor> frozen;
  for (const auto& w : backbone_before) frozen.push_back(w.clone());
  auto before = snapshot(t.model());
  auto result = t.step();
  EXPECT_TRUE(generator_changed(t.model(), before));
  auto after = t.backbone().weights();
  for (size_t i = 0; i < frozen.size(); ++i) EXPECT_TRUE(torch::equal(after[i], frozen[i]));
  double sum = 0;
  for (double v : result.report.weighted) sum += v;
  EXPECT_EQ(result.report.total, sum);
  for (int k = 0; k < kNumLossTerms; ++k) {
    EXPECT_EQ(result.report.weighted[k], result.report.raw[k] * LossWeights{}.as_array()[k]);
  }
  EXPECT_EQ(result.report.step, 1);
}

TEST(Trainer, ZeroObjectiveLeavesGeneratorUnchanged) {
  auto cfg = tiny_config();
  cfg.train.weights = {0, 0, 0, 0, 0, 0};
  Trainer t(cfg, synth_toy_dataset(4, 32, 4));
  auto before = snapshot(t.model());
  auto r = t.step();
  EXPECT_FALSE(generator_changed(t.model(), before));
  EXPECT_EQ(r.report.total, 0.0);
  EXPECT_GT(r.report.raw[static_cast<int>(LossTerm::kPerceptual)], 0.0);
}

TEST(Trainer, DisabledTermsReportedButUnweighted) {
  auto cfg = tiny_config();
  cfg.train.disabled = {"style", "contextual"};
  Trainer t(cfg, synth_toy_dataset(4, 32, 5));
  auto r = t.step();
  EXPECT_EQ(r.report.weighted[static_cast<int>(LossTerm::kStyle)], 0.0);
  EXPECT_EQ(r.report.weighted[static_cast<int>(LossTerm::kContextual)], 0.0);
  EXPECT_GT(r.report.raw[static_cast<int>(LossTerm::kContextual)], 0.0);
}

TEST(Trainer, DeterministicRunsAndLog) {
  auto data = synth_toy_dataset(4, 32, 6);
  Trainer a(tiny_config(), data), b(tiny_config(), data);
  std::ostringstream la, lb;
  a.run(3, &la);
  b.run(3, &lb);
  EXPECT_EQ(la.str(), lb.str());
  auto pa = snapshot(a.model());
  for (const auto& kv : b.model()->named_parameters()) {
    EXPECT_TRUE(torch::equal(kv.value(), pa.at(kv.key()))) << kv.key();
  }
  std::istringstream lines(la.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto rep = LossReport::from_json_line(line);
    EXPECT_EQ(rep.step, ++n);
    double sum = 0;
    for (double v : rep.weighted) sum += v;
    EXPECT_EQ(rep.total, sum);
  }
  EXPECT_EQ(n, 3);
}

TEST(Trainer, RequiresTwoImages) {
  EXPECT_THROW(Trainer(tiny_config(), synth_toy_dataset(1, 32, 1)), ContractError);
}

TEST(Edit, HolesFollowSourceLabels) {
  auto cfg = tiny_config();
  RFaceModel model(cfg.generator);
  model->initialize(1);
  auto data = synth_toy_dataset(2, 32, 7);
  auto src = data[0].image.unsqueeze(0);
  auto labels = data[0].labels.unsqueeze(0);
  auto ref = data[1].image.unsqueeze(0);
  auto eyes = edit_images(model, src, labels, ref, {ComponentSet{Component::kEyes}}, 0, BlendMode::kPaste);
  auto expected = data[0].labels.ne(face_class::kLeftEye) & data[0].labels.ne(face_class::kRightEye);
  EXPECT_TRUE(torch::equal(eyes.mask[0][0], expected.to(torch::kFloat32)));
  auto all = edit_images(model, src, labels, ref, {ComponentSet::all()}, 0, BlendMode::kPaste);
  auto keep = torch::ones({32, 32}, torch::kBool);
  for (int id : ComponentSet::all().class_ids()) keep = keep & data[0].labels.ne(id);
  EXPECT_TRUE(torch::equal(all.mask[0][0], keep.to(torch::kFloat32)));
  EXPECT_TRUE(torch::equal(all.corrupted, src * all.mask));
  // Pasting keeps every non-hole source pixel.
  auto kept = keep.unsqueeze(0).expand({3, 32, 32});
  EXPECT_TRUE(torch::equal(all.composed[0].masked_select(kept), src[0].masked_select(kept)));
  auto again = edit_images(model, src, labels, ref, {ComponentSet::all()}, 0, BlendMode::kPaste);
  EXPECT_TRUE(torch::equal(again.composed, all.composed));
  EXPECT_THROW(edit_images(model, src, labels, ref, {ComponentSet{}}, 0, BlendMode::kRaw), ContractError);
}

TEST(Evaluate, PairsAreDeterministicWithDistinctReferences) {
  auto cfg = tiny_config();
  auto a = make_eval_pairs(7, cfg);
  auto b = make_eval_pairs(7, cfg);
  ASSERT_EQ(a.size(), 7u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].source, i);
    EXPECT_NE(a[i].reference, i);
    EXPECT_EQ(a[i].reference, b[i].reference);
    EXPECT_EQ(a[i].components, ComponentSet::all());
  }
  cfg.eval.max_pairs = 3;
  cfg.eval.components = "random";
  auto c = make_eval_pairs(7, cfg);
  EXPECT_EQ(c.size(), 3u);
  for (const auto& p : c) EXPECT_GE(p.components.size(), 2);
  EXPECT_THROW(make_eval_pairs(1, cfg), ContractError);
}

TEST(Evaluate, MetricsTableRoundTrip) {
  std::vector<MetricsRow> rows{{"r-FACE (full)", 1.25, 0.875}, {"w/o attention", 2.5, 0.5}};
  const auto text = format_metrics_table(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "method\tFID\tMS-SSIM");
  auto back = parse_metrics_table(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].label, "w/o attention");
  EXPECT_DOUBLE_EQ(back[0].fid, 1.25);
  EXPECT_DOUBLE_EQ(back[0].ms_ssim, 0.875);
  EXPECT_THROW(parse_metrics_table("name\tscore\n"), FormatError);
}

TEST(Evaluate, ModelMetricsAreFinite) {
  auto cfg = tiny_config();
  RFaceModel model(cfg.generator);
  model->initialize(2);
  auto test = synth_toy_dataset(4, 32, 8);
  Backbone embedder(cfg.backbone);
  auto row = evaluate_model(model, embedder, test, cfg, "untrained");
  EXPECT_EQ(row.label, "untrained");
  EXPECT_TRUE(std::isfinite(row.fid));
  EXPECT_GE(row.fid, 0.0);
  EXPECT_GT(row.ms_ssim, 0.0);
  EXPECT_LE(row.ms_ssim, 1.0);
  auto iou = toy_shape_iou(model, test, cfg);
  EXPECT_GE(iou.iou, 0.0);
  EXPECT_LE(iou.iou, 1.0);
  EXPECT_LE(iou.intersection, iou.union_size);
}

TEST(Ablation, VariantsAndGridFile) {
  auto variants = default_ablation_variants();
  ASSERT_EQ(variants.size(), 5u);
  EXPECT_EQ(variants[0].disable, "");
  auto base = tiny_config();
  auto no_att = apply_variant(base, variants[1]);
  EXPECT_FALSE(no_att.generator.use_attention);
  EXPECT_TRUE(no_att.train.is_disabled("attention"));
  auto no_style = apply_variant(base, variants[3]);
  EXPECT_EQ(no_style.train.effective_weights().style, 0.0);
  EXPECT_TRUE(no_style.generator.use_attention);
  EXPECT_THROW(apply_variant(base, {"bad", "dropout"}), ContractError);

  const auto dir = fs::temp_directory_path() / "rface_grid";
  fs::create_directories(dir);
  std::ofstream(dir / "base.yaml") << "generator: {base_channels: 8}\ndata: {toy_count: 6, test_count: 3}\n";
  std::ofstream(dir / "grid.yaml") << "config: base.yaml\nsteps: 7\nvariants:\n"
                                      "  - {label: full, disable: none}\n"
                                      "  - {label: no-tv, disable: tv}\n";
  auto grid = load_ablation_grid(dir / "grid.yaml");
  EXPECT_EQ(grid.base.train.steps, 7);
  EXPECT_EQ(grid.base.generator.base_channels, 8);
  ASSERT_EQ(grid.variants.size(), 2u);
  EXPECT_EQ(grid.variants[1].disable, "tv");
  std::ofstream(dir / "grid.yaml", std::ios::trunc) << "config: base.yaml\nextra: 1\n";
  EXPECT_THROW(load_ablation_grid(dir / "grid.yaml"), FormatError);
  fs::remove_all(dir);
}

TEST(Ablation, RunsEveryVariant) {
  AblationGrid grid{tiny_config(), default_ablation_variants()};
  grid.base.train.steps = 1;
  auto data = load_experiment_data(grid.base);
  EXPECT_EQ(data.train.size(), 3u);
  EXPECT_EQ(data.test.size(), 3u);
  auto rows = run_ablation(grid, data);
  ASSERT_EQ(rows.size(), 5u);
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].label, grid.variants[i].label);
    EXPECT_TRUE(std::isfinite(rows[i].fid));
  }
}
