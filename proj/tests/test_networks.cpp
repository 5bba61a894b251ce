#include <gtest/gtest.h>

#include "rface/errors.hpp"
#include "rface/featnet.hpp"
#include "rface/losses.hpp"
#include "rface/networks.hpp"

using namespace rface;

namespace {

GeneratorConfig small_config(int64_t size = 32, int64_t base = 8, int64_t steps = 2) {
  GeneratorConfig c;
  c.image_size = size;
  c.base_channels = base;
  c.downsample_steps = steps;
  return c;
}

RFaceModel make_model(const GeneratorConfig& c, uint64_t seed = 1) {
  RFaceModel m(c);
  m->initialize(seed);
  return m;
}

torch::Tensor rand_image(int64_t b, int64_t size, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({b, 3, size, size}, gen) * 2 - 1;
}

torch::Tensor box_mask(int64_t b, int64_t size) {
  auto m = torch::ones({b, 1, size, size});
  m.index_put_({torch::indexing::Slice(), 0, torch::indexing::Slice(size / 4, size / 2),
                torch::indexing::Slice(size / 4, 3 * size / 4)},
               0.0);
  return m;
}

}  // namespace

TEST(Networks, ConfigValidation) {
  auto c = small_config();
  c.dilation_schedule = {1, 2, 4};
  EXPECT_THROW(c.validate(), ContractError);
  c = small_config(30);
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_NO_THROW(small_config().validate());
}

TEST(Networks, ReferenceEncoderShape) {
  auto model = make_model(small_config(32, 64, 2));
  torch::NoGradGuard ng;
  auto fr = encode_reference(model, rand_image(1, 32, 1));
  EXPECT_EQ(fr.sizes(), (std::vector<int64_t>{1, 256, 8, 8}));
  EXPECT_THROW(encode_reference(model, rand_image(1, 64, 1)), ContractError);
}

TEST(Networks, EncodersDeterministicAndDistinct) {
  auto model = make_model(small_config());
  torch::NoGradGuard ng;
  auto x = rand_image(2, 32, 2);
  auto a = encode_reference(model, x);
  EXPECT_TRUE(torch::equal(a, encode_reference(model, x)));
  auto g = model->generator->encode(x, torch::ones({2, 1, 32, 32}));
  EXPECT_EQ(g.sizes(), a.sizes());
  EXPECT_GT((g - a).abs().max().item<double>(), 0.0);
}

TEST(Networks, InitializationIsSeeded) {
  auto a = make_model(small_config(), 5);
  auto b = make_model(small_config(), 5);
  auto c = make_model(small_config(), 6);
  auto pa = a->named_parameters(), pb = b->named_parameters(), pc = c->named_parameters();
  bool any_diff = false;
  for (const auto& kv : pa) {
    EXPECT_TRUE(torch::equal(kv.value(), pb[kv.key()])) << kv.key();
    any_diff = any_diff || !torch::equal(kv.value(), pc[kv.key()]);
  }
  EXPECT_TRUE(any_diff);
  auto w = a->generator->encoder->parameters()[0];
  EXPECT_NEAR(w.std().item<double>(), 0.02, 0.004);
}

TEST(Networks, GenerateShapeRangeDeterminism) {
  auto model = make_model(small_config());
  torch::NoGradGuard ng;
  model->eval();
  auto src = rand_image(2, 32, 3);
  auto mask = box_mask(2, 32);
  auto fr = encode_reference(model, rand_image(2, 32, 4));
  auto out = generate(model, src * mask, mask, fr);
  EXPECT_EQ(out.sizes(), src.sizes());
  EXPECT_LE(out.abs().max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(out, generate(model, src * mask, mask, fr)));
  EXPECT_THROW(generate(model, src * mask, mask, fr.index({torch::indexing::Slice(), torch::indexing::Slice(),
                                                            torch::indexing::Slice(0, 4)})),
               ContractError);
}

TEST(Networks, ShapeRoundTripSweep) {
  torch::NoGradGuard ng;
  for (int64_t size : {32, 64, 256}) {
    for (int64_t steps : {2, 3}) {
      auto c = small_config(size, 4, steps);
      auto model = make_model(c);
      auto src = rand_image(1, size, 7);
      auto mask = box_mask(1, size);
      auto fr = encode_reference(model, src);
      EXPECT_EQ(fr.size(2), size >> steps);
      auto out = generate(model, src * mask, mask, fr);
      EXPECT_EQ(out.sizes(), src.sizes()) << size << " " << steps;
    }
  }
}

TEST(Networks, DiscriminatorScoreMap) {
  auto model = make_model(small_config());
  torch::NoGradGuard ng;
  auto scores = discriminate(model, rand_image(2, 32, 8));
  EXPECT_EQ(scores.sizes(), (std::vector<int64_t>{2, 1, 4, 4}));
  EXPECT_TRUE(torch::isfinite(scores).all().item<bool>());
  EXPECT_THROW(discriminate(model, rand_image(1, 16, 8)), ContractError);
}

TEST(Networks, ComposeOutput) {
  auto g = rand_image(1, 8, 9);
  auto s = rand_image(1, 8, 10);
  EXPECT_TRUE(torch::equal(compose_output(g, s, torch::ones({1, 1, 8, 8}), BlendMode::kPaste), s));
  EXPECT_TRUE(torch::equal(compose_output(g, s, torch::zeros({1, 1, 8, 8}), BlendMode::kPaste), g));
  EXPECT_TRUE(torch::equal(compose_output(g, s, box_mask(1, 8), BlendMode::kRaw), g));
  auto mask = box_mask(1, 8);
  auto out = compose_output(g, s, mask, BlendMode::kPaste);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool keep = mask[0][0][y][x].item<float>() == 1.0f;
      for (int c = 0; c < 3; ++c) {
        ASSERT_EQ(out[0][c][y][x].item<float>(), (keep ? s : g)[0][c][y][x].item<float>());
      }
    }
}

TEST(Networks, WithoutAttentionConcatenates) {
  auto c = small_config();
  c.use_attention = false;
  auto model = make_model(c);
  EXPECT_TRUE(model->generator->attention.is_empty());
  ASSERT_FALSE(model->generator->concat_projection.is_empty());
  EXPECT_EQ(model->generator->concat_projection->weight.size(1), 2 * c.bottleneck_channels());
  torch::NoGradGuard ng;
  auto src = rand_image(1, 32, 11);
  auto out = generate(model, src, box_mask(1, 32), encode_reference(model, src));
  EXPECT_EQ(out.sizes(), src.sizes());
}

TEST(Networks, ParametersNotShared) {
  auto model = make_model(small_config());
  torch::NoGradGuard ng;
  auto x = rand_image(1, 32, 12);
  auto mask = box_mask(1, 32);
  auto before = model->generator->encode(x, mask);
  for (auto& p : model->reference_encoder->parameters()) p.add_(0.5);
  EXPECT_TRUE(torch::equal(model->generator->encode(x, mask), before));
}

TEST(Networks, EveryGeneratorParameterReceivesGradient) {
  for (bool attention : {true, false}) {
    auto c = small_config(32, 8, 2);
    c.use_attention = attention;
    auto model = make_model(c, 3);
    Backbone backbone{BackboneSpec{}};
    auto src = rand_image(2, 32, 13);
    auto ref = rand_image(2, 32, 14);
    auto mask = box_mask(2, 32);
    auto corrupted = src * mask;
    auto gen = generate(model, corrupted, mask, encode_reference(model, ref));
    std::mt19937_64 rng(0);
    std::array<torch::Tensor, kNumLossTerms> terms{
        perceptual_loss(gen, src, backbone),
        style_loss(gen, corrupted, mask, backbone),
        contextual_loss(gen, mask, ref, mask, backbone, rng),
        pixel_loss(gen, src, mask),
        tv_loss(gen),
        lsgan_generator_loss(discriminate(model, gen))};
    weighted_objective(terms, LossWeights{}).backward();
    for (const auto& kv : model->named_parameters()) {
      if (kv.key().rfind("discriminator", 0) == 0) continue;
      ASSERT_TRUE(kv.value().grad().defined()) << kv.key();
      EXPECT_GT(kv.value().grad().abs().sum().item<double>(), 0.0) << kv.key();
    }
  }
}
