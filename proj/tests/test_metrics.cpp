#include <gtest/gtest.h>

#include <cmath>

#include "rface/errors.hpp"
#include "rface/metrics.hpp"
#include "test_support.hpp"

using namespace rface;
using rface::testing::f64;

namespace {

// Single-window SSIM over an 11 x 11 patch with Gaussian weights, one channel.
double ssim_window_oracle(const torch::Tensor& x, const torch::Tensor& y) {
  std::vector<double> g(11);
  double z = 0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    z += g[i];
  }
  for (auto& v : g) v /= z;
  double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
  for (int a = 0; a < 11; ++a)
    for (int b = 0; b < 11; ++b) {
      const double w = g[a] * g[b];
      const double xv = x[a][b].item<double>(), yv = y[a][b].item<double>();
      mx += w * xv;
      my += w * yv;
      sxx += w * xv * xv;
      syy += w * yv * yv;
      sxy += w * xv * yv;
    }
  sxx -= mx * mx;
  syy -= my * my;
  sxy -= mx * my;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double cs = (2 * sxy + c2) / (sxx + syy + c2);
  return std::max(0.0, (2 * mx * my + c1) / (mx * mx + my * my + c1) * cs);
}

torch::Tensor structured(int64_t size) {
  auto r = torch::arange(size, f64()) / static_cast<double>(size);
  auto yy = r.view({size, 1}), xx = r.view({1, size});
  auto img = 0.5 + 0.25 * torch::sin(12 * xx) * torch::cos(9 * yy) + 0.2 * (xx - yy);
  return img.clamp(0, 1).view({1, 1, size, size}).expand({1, 3, size, size}).contiguous();
}

}  // namespace

TEST(MsSsim, SelfSimilarityAtFiveLevels) {
  MsSsimOptions opts;
  EXPECT_EQ(ms_ssim_min_size(opts), 176);
  auto x = structured(176);
  EXPECT_NEAR(ms_ssim(x, x, opts), 1.0, 1e-6);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  auto noise = torch::rand({2, 3, 180, 180}, gen, f64());
  EXPECT_NEAR(ms_ssim(noise, noise, opts), 1.0, 1e-6);
}

TEST(MsSsim, EqualConstantsAndInversion) {
  MsSsimOptions opts;
  auto c = torch::full({1, 3, 176, 176}, 0.37, f64());
  EXPECT_NEAR(ms_ssim(c, c, opts), 1.0, 1e-6);
  auto x = structured(176);
  const double inverted = ms_ssim(x, 1.0 - x, opts);
  EXPECT_LT(inverted, ms_ssim(x, x, opts));
  EXPECT_GE(inverted, 0.0);
}

TEST(MsSsim, Symmetric) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  auto x = structured(176);
  auto y = (x + 0.1 * torch::randn(x.sizes(), gen, f64())).clamp(0, 1);
  EXPECT_NEAR(ms_ssim(x, y), ms_ssim(y, x), 1e-6);
  EXPECT_LT(ms_ssim(x, y), 1.0);
}

TEST(MsSsim, SingleScaleMatchesWindowOracle) {
  MsSsimOptions opts;
  opts.levels = 1;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(7);
  auto x = torch::rand({1, 1, 11, 11}, gen, f64());
  auto y = (0.7 * x + 0.3 * torch::rand({1, 1, 11, 11}, gen, f64()));
  EXPECT_NEAR(ms_ssim(x, y, opts), ssim_window_oracle(x[0][0], y[0][0]), 1e-10);
}

TEST(MsSsim, SizeLimits) {
  MsSsimOptions opts;
  try {
    ms_ssim(torch::rand({1, 3, 64, 64}), torch::rand({1, 3, 64, 64}), opts);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("176"), std::string::npos);
  }
  EXPECT_EQ(ms_ssim_max_levels(32), 2);
  EXPECT_EQ(ms_ssim_max_levels(256), 5);
  EXPECT_EQ(ms_ssim_max_levels(10), 0);
  opts.levels = ms_ssim_max_levels(32);
  auto x = structured(32);
  EXPECT_NEAR(ms_ssim(x, x, opts), 1.0, 1e-6);
}

TEST(EmbedStats, HandComputedTwoPixelImages) {
  // Images of 1 x 1 x 1 x 2 -> flattened to 2-vectors.
  auto imgs = torch::tensor({0.0, 1.0, 0.5, 0.5, 1.0, 0.0}, f64()).view({3, 1, 1, 2});
  auto s = embed_stats(imgs, flatten_embedder());
  EXPECT_EQ(s.count, 3);
  EXPECT_TRUE(torch::allclose(s.mean, torch::tensor({0.5, 0.5}, f64())));
  // Deviations (-.5,.5),(0,0),(.5,-.5): unbiased cov = [[.25,-.25],[-.25,.25]].
  EXPECT_TRUE(torch::allclose(s.covariance, torch::tensor({0.25, -0.25, -0.25, 0.25}, f64()).view({2, 2})));
  auto same = embed_stats(torch::ones({2, 1, 1, 2}, f64()), flatten_embedder());
  EXPECT_TRUE(torch::equal(same.covariance, torch::zeros({2, 2}, f64())));
  auto flipped = embed_stats(imgs.flip(0), flatten_embedder());
  EXPECT_TRUE(torch::allclose(flipped.mean, s.mean, 0, 1e-15));
  EXPECT_TRUE(torch::allclose(flipped.covariance, s.covariance, 0, 1e-15));
  EXPECT_THROW(embed_stats(torch::ones({1, 1, 1, 2}), flatten_embedder()), ContractError);
}

TEST(Frechet, SelfIsZeroAndSymmetric) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(9);
  auto a = stats_from_embeddings(torch::randn({40, 6}, gen, f64()));
  auto b = stats_from_embeddings(torch::randn({40, 6}, gen, f64()) * 1.5 + 0.2);
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-6);
  EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-9);
  EXPECT_GT(frechet_distance(a, b), 0.0);
}

TEST(Frechet, UnivariateClosedForm) {
  DistributionStats a{torch::tensor({0.0}, f64()), torch::tensor({1.0}, f64()).view({1, 1}), 2};
  DistributionStats b{torch::tensor({1.0}, f64()), torch::tensor({1.0}, f64()).view({1, 1}), 2};
  EXPECT_NEAR(frechet_distance(a, b), 1.0, 1e-6);
  DistributionStats c{torch::tensor({0.0}, f64()), torch::tensor({4.0}, f64()).view({1, 1}), 2};
  EXPECT_NEAR(frechet_distance(a, c), 1.0, 1e-6);  // (1 - 2)^2
}

TEST(Frechet, DiagonalClosedForm) {
  auto mu_a = torch::tensor({0.1, -0.4, 2.0}, f64());
  auto mu_b = torch::tensor({0.3, 0.0, 1.0}, f64());
  auto va = torch::tensor({0.5, 2.0, 0.01}, f64());
  auto vb = torch::tensor({1.5, 0.25, 3.0}, f64());
  DistributionStats a{mu_a, torch::diag(va), 10};
  DistributionStats b{mu_b, torch::diag(vb), 10};
  double expected = 0;
  for (int d = 0; d < 3; ++d) {
    const double dm = mu_a[d].item<double>() - mu_b[d].item<double>();
    const double ds = std::sqrt(va[d].item<double>()) - std::sqrt(vb[d].item<double>());
    expected += dm * dm + ds * ds;
  }
  EXPECT_NEAR(frechet_distance(a, b), expected, 1e-6);
}

TEST(Frechet, RankDeficientAndMismatch) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(13);
  // Fewer samples than dimensions: singular covariances must not produce NaN.
  auto a = stats_from_embeddings(torch::randn({3, 8}, gen, f64()));
  auto b = stats_from_embeddings(torch::randn({3, 8}, gen, f64()));
  const double d = frechet_distance(a, b);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GE(d, 0.0);
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-6);
  auto c = stats_from_embeddings(torch::randn({3, 4}, gen, f64()));
  EXPECT_THROW(frechet_distance(a, c), ContractError);
}

TEST(Frechet, BackboneEmbedderRunsOnImages) {
  auto backbone = Backbone(BackboneSpec{});
  auto gen = at::make_generator<at::CPUGeneratorImpl>(15);
  auto x = torch::rand({4, 3, 32, 32}, gen);
  auto e = backbone_embedder(backbone)(x);
  EXPECT_EQ(e.sizes(), (std::vector<int64_t>{4, 64}));
  auto s = embed_stats(x, backbone_embedder(backbone));
  EXPECT_NEAR(frechet_distance(s, s), 0.0, 1e-6);
}
