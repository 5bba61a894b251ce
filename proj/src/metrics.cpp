#include "rface/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rface/errors.hpp"

namespace rface {

namespace {

torch::Tensor gaussian_window(int window, double sigma, int64_t channels) {
  auto coords = torch::arange(window, torch::kFloat64) - (window - 1) / 2.0;
  auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
  g = g / g.sum();
  auto w2 = torch::outer(g, g);
  return w2.expand({channels, 1, window, window}).contiguous();
}

struct SsimParts {
  torch::Tensor ssim;  // B
  torch::Tensor cs;    // B
};

SsimParts ssim_parts(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& window,
                     double c1, double c2) {
  const auto ch = x.size(1);
  auto filt = [&](const torch::Tensor& t) {
    return torch::nn::functional::conv2d(t, window, torch::nn::functional::Conv2dFuncOptions().groups(ch));
  };
  auto mu_x = filt(x);
  auto mu_y = filt(y);
  auto sxx = filt(x * x) - mu_x * mu_x;
  auto syy = filt(y * y) - mu_y * mu_y;
  auto sxy = filt(x * y) - mu_x * mu_y;
  auto cs_map = (2.0 * sxy + c2) / (sxx + syy + c2);
  auto lum = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
  return {(lum * cs_map).flatten(1).mean(1), cs_map.flatten(1).mean(1)};
}

}  // namespace

int64_t ms_ssim_min_size(const MsSsimOptions& options) {
  return (int64_t{1} << (options.levels - 1)) * options.window;
}

int ms_ssim_max_levels(int64_t size, int window) {
  int levels = 0;
  for (int l = 1; l <= 5; ++l) {
    if ((int64_t{1} << (l - 1)) * window <= size) levels = l;
  }
  return levels;
}

double ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const MsSsimOptions& options) {
  if (x.dim() != 4 || x.sizes() != y.sizes()) {
    throw ContractError("ms_ssim: expected two B x C x H x W images of equal shape");
  }
  if (options.levels < 1) throw ContractError("ms_ssim: levels must be positive");
  const auto min_size = ms_ssim_min_size(options);
  if (std::min(x.size(2), x.size(3)) < min_size) {
    std::ostringstream os;
    os << "ms_ssim: image " << x.size(2) << "x" << x.size(3) << " too small for "
       << options.levels << " levels with an " << options.window << "-tap window (minimum "
       << min_size << "x" << min_size << ")";
    throw ContractError(os.str());
  }
  std::vector<double> weights = options.weights;
  if (weights.empty()) {
    if (options.levels > static_cast<int>(kMsSsimWeights.size())) {
      throw ContractError("ms_ssim: no canonical weights beyond 5 levels");
    }
    weights.assign(kMsSsimWeights.begin(), kMsSsimWeights.begin() + options.levels);
    if (options.levels < static_cast<int>(kMsSsimWeights.size())) {
      const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
      for (auto& w : weights) w /= sum;
    }
  }
  if (static_cast<int>(weights.size()) != options.levels) {
    throw ContractError("ms_ssim: need one weight per level");
  }

  torch::NoGradGuard no_grad;
  auto a = x.detach().to(torch::kFloat64);
  auto b = y.detach().to(torch::kFloat64);
  const auto window = gaussian_window(options.window, options.sigma, a.size(1));
  const double c1 = options.k1 * options.k1;
  const double c2 = options.k2 * options.k2;

  auto result = torch::ones({a.size(0)}, torch::kFloat64);
  for (int level = 0; level < options.levels; ++level) {
    auto parts = ssim_parts(a, b, window, c1, c2);
    // Negative contrast-structure values would make fractional powers undefined.
    if (level + 1 < options.levels) {
      result = result * parts.cs.clamp_min(0.0).pow(weights[level]);
      a = torch::avg_pool2d(a, {2, 2}, {2, 2});
      b = torch::avg_pool2d(b, {2, 2}, {2, 2});
    } else {
      result = result * parts.ssim.clamp_min(0.0).pow(weights[level]);
    }
  }
  return result.mean().item<double>();
}

// ---------------------------------------------------------------------------

Embedder flatten_embedder() {
  return [](const torch::Tensor& images) { return images.flatten(1); };
}

Embedder backbone_embedder(const Backbone& backbone) {
  return [&backbone](const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    return backbone.pooled_embedding(images * 2.0 - 1.0);
  };
}

DistributionStats stats_from_embeddings(const torch::Tensor& embeddings) {
  if (embeddings.dim() != 2) throw ContractError("embed_stats: embeddings must be N x D");
  const auto n = embeddings.size(0);
  if (n < 2) throw ContractError("embed_stats: need at least 2 images, got " + std::to_string(n));
  auto e = embeddings.detach().to(torch::kFloat64);
  auto mean = e.mean(0);
  auto centered = e - mean;
  auto cov = torch::mm(centered.t(), centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.t());
  return {mean, cov, n};
}

DistributionStats embed_stats(const torch::Tensor& images, const Embedder& embedder) {
  if (images.dim() != 4 || images.size(0) < 2) {
    throw ContractError("embed_stats: need at least 2 images");
  }
  return stats_from_embeddings(embedder(images));
}

namespace {

torch::Tensor symmetric_sqrt(const torch::Tensor& m) {
  auto [evals, evecs] = torch::linalg_eigh(m, "L");
  auto root = evals.clamp_min(0.0).sqrt();
  return torch::mm(evecs * root.unsqueeze(0), evecs.t());
}

}  // namespace

double frechet_distance(const DistributionStats& a, const DistributionStats& b) {
  if (a.mean.dim() != 1 || b.mean.dim() != 1 || a.mean.size(0) != b.mean.size(0) ||
      a.covariance.sizes() != b.covariance.sizes()) {
    throw ContractError("frechet_distance: dimension mismatch");
  }
  auto sa = a.covariance.to(torch::kFloat64);
  auto sb = b.covariance.to(torch::kFloat64);
  auto diff = a.mean.to(torch::kFloat64) - b.mean.to(torch::kFloat64);
  // Tr (S_a S_b)^(1/2) == Tr (S_a^(1/2) S_b S_a^(1/2))^(1/2), which is symmetric PSD.
  auto root_a = symmetric_sqrt(sa);
  auto inner = torch::mm(torch::mm(root_a, sb), root_a);
  inner = 0.5 * (inner + inner.t());
  auto eig = torch::linalg_eigvalsh(inner, "L").clamp_min(0.0);
  const double tr_cross = eig.sqrt().sum().item<double>();
  const double value = diff.dot(diff).item<double>() + sa.trace().item<double>() +
                       sb.trace().item<double>() - 2.0 * tr_cross;
  return std::max(0.0, value);
}

}  // namespace rface
