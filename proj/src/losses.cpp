#include "rface/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rface/errors.hpp"
#include "rface/imagecore.hpp"

namespace rface {

namespace {

constexpr double kNormEps = 1e-12;

void check_same(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw ContractError(os.str());
  }
}

torch::Tensor zero_like_scalar(const torch::Tensor& ref) {
  return torch::zeros({}, ref.options());
}

}  // namespace

double& LossWeights::operator[](LossTerm t) {
  switch (t) {
    case LossTerm::kPerceptual: return perceptual;
    case LossTerm::kStyle: return style;
    case LossTerm::kContextual: return contextual;
    case LossTerm::kPixel: return pixel;
    case LossTerm::kTv: return tv;
    case LossTerm::kAdversarial: return adversarial;
  }
  return perceptual;
}

std::string LossReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  nlohmann::ordered_json r, w;
  for (int k = 0; k < kNumLossTerms; ++k) {
    r[std::string(kLossTermNames[k])] = raw[k];
    w[std::string(kLossTermNames[k])] = weighted[k];
  }
  j["raw"] = r;
  j["weighted"] = w;
  j["total"] = total;
  j["d_loss"] = discriminator;
  return j.dump();
}

LossReport LossReport::from_json_line(std::string_view line) {
  LossReport rep;
  try {
    auto j = nlohmann::json::parse(line);
    rep.step = j.at("step").get<int64_t>();
    for (int k = 0; k < kNumLossTerms; ++k) {
      const std::string key(kLossTermNames[k]);
      rep.raw[k] = j.at("raw").at(key).get<double>();
      rep.weighted[k] = j.at("weighted").at(key).get<double>();
    }
    rep.total = j.at("total").get<double>();
    rep.discriminator = j.at("d_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed loss report line: ") + e.what());
  }
  return rep;
}

// ---------------------------------------------------------------------------

torch::Tensor gram(const torch::Tensor& features) {
  if (features.dim() != 4) throw ContractError("gram: expected B x C x H x W features");
  auto f = features.flatten(2);
  return torch::bmm(f, f.transpose(1, 2));
}

torch::Tensor perceptual_loss(const torch::Tensor& generated, const torch::Tensor& source,
                              const Backbone& backbone, std::span<const std::string> layers) {
  check_same(generated, source, "perceptual_loss");
  auto fg = backbone.extract(generated, layers);
  auto fs = backbone.extract(source, layers);
  auto loss = zero_like_scalar(generated);
  for (const auto& [name, g] : fg) loss = loss + (g - fs.at(name)).abs().mean();
  return loss;
}

torch::Tensor perceptual_loss(const torch::Tensor& generated, const torch::Tensor& source,
                              const Backbone& backbone) {
  return perceptual_loss(generated, source, backbone, backbone.layers_for("perceptual"));
}

torch::Tensor style_loss(const torch::Tensor& generated, const torch::Tensor& corrupted,
                         const torch::Tensor& mask, const Backbone& backbone,
                         std::span<const std::string> layers) {
  check_same(generated, corrupted, "style_loss");
  auto fg = backbone.extract(apply_keep_mask(generated, mask), layers);
  auto fc = backbone.extract(corrupted, layers);
  auto loss = zero_like_scalar(generated);
  for (const auto& [name, g] : fg) {
    const auto c = static_cast<double>(g.size(1));
    const auto chw = c * static_cast<double>(g.size(2) * g.size(3));
    auto diff = (gram(g) - gram(fc.at(name))) / chw;
    // per-sample L1 over the C x C matrix, averaged over the batch
    loss = loss + diff.abs().sum({1, 2}).mean() / (c * c);
  }
  return loss;
}

torch::Tensor style_loss(const torch::Tensor& generated, const torch::Tensor& corrupted,
                         const torch::Tensor& mask, const Backbone& backbone) {
  return style_loss(generated, corrupted, mask, backbone, backbone.layers_for("style"));
}

// ---------------------------------------------------------------------------

torch::Tensor contextual_similarity(const torch::Tensor& x, const torch::Tensor& y,
                                    const ContextualParams& params) {
  if (x.dim() != 2 || y.dim() != 2 || x.size(1) != y.size(1)) {
    throw ContractError("contextual_similarity: expected N x C feature sets with equal C");
  }
  if (x.size(0) == 0 || y.size(0) == 0) {
    throw ContractError("contextual_similarity: feature sets must be non-empty");
  }
  if (x.size(0) != y.size(0)) {
    throw ContractError("contextual_similarity: feature sets must have equal size");
  }
  auto mu = y.mean(0, /*keepdim=*/true);
  auto xc = x - mu;
  auto yc = y - mu;
  auto xn = xc / xc.norm(2, 1, true).clamp_min(kNormEps);
  auto yn = yc / yc.norm(2, 1, true).clamp_min(kNormEps);
  auto dist = (1.0 - torch::mm(xn, yn.t())).clamp_min(0.0);       // [i, j]
  auto rel = dist / (std::get<0>(dist.min(1, true)) + params.epsilon);
  // softmax over j == exp((1 - d~_ij)/h) / sum_k exp((1 - d~_ik)/h)
  auto cx = torch::softmax((1.0 - rel) / params.bandwidth, 1);
  return std::get<0>(cx.max(0)).mean();
}

torch::Tensor hole_features(const torch::Tensor& feature_map, const torch::Tensor& keep_mask) {
  // feature_map: C x H x W, keep_mask: 1 x H x W
  auto hole = keep_mask.lt(0.5).flatten();
  auto idx = hole.nonzero().flatten();
  return feature_map.flatten(1).index_select(1, idx).t();
}

torch::Tensor contextual_loss(const torch::Tensor& generated, const torch::Tensor& source_mask,
                              const torch::Tensor& reference, const torch::Tensor& reference_mask,
                              const Backbone& backbone, std::span<const std::string> layers,
                              std::mt19937_64& rng, const ContextualParams& params) {
  check_same(generated, reference, "contextual_loss");
  const auto height = generated.size(2);
  // Component content only: everything outside the hole is zeroed.
  auto fg = backbone.extract(generated * (1.0 - source_mask.to(generated.dtype())), layers);
  auto fr = backbone.extract(reference * (1.0 - reference_mask.to(reference.dtype())), layers);

  auto loss = zero_like_scalar(generated);
  const auto batch = generated.size(0);
  for (const auto& [name, g] : fg) {
    const auto& r = fr.at(name);
    if (height % g.size(2) != 0) {
      throw ContractError("contextual_loss: layer " + name + " resolution does not divide the image");
    }
    const int factor = static_cast<int>(height / g.size(2));
    auto ms = downsample_mask(ComponentMask(source_mask), factor).data();
    auto mr = downsample_mask(ComponentMask(reference_mask), factor).data();
    for (int64_t b = 0; b < batch; ++b) {
      auto x = hole_features(g[b], ms[b]);
      auto y = hole_features(r[b], mr[b]);
      if (x.size(0) == 0 || y.size(0) == 0) {
        throw EmptyHoleError("contextual_loss: empty hole at layer " + name + " for sample " +
                             std::to_string(b) + "; skip the contextual term for it");
      }
      const auto n = std::min(x.size(0), y.size(0));
      auto subsample = [&](const torch::Tensor& set) {
        if (set.size(0) == n) return set;
        std::vector<int64_t> order(static_cast<size_t>(set.size(0)));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(static_cast<size_t>(n));
        std::sort(order.begin(), order.end());
        return set.index_select(0, torch::tensor(order, torch::kLong));
      };
      x = subsample(x);
      y = subsample(y);
      loss = loss - torch::log(contextual_similarity(x, y, params)) / static_cast<double>(batch);
    }
  }
  return loss;
}

torch::Tensor contextual_loss(const torch::Tensor& generated, const torch::Tensor& source_mask,
                              const torch::Tensor& reference, const torch::Tensor& reference_mask,
                              const Backbone& backbone, std::mt19937_64& rng,
                              const ContextualParams& params) {
  return contextual_loss(generated, source_mask, reference, reference_mask, backbone,
                         backbone.layers_for("contextual"), rng, params);
}

// ---------------------------------------------------------------------------

torch::Tensor pixel_loss(const torch::Tensor& generated, const torch::Tensor& source,
                         const torch::Tensor& mask, const Backbone* backbone) {
  check_same(generated, source, "pixel_loss");
  auto g = apply_keep_mask(generated, mask);
  auto s = apply_keep_mask(source, mask);
  if (backbone == nullptr) return (g - s).abs().mean();
  const auto& layers = backbone->layers_for("pixel");
  auto fg = backbone->extract(g, layers);
  auto fs = backbone->extract(s, layers);
  auto loss = zero_like_scalar(generated);
  for (const auto& [name, f] : fg) loss = loss + (f - fs.at(name)).abs().mean();
  return loss;
}

torch::Tensor tv_loss(const torch::Tensor& image) {
  if (image.dim() != 4) throw ContractError("tv_loss: expected B x C x H x W");
  using torch::indexing::None;
  using torch::indexing::Slice;
  auto loss = zero_like_scalar(image);
  if (image.size(3) > 1) {
    loss = loss + (image.index({Slice(), Slice(), Slice(), Slice(1, None)}) -
                   image.index({Slice(), Slice(), Slice(), Slice(None, -1)}))
                      .abs()
                      .mean();
  }
  if (image.size(2) > 1) {
    loss = loss + (image.index({Slice(), Slice(), Slice(1, None), Slice()}) -
                   image.index({Slice(), Slice(), Slice(None, -1), Slice()}))
                      .abs()
                      .mean();
  }
  return loss;
}

torch::Tensor lsgan_generator_loss(const torch::Tensor& fake_scores) {
  return (fake_scores - 1.0).pow(2).mean();
}

torch::Tensor lsgan_discriminator_loss(const torch::Tensor& real_scores,
                                       const torch::Tensor& fake_scores) {
  return fake_scores.pow(2).mean() + (real_scores - 1.0).pow(2).mean();
}

AdversarialLosses adversarial_losses(const torch::Tensor& real_scores,
                                     const torch::Tensor& fake_scores) {
  return {lsgan_generator_loss(fake_scores), lsgan_discriminator_loss(real_scores, fake_scores)};
}

// ---------------------------------------------------------------------------

LossReport total_loss(const std::array<double, kNumLossTerms>& raw, const LossWeights& weights,
                      int64_t step) {
  LossReport rep;
  rep.step = step;
  rep.raw = raw;
  const auto w = weights.as_array();
  for (int k = 0; k < kNumLossTerms; ++k) {
    rep.weighted[k] = w[k] * raw[k];
    rep.total += rep.weighted[k];
  }
  for (int k = 0; k < kNumLossTerms; ++k) {
    if (!std::isfinite(raw[k])) {
      throw NonFiniteLossError("non-finite " + std::string(kLossTermNames[k]) + " loss at step " +
                                   std::to_string(step),
                               rep);
    }
  }
  return rep;
}

torch::Tensor weighted_objective(const std::array<torch::Tensor, kNumLossTerms>& terms,
                                 const LossWeights& weights) {
  const auto w = weights.as_array();
  torch::Tensor total;
  for (int k = 0; k < kNumLossTerms; ++k) {
    if (!terms[k].defined()) continue;
    auto t = terms[k] * w[k];
    total = total.defined() ? total + t : t;
  }
  if (!total.defined()) total = torch::zeros({});
  return total;
}

}  // namespace rface
