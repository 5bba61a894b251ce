#include "rface/attention.hpp"

#include <sstream>

#include "rface/errors.hpp"

namespace rface {

namespace {

void check_features(const torch::Tensor& t, const char* op) {
  if (t.dim() != 4) {
    throw ContractError(std::string(op) + ": expected B x C x H x W features");
  }
}

void check_attention(const torch::Tensor& features, const torch::Tensor& attention, const char* op) {
  check_features(features, op);
  const int64_t n = features.size(2) * features.size(3);
  if (attention.dim() != 3 || attention.size(0) != features.size(0) || attention.size(1) != n ||
      attention.size(2) != n) {
    std::ostringstream os;
    os << op << ": attention map " << attention.sizes() << " does not match features "
       << features.sizes();
    throw ContractError(os.str());
  }
}

}  // namespace

int64_t query_channels(int64_t channels) { return std::max<int64_t>(1, channels / 8); }

torch::Tensor attention_map_from_query(const torch::Tensor& query) {
  check_features(query, "attention_map");
  auto q = query.flatten(2);                           // B x Cq x N
  auto logits = torch::bmm(q.transpose(1, 2), q);      // [b, j, i] = <q_j, q_i>
  return torch::softmax(logits, /*dim=*/2);
}

torch::Tensor attention_map(const torch::Tensor& source_features, const torch::Tensor& query_weight,
                            const torch::Tensor& query_bias) {
  check_features(source_features, "attention_map");
  return attention_map_from_query(torch::conv2d(source_features, query_weight, query_bias));
}

torch::Tensor self_attend(const torch::Tensor& features, const torch::Tensor& attention) {
  check_attention(features, attention, "self_attend");
  auto flat = features.flatten(2);                     // B x C x N
  auto out = torch::bmm(flat, attention.transpose(1, 2));
  return out.view(features.sizes());
}

torch::Tensor example_flow(const torch::Tensor& reference_features, const torch::Tensor& attention,
                           const torch::Tensor& mask, FlowPolarity polarity) {
  check_attention(reference_features, attention, "example_flow");
  if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(2) != reference_features.size(2) ||
      mask.size(3) != reference_features.size(3) ||
      (mask.size(0) != reference_features.size(0) && mask.size(0) != 1)) {
    std::ostringstream os;
    os << "example_flow: mask " << mask.sizes() << " does not match features "
       << reference_features.sizes();
    throw ContractError(os.str());
  }
  auto warped = self_attend(reference_features, attention);
  auto keep = mask.gt(0.5).expand_as(reference_features);
  if (polarity == FlowPolarity::kLiteral) return torch::where(keep, warped, reference_features);
  return torch::where(keep, reference_features, warped);
}

torch::Tensor fuse(const torch::Tensor& attended, const torch::Tensor& flow,
                   const torch::Tensor& projection_weight, const torch::Tensor& projection_bias) {
  check_features(attended, "fuse");
  if (attended.sizes() != flow.sizes()) {
    std::ostringstream os;
    os << "fuse: shape mismatch " << attended.sizes() << " vs " << flow.sizes();
    throw ContractError(os.str());
  }
  auto cat = torch::cat({attended, flow}, 1);
  return torch::conv2d(cat, projection_weight, projection_bias);
}

// ---------------------------------------------------------------------------

ExampleGuidedAttentionImpl::ExampleGuidedAttentionImpl(AttentionOptions options)
    : options_(options) {
  const auto c = options_.channels;
  query = register_module("query", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, query_channels(c), 1)));
  if (options_.fusion == FusionMode::kConcatProject) {
    fusion = register_module("fusion", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, c, 1)));
  }
}

torch::Tensor ExampleGuidedAttentionImpl::forward(const torch::Tensor& source,
                                                  const torch::Tensor& reference,
                                                  const torch::Tensor& mask) {
  if (source.sizes() != reference.sizes()) {
    std::ostringstream os;
    os << "attention: source features " << source.sizes() << " and reference features "
       << reference.sizes() << " differ";
    throw ContractError(os.str());
  }
  auto fm = attention_map(source, query->weight, query->bias);
  auto fa = self_attend(source, fm);
  auto fe = example_flow(reference, fm, mask, options_.polarity);
  if (options_.fusion == FusionMode::kAdd) return fa + fe;
  return fuse(fa, fe, fusion->weight, fusion->bias);
}

}  // namespace rface
