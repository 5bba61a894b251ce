#include "rface/networks.hpp"

#include <sstream>

#include "rface/errors.hpp"

namespace rface {

namespace nn = torch::nn;

std::string_view to_string(NormKind k) { return k == NormKind::kInstance ? "instance" : "none"; }
std::string_view to_string(BlendMode m) { return m == BlendMode::kRaw ? "raw" : "paste"; }
std::string_view to_string(FusionMode m) {
  return m == FusionMode::kConcatProject ? "concat" : "add";
}
std::string_view to_string(FlowPolarity p) {
  return p == FlowPolarity::kLiteral ? "literal" : "swapped";
}

void GeneratorConfig::validate() const {
  if (dilation_schedule.size() != 7) {
    throw ContractError("generator: dilation_schedule must list exactly 7 dilations");
  }
  for (auto d : dilation_schedule) {
    if (d < 1) throw ContractError("generator: dilations must be positive");
  }
  if (base_channels < 1 || discriminator_channels < 1) {
    throw ContractError("generator: channel counts must be positive");
  }
  if (downsample_steps < 0 || discriminator_stages < 1) {
    throw ContractError("generator: invalid stage counts");
  }
  if (image_size < 1 || image_size % (int64_t{1} << downsample_steps) != 0) {
    throw ContractError("generator: image_size " + std::to_string(image_size) +
                        " not divisible by 2^downsample_steps");
  }
  if (image_size % (int64_t{1} << discriminator_stages) != 0) {
    throw ContractError("discriminator: image_size not divisible by 2^discriminator_stages");
  }
}

namespace {

void add_norm(nn::Sequential& seq, int64_t channels, NormKind norm) {
  if (norm == NormKind::kInstance) {
    seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)));
  }
}

// Convolutions feeding an instance norm carry no bias: the norm cancels it.
nn::Conv2dOptions conv_opts(int64_t in, int64_t out, int64_t k, NormKind norm) {
  return nn::Conv2dOptions(in, out, k).bias(norm == NormKind::kNone);
}

void check_image(const torch::Tensor& image, int64_t channels, int64_t size, const char* op) {
  if (image.dim() != 4 || image.size(1) != channels || image.size(2) != size ||
      image.size(3) != size) {
    std::ostringstream os;
    os << op << ": expected B x " << channels << " x " << size << " x " << size << ", got "
       << image.sizes();
    throw ContractError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

EncoderImpl::EncoderImpl(const GeneratorConfig& config) {
  config.validate();
  nn::Sequential seq;
  int64_t ch = config.base_channels;
  seq->push_back(nn::Conv2d(conv_opts(4, ch, 7, config.norm).padding(3)));
  add_norm(seq, ch, config.norm);
  seq->push_back(nn::ReLU());
  for (int64_t s = 0; s < config.downsample_steps; ++s) {
    seq->push_back(nn::Conv2d(conv_opts(ch, ch * 2, 4, config.norm).stride(2).padding(1)));
    add_norm(seq, ch * 2, config.norm);
    seq->push_back(nn::ReLU());
    ch *= 2;
  }
  layers_ = register_module("layers", seq);
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

DilatedResidualBlockImpl::DilatedResidualBlockImpl(int64_t channels, int64_t dilation,
                                                   NormKind norm) {
  nn::Sequential seq;
  seq->push_back(nn::Conv2d(conv_opts(channels, channels, 3, norm).padding(dilation).dilation(dilation)));
  add_norm(seq, channels, norm);
  seq->push_back(nn::ReLU());
  seq->push_back(nn::Conv2d(conv_opts(channels, channels, 3, norm).padding(1)));
  add_norm(seq, channels, norm);
  body_ = register_module("body", seq);
}

torch::Tensor DilatedResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + body_->forward(x);
}

DecoderImpl::DecoderImpl(const GeneratorConfig& config) {
  nn::Sequential seq;
  int64_t ch = config.bottleneck_channels();
  for (int64_t s = 0; s < config.downsample_steps; ++s) {
    seq->push_back(nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    seq->push_back(nn::Conv2d(conv_opts(ch, ch / 2, 3, config.norm).padding(1)));
    add_norm(seq, ch / 2, config.norm);
    seq->push_back(nn::ReLU());
    ch /= 2;
  }
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(ch, 3, 7).padding(3)));
  seq->push_back(nn::Tanh());
  layers_ = register_module("layers", seq);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  encoder = register_module("encoder", Encoder(config_));
  nn::Sequential seq;
  for (auto d : config_.dilation_schedule) {
    seq->push_back(DilatedResidualBlock(config_.bottleneck_channels(), d, config_.norm));
  }
  blocks = register_module("blocks", seq);
  const auto c = config_.bottleneck_channels();
  if (config_.use_attention) {
    attention = register_module(
        "attention", ExampleGuidedAttention(AttentionOptions{c, config_.fusion, config_.polarity}));
  } else {
    concat_projection =
        register_module("concat_projection", nn::Conv2d(nn::Conv2dOptions(2 * c, c, 1)));
  }
  decoder = register_module("decoder", Decoder(config_));
}

torch::Tensor GeneratorImpl::encode(const torch::Tensor& corrupted, const torch::Tensor& mask) {
  return encoder->forward(torch::cat({corrupted, mask.to(corrupted.dtype())}, 1));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& corrupted, const torch::Tensor& mask,
                                     const torch::Tensor& reference_features) {
  auto features = blocks->forward(encode(corrupted, mask));
  if (reference_features.sizes() != features.sizes()) {
    std::ostringstream os;
    os << "generate: reference features " << reference_features.sizes()
       << " do not match the bottleneck " << features.sizes();
    throw ContractError(os.str());
  }
  torch::Tensor fused;
  if (config_.use_attention) {
    const auto factor = static_cast<int>(int64_t{1} << config_.downsample_steps);
    auto feat_mask = downsample_mask(ComponentMask(mask), factor, config_.mask_anchor);
    fused = attention->forward(features, reference_features, feat_mask.data().to(features.dtype()));
  } else {
    fused = concat_projection->forward(torch::cat({features, reference_features}, 1));
  }
  return decoder->forward(fused);
}

DiscriminatorImpl::DiscriminatorImpl(const GeneratorConfig& config) {
  nn::Sequential seq;
  int64_t in = 3;
  int64_t ch = config.discriminator_channels;
  for (int64_t s = 0; s < config.discriminator_stages; ++s) {
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, ch, 4).stride(2).padding(1)));
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = ch;
    ch *= 2;
  }
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  layers_ = register_module("layers", seq);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  return layers_->forward(image);
}

// ---------------------------------------------------------------------------

RFaceModelImpl::RFaceModelImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  generator = register_module("generator", Generator(config_));
  reference_encoder = register_module("reference_encoder", Encoder(config_));
  discriminator = register_module("discriminator", Discriminator(config_));
}

void RFaceModelImpl::initialize(uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& module : modules(/*include_self=*/false)) {
    if (auto* conv = module->as<nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02, gen);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* norm = module->as<nn::InstanceNorm2d>()) {
      if (norm->weight.defined()) norm->weight.fill_(1.0);
      if (norm->bias.defined()) norm->bias.zero_();
    }
  }
}

std::vector<torch::Tensor> RFaceModelImpl::generator_parameters() {
  auto params = generator->parameters();
  auto ref = reference_encoder->parameters();
  params.insert(params.end(), ref.begin(), ref.end());
  return params;
}

std::vector<torch::Tensor> RFaceModelImpl::discriminator_parameters() {
  return discriminator->parameters();
}

torch::Tensor encode_reference(RFaceModel& model, const torch::Tensor& reference) {
  const auto& cfg = model->config();
  check_image(reference, 3, cfg.image_size, "encode_reference");
  auto ones = torch::ones({reference.size(0), 1, reference.size(2), reference.size(3)},
                          reference.options().requires_grad(false));
  return model->reference_encoder->forward(torch::cat({reference, ones}, 1));
}

torch::Tensor generate(RFaceModel& model, const torch::Tensor& corrupted, const torch::Tensor& mask,
                       const torch::Tensor& reference_features) {
  const auto& cfg = model->config();
  check_image(corrupted, 3, cfg.image_size, "generate");
  check_image(mask, 1, cfg.image_size, "generate (mask)");
  if (mask.size(0) != corrupted.size(0)) throw ContractError("generate: mask batch mismatch");
  return model->generator->forward(corrupted, mask, reference_features);
}

torch::Tensor discriminate(RFaceModel& model, const torch::Tensor& image) {
  check_image(image, 3, model->config().image_size, "discriminate");
  return model->discriminator->forward(image);
}

torch::Tensor compose_output(const torch::Tensor& generated, const torch::Tensor& source,
                             const torch::Tensor& mask, BlendMode mode) {
  if (mode == BlendMode::kRaw) return generated;
  if (generated.sizes() != source.sizes()) {
    throw ContractError("compose_output: generated and source shapes differ");
  }
  auto keep = mask.gt(0.5).expand_as(generated);
  return torch::where(keep, source, generated);
}

}  // namespace rface
