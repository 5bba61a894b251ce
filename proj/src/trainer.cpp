#include "rface/trainer.hpp"

#include <ostream>

#include "rface/checkpoint.hpp"
#include "rface/errors.hpp"

namespace rface {

torch::Tensor component_keep_mask(const torch::Tensor& labels, const ComponentSet& set,
                                  int dilation_radius) {
  return dilate_mask(components_to_mask(labels, set), dilation_radius).data();
}

TrainingBatch make_batch(const FaceDataset& data,
                         const std::vector<std::pair<size_t, size_t>>& pairs,
                         const std::vector<ComponentSet>& components, int dilation_radius) {
  if (pairs.size() != components.size() || pairs.empty()) {
    throw ContractError("make_batch: need one component set per pair");
  }
  std::vector<torch::Tensor> src, ref, ms, mr;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& s = data.at(pairs[i].first);
    const auto& r = data.at(pairs[i].second);
    src.push_back(s.image);
    ref.push_back(r.image);
    ms.push_back(component_keep_mask(s.labels, components[i], dilation_radius));
    mr.push_back(component_keep_mask(r.labels, components[i], dilation_radius));
  }
  return {torch::stack(src), torch::stack(ref), torch::cat(ms), torch::cat(mr), components};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ExperimentConfig config, FaceDataset train_set)
    : config_(std::move(config)),
      data_(std::move(train_set)),
      backbone_(config_.backbone),
      rng_(config_.train.seed) {
  config_.validate();
  if (data_.size() < 2) throw ContractError("Trainer: need at least two training images");
  if (config_.train.threads > 0) torch::set_num_threads(config_.train.threads);

  model_ = RFaceModel(config_.generator);
  model_->initialize(config_.train.seed);

  const auto& adam = config_.train.adam;
  auto opts = torch::optim::AdamOptions(adam.learning_rate).betas({adam.beta1, adam.beta2});
  g_optim_ = std::make_unique<torch::optim::Adam>(model_->generator_parameters(), opts);
  d_optim_ = std::make_unique<torch::optim::Adam>(model_->discriminator_parameters(), opts);
}

TrainingBatch Trainer::sample_batch() {
  const auto n = data_.size();
  std::uniform_int_distribution<size_t> pick_source(0, n - 1);
  std::uniform_int_distribution<size_t> pick_other(0, n - 2);
  std::vector<std::pair<size_t, size_t>> pairs;
  std::vector<ComponentSet> comps;
  for (int64_t b = 0; b < config_.train.batch_size; ++b) {
    const auto s = pick_source(rng_);
    auto r = pick_other(rng_);
    if (r >= s) ++r;
    pairs.emplace_back(s, r);
    comps.push_back(sample_component_subset(rng_, config_.train.components_per_sample));
  }
  return make_batch(data_, pairs, comps, config_.train.dilation_radius);
}

std::array<torch::Tensor, kNumLossTerms> Trainer::generator_terms(const TrainingBatch& batch,
                                                                  const torch::Tensor& generated,
                                                                  const torch::Tensor& corrupted) {
  const auto weights = config_.train.effective_weights();
  const auto w = weights.as_array();
  std::array<torch::Tensor, kNumLossTerms> terms;

  // Terms with zero weight are still reported, but without building a graph.
  auto compute = [&](LossTerm term, auto&& fn) {
    const auto k = static_cast<int>(term);
    if (w[k] == 0.0) {
      torch::NoGradGuard no_grad;
      terms[k] = fn(generated.detach()).detach();
    } else {
      terms[k] = fn(generated);
    }
  };

  compute(LossTerm::kPerceptual,
          [&](const torch::Tensor& g) { return perceptual_loss(g, batch.source, backbone_); });
  compute(LossTerm::kStyle, [&](const torch::Tensor& g) {
    return style_loss(g, corrupted, batch.source_mask, backbone_);
  });
  compute(LossTerm::kContextual, [&](const torch::Tensor& g) {
    torch::Tensor sum = torch::zeros({}, g.options());
    int64_t valid = 0;
    for (int64_t b = 0; b < g.size(0); ++b) {
      try {
        sum = sum + contextual_loss(g.narrow(0, b, 1), batch.source_mask.narrow(0, b, 1),
                                    batch.reference.narrow(0, b, 1),
                                    batch.reference_mask.narrow(0, b, 1), backbone_, rng_,
                                    config_.train.contextual);
        ++valid;
      } catch (const EmptyHoleError&) {
        // this sample's hole vanishes at some layer; it contributes no contextual term
      }
    }
    return valid > 0 ? sum / static_cast<double>(valid) : sum;
  });
  compute(LossTerm::kPixel, [&](const torch::Tensor& g) {
    const Backbone* phi = config_.train.pixel_mode == PixelLossMode::kFeature ? &backbone_ : nullptr;
    return pixel_loss(g, batch.source, batch.source_mask, phi);
  });
  compute(LossTerm::kTv, [&](const torch::Tensor& g) { return tv_loss(g); });
  compute(LossTerm::kAdversarial, [&](const torch::Tensor& g) {
    return lsgan_generator_loss(discriminate(model_, g));
  });
  return terms;
}

StepResult Trainer::step(const TrainingBatch& batch) {
  model_->train();
  auto corrupted = apply_keep_mask(batch.source, batch.source_mask);
  auto ref_features = encode_reference(model_, batch.reference);
  auto generated = generate(model_, corrupted, batch.source_mask, ref_features);

  // discriminator update
  d_optim_->zero_grad();
  auto d_loss = lsgan_discriminator_loss(discriminate(model_, batch.source),
                                         discriminate(model_, generated.detach()));
  const double d_value = d_loss.item<double>();
  if (!std::isfinite(d_value)) {
    LossReport rep;
    rep.step = step_ + 1;
    rep.discriminator = d_value;
    throw NonFiniteLossError("non-finite discriminator loss at step " + std::to_string(step_ + 1),
                             rep);
  }
  d_loss.backward();
  d_optim_->step();

  // generator update
  g_optim_->zero_grad();
  const auto weights = config_.train.effective_weights();
  auto terms = generator_terms(batch, generated, corrupted);
  std::array<double, kNumLossTerms> raw{};
  for (int k = 0; k < kNumLossTerms; ++k) raw[k] = terms[k].item<double>();
  StepResult result;
  result.report = total_loss(raw, weights, step_ + 1);
  result.report.discriminator = d_value;
  result.discriminator_loss = d_value;

  auto objective = weighted_objective(terms, weights);
  if (objective.requires_grad()) objective.backward();
  g_optim_->step();
  ++step_;
  return result;
}

std::vector<LossReport> Trainer::run(int64_t steps, std::ostream* log) {
  std::vector<LossReport> reports;
  reports.reserve(static_cast<size_t>(std::max<int64_t>(steps, 0)));
  for (int64_t i = 0; i < steps; ++i) {
    auto r = step();
    if (log != nullptr) *log << r.report.to_json_line() << '\n';
    reports.push_back(r.report);
  }
  if (log != nullptr) log->flush();
  return reports;
}

void Trainer::save(const std::filesystem::path& checkpoint_path) {
  save_checkpoint(checkpoint_path, model_, config_, step_, rng_);
}

}  // namespace rface
