#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "rface/config.hpp"
#include "rface/dataset.hpp"
#include "rface/featnet.hpp"
#include "rface/losses.hpp"
#include "rface/networks.hpp"

namespace rface {

/// Sources, references and their (dilated) keep-masks for one update.
struct TrainingBatch {
  torch::Tensor source;          // B x 3 x S x S
  torch::Tensor reference;       // B x 3 x S x S
  torch::Tensor source_mask;     // B x 1 x S x S
  torch::Tensor reference_mask;  // B x 1 x S x S
  std::vector<ComponentSet> components;
};

/// Masks both images of every (source, reference) pair with the same component set.
TrainingBatch make_batch(const FaceDataset& data,
                         const std::vector<std::pair<size_t, size_t>>& pairs,
                         const std::vector<ComponentSet>& components, int dilation_radius);

/// Training-time masks: components_to_mask followed by dilation.
torch::Tensor component_keep_mask(const torch::Tensor& labels, const ComponentSet& set,
                                  int dilation_radius);

struct StepResult {
  LossReport report;
  double discriminator_loss = 0.0;
};

/// Alternating LSGAN training: one discriminator update, then one generator update on the
/// weighted objective. Deterministic for a given config and dataset.
class Trainer {
 public:
  Trainer(ExperimentConfig config, FaceDataset train_set);

  /// Draws B sources, a different reference for each, and a component subset per sample.
  TrainingBatch sample_batch();

  /// Throws NonFiniteLossError (before touching the weights) if any term is NaN/inf.
  StepResult step(const TrainingBatch& batch);
  StepResult step() { return step(sample_batch()); }

  /// Runs `steps` updates, writing one LossReport JSON line per step to `log` if given.
  std::vector<LossReport> run(int64_t steps, std::ostream* log = nullptr);

  RFaceModel& model() { return model_; }
  const Backbone& backbone() const { return backbone_; }
  const ExperimentConfig& config() const { return config_; }
  int64_t steps_done() const { return step_; }
  const std::mt19937_64& rng() const { return rng_; }

  void save(const std::filesystem::path& checkpoint_path);

 private:
  std::array<torch::Tensor, kNumLossTerms> generator_terms(const TrainingBatch& batch,
                                                           const torch::Tensor& generated,
                                                           const torch::Tensor& corrupted);

  ExperimentConfig config_;
  FaceDataset data_;
  RFaceModel model_{nullptr};
  Backbone backbone_;
  std::unique_ptr<torch::optim::Adam> g_optim_;
  std::unique_ptr<torch::optim::Adam> d_optim_;
  std::mt19937_64 rng_;
  int64_t step_ = 0;
};

}  // namespace rface
