#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "rface/config.hpp"
#include "rface/networks.hpp"

namespace rface {

inline constexpr int kCheckpointVersion = 1;

/// Model weights plus everything needed to interpret and reproduce them. Stored as a
/// tensor archive whose metadata holds {"format": "rface-checkpoint", "version", "config",
/// "step", "rng_state"}; tensor names are the model's parameter paths.
struct Checkpoint {
  ExperimentConfig config;
  int64_t step = 0;
  std::string rng_state;  // textual std::mt19937_64 state
  RFaceModel model{nullptr};
};

void save_checkpoint(const std::filesystem::path& path, RFaceModel& model,
                     const ExperimentConfig& config, int64_t step, const std::mt19937_64& rng);

/// Rebuilds the model from the stored config and loads every parameter; throws
/// FormatError on missing, extra or mis-shaped tensors.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rface
