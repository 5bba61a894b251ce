#include "rface/checkpoint.hpp"

#include <set>
#include <sstream>

#include "rface/errors.hpp"
#include "rface/tensor_archive.hpp"

namespace rface {

void save_checkpoint(const std::filesystem::path& path, RFaceModel& model,
                     const ExperimentConfig& config, int64_t step, const std::mt19937_64& rng) {
  TensorArchive archive;
  std::ostringstream rng_text;
  rng_text << rng;
  archive.meta = {{"format", "rface-checkpoint"},
                  {"version", kCheckpointVersion},
                  {"config", config_to_json(config)},
                  {"step", step},
                  {"rng_state", rng_text.str()}};
  for (const auto& item : model->named_parameters()) {
    archive.tensors.emplace_back(item.key(), item.value());
  }
  for (const auto& item : model->named_buffers()) {
    archive.tensors.emplace_back(item.key(), item.value());
  }
  write_tensor_archive(path, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto archive = read_tensor_archive(path);
  const auto& meta = archive.meta;
  if (meta.value("format", "") != "rface-checkpoint") {
    throw FormatError(path.string() + ": not an rface checkpoint");
  }
  if (meta.value("version", 0) != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(meta.at("config"));
  ckpt.step = meta.at("step").get<int64_t>();
  ckpt.rng_state = meta.at("rng_state").get<std::string>();
  ckpt.model = RFaceModel(ckpt.config.generator);

  torch::NoGradGuard no_grad;
  std::set<std::string> loaded;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto* src = archive.find(name);
    if (src == nullptr) throw FormatError(path.string() + ": missing tensor " + name);
    if (src->sizes() != target.sizes()) {
      std::ostringstream os;
      os << path.string() << ": tensor " << name << " has shape " << src->sizes() << ", expected "
         << target.sizes();
      throw FormatError(os.str());
    }
    target.copy_(*src);
    loaded.insert(name);
  };
  for (auto& item : ckpt.model->named_parameters()) assign(item.key(), item.value());
  for (auto& item : ckpt.model->named_buffers()) assign(item.key(), item.value());
  for (const auto& [name, t] : archive.tensors) {
    if (!loaded.count(name)) throw FormatError(path.string() + ": unexpected tensor " + name);
  }
  return ckpt;
}

}  // namespace rface
