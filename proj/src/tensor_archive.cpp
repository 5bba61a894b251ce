#include "rface/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "rface/errors.hpp"

namespace rface {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'A', 'C', 'E', 'A', 'R', 'C'};

static_assert(std::endian::native == std::endian::little,
              "tensor archives are little-endian; big-endian hosts are not supported");

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw ContractError(std::string("tensor archive: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  if (tag == "u8") return torch::kUInt8;
  throw FormatError("tensor archive: unknown dtype tag '" + tag + "'");
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("tensor archive: truncated header");
  return v;
}

}  // namespace

const torch::Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [key, t] : tensors) {
    if (key == name) return &t;
  }
  return nullptr;
}

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::json index = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  uint64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const uint64_t nbytes = t.numel() * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_tag(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
    payload.push_back(std::move(t));
  }
  const nlohmann::json header{{"meta", archive.meta}, {"tensors", index}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kTensorArchiveVersion);
  put<uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : payload) {
    os.write(static_cast<const char*>(t.data_ptr()),
             static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not a tensor archive (bad magic)");
  }
  const auto version = get<uint32_t>(is);
  if (version != kTensorArchiveVersion) {
    throw FormatError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  const auto header_len = get<uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw FormatError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt header: " + e.what());
  }

  TensorArchive archive;
  archive.meta = header.value("meta", nlohmann::json::object());
  const auto payload_start = is.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto offset = entry.at("offset").get<uint64_t>();
    const auto nbytes = entry.at("nbytes").get<uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    if (static_cast<uint64_t>(t.numel() * t.element_size()) != nbytes) {
      throw FormatError(path.string() + ": size mismatch for tensor " +
                        entry.at("name").get<std::string>());
    }
    is.seekg(payload_start + static_cast<std::streamoff>(offset));
    is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!is) throw FormatError(path.string() + ": truncated payload");
    archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

}  // namespace rface
