#include "rface/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rface/errors.hpp"
#include "rface/image_io.hpp"

namespace rface {

namespace fs = std::filesystem;

DatasetSplit split_ids(const std::vector<std::string>& ids, int64_t test_count) {
  if (test_count < 0) throw ContractError("split_ids: test_count must be non-negative");
  const auto n = static_cast<int64_t>(ids.size());
  const auto held = std::min(test_count, n);
  DatasetSplit split;
  split.train.assign(ids.begin(), ids.begin() + (n - held));
  split.test.assign(ids.begin() + (n - held), ids.end());
  return split;
}

FaceDataset select(const FaceDataset& dataset, const std::vector<std::string>& ids) {
  std::map<std::string, const FaceSample*> by_id;
  for (const auto& s : dataset) by_id[s.id] = &s;
  FaceDataset out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("dataset has no sample with id " + id);
    out.push_back(*it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string canonical_id(const std::string& id) {
  if (!all_digits(id)) return id;
  auto pos = id.find_first_not_of('0');
  return pos == std::string::npos ? "0" : id.substr(pos);
}

struct MaskIndex {
  // id -> class id -> path
  std::map<std::string, std::map<int, fs::path>> masks;
  std::map<std::string, fs::path> images;
};

MaskIndex build_index(const fs::path& root, const CelebAMaskLayout& layout) {
  const auto image_dir = layout.image_dir.empty() ? root : root / layout.image_dir;
  const auto mask_dir = layout.mask_dir.empty() ? root : root / layout.mask_dir;
  if (!fs::is_directory(image_dir)) throw FormatError("no image directory " + image_dir.string());
  if (!fs::is_directory(mask_dir)) throw FormatError("no mask directory " + mask_dir.string());

  std::map<std::string_view, int> class_by_name;
  const auto& names = face_class_names();
  for (int c = 1; c < kNumFaceClasses; ++c) class_by_name[names[c]] = c;

  MaskIndex index;
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".jpg") continue;
    index.images[canonical_id(entry.path().stem().string())] = entry.path();
  }
  for (const auto& entry : fs::recursive_directory_iterator(mask_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const auto stem = entry.path().stem().string();
    // class names may contain '_' (e.g. "l_eye"), so try every split point
    for (auto pos = stem.find('_'); pos != std::string::npos; pos = stem.find('_', pos + 1)) {
      auto it = class_by_name.find(std::string_view(stem).substr(pos + 1));
      if (it != class_by_name.end()) {
        index.masks[canonical_id(stem.substr(0, pos))][it->second] = entry.path();
        break;
      }
    }
  }
  return index;
}

std::vector<std::string> sorted_ids(const MaskIndex& index) {
  std::set<std::string> ids;
  for (const auto& [id, p] : index.images) ids.insert(id);
  for (const auto& [id, m] : index.masks) ids.insert(id);
  std::vector<std::string> out(ids.begin(), ids.end());
  const bool numeric = std::all_of(out.begin(), out.end(), all_digits);
  if (numeric) {
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
  }
  for (const auto& id : out) {
    if (!index.images.count(id)) throw FormatError("missing image file for id " + id);
    if (!index.masks.count(id)) throw FormatError("missing label masks for id " + id);
  }
  return out;
}

}  // namespace

CelebAMaskLayout detect_celebamask_layout(const fs::path& root) {
  CelebAMaskLayout layout;
  if (fs::is_directory(root / "CelebA-HQ-img")) layout.image_dir = "CelebA-HQ-img";
  if (fs::is_directory(root / "CelebAMask-HQ-mask-anno")) layout.mask_dir = "CelebAMask-HQ-mask-anno";
  return layout;
}

std::vector<std::string> scan_celebamask_index(const fs::path& root, const CelebAMaskLayout& layout) {
  return sorted_ids(build_index(root, layout));
}

FaceDataset load_celebamask_hq(const fs::path& root, int size, const CelebAMaskLayout& layout,
                               int64_t limit) {
  if (size < 1) throw ContractError("load_celebamask_hq: size must be positive");
  const auto index = build_index(root, layout);
  auto ids = sorted_ids(index);
  if (limit > 0 && static_cast<int64_t>(ids.size()) > limit) ids.resize(static_cast<size_t>(limit));

  FaceDataset out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    FaceSample s;
    s.id = id;
    s.image = read_rgb(index.images.at(id), size);
    torch::Tensor labels;
    // later classes overwrite earlier ones, as in the reference preprocessing
    for (const auto& [cls, path] : index.masks.at(id)) {
      auto m = read_gray_u8(path);
      if (!labels.defined()) labels = torch::zeros_like(m);
      if (m.sizes() != labels.sizes()) {
        throw FormatError("mask " + path.string() + " has a different size than its siblings");
      }
      labels.masked_fill_(m.gt(127), cls);
    }
    auto u8 = labels.to(torch::kUInt8).unsqueeze(0).unsqueeze(0).to(torch::kFloat32);
    s.labels = torch::upsample_nearest2d(u8, {size, size}).squeeze(0).squeeze(0).to(torch::kLong);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_prepared(const fs::path& dir, const FaceDataset& dataset, const DatasetSplit& split) {
  fs::create_directories(dir);
  for (const auto& s : dataset) {
    write_rgb(dir / (s.id + ".png"), s.image);
    write_gray_u8(dir / (s.id + "_label.png"), s.labels);
  }
  std::ofstream os(dir / "split.tsv");
  for (const auto& id : split.train) os << id << "\ttrain\n";
  for (const auto& id : split.test) os << id << "\ttest\n";
  if (!os) throw FormatError("cannot write " + (dir / "split.tsv").string());
}

FaceDataset load_prepared(const fs::path& dir, DatasetSplit* split) {
  std::ifstream is(dir / "split.tsv");
  if (!is) throw FormatError("missing " + (dir / "split.tsv").string());
  FaceDataset out;
  DatasetSplit local;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, part;
    if (!(ls >> id >> part) || (part != "train" && part != "test")) {
      throw FormatError("malformed split line: " + line);
    }
    (part == "train" ? local.train : local.test).push_back(id);
    const auto image = dir / (id + ".png");
    const auto labels = dir / (id + "_label.png");
    if (!fs::exists(image) || !fs::exists(labels)) throw FormatError("missing files for id " + id);
    out.push_back({id, read_rgb(image), read_gray_u8(labels)});
  }
  if (split != nullptr) *split = std::move(local);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic faces

namespace {

using Rgb = std::array<float, 3>;

struct ToyFace {
  Rgb background, skin, hair, eye, nose, lip, mouth;
  double face_cy, face_rx, face_ry;
  double eye_cy, eye_dx, eye_rx, eye_ry;
  double nose_top, nose_bottom, nose_halfwidth;
  double mouth_cy, mouth_rx, mouth_ry, mouth_open;
};

Rgb jitter(const Rgb& base, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(std::clamp(base[c] + u(rng), 0.0, 1.0));
  return out;
}

ToyFace random_face(int64_t size, std::mt19937_64& rng) {
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double px = 1.0 / static_cast<double>(size);
  ToyFace f;
  f.background = jitter({0.45f, 0.5f, 0.55f}, 0.1, rng);
  f.skin = jitter({0.9f, 0.73f, 0.6f}, 0.04, rng);
  f.hair = jitter({0.28f, 0.18f, 0.1f}, 0.05, rng);
  f.eye = jitter({0.1f, 0.12f, 0.33f}, 0.05, rng);
  f.nose = jitter({0.58f, 0.39f, 0.29f}, 0.03, rng);
  f.lip = jitter({0.83f, 0.22f, 0.28f}, 0.04, rng);
  f.mouth = jitter({0.4f, 0.05f, 0.08f}, 0.03, rng);
  f.face_cy = 0.55 + U(-0.02, 0.02);
  f.face_rx = U(0.36, 0.42);
  f.face_ry = U(0.42, 0.47);
  f.eye_cy = 0.45 + U(-0.02, 0.02);
  f.eye_dx = U(0.15, 0.19);
  f.eye_rx = U(0.06, 0.11);
  f.eye_ry = U(0.035, 0.07);
  f.nose_top = 0.5;
  f.nose_bottom = U(0.62, 0.68);
  f.nose_halfwidth = U(0.05, 0.09);
  f.mouth_cy = 0.76 + U(-0.015, 0.015);
  f.mouth_rx = U(0.09, 0.17);
  f.mouth_open = std::max(0.5 * px, U(0.0, 0.015));
  f.mouth_ry = std::max(U(0.04, 0.07), f.mouth_open + 1.5 * px);
  return f;
}

int toy_label(const ToyFace& f, double u, double v, double px) {
  auto inside = [](double du, double dv, double rx, double ry) {
    return (du * du) / (rx * rx) + (dv * dv) / (ry * ry) <= 1.0;
  };
  const double dx = u - 0.5;
  if (inside(dx, v - f.mouth_cy, f.mouth_rx, f.mouth_ry)) {
    if (std::abs(v - f.mouth_cy) <= f.mouth_open) return face_class::kMouth;
    return v < f.mouth_cy ? face_class::kUpperLip : face_class::kLowerLip;
  }
  if (v >= f.nose_top && v <= f.nose_bottom) {
    const double t = (v - f.nose_top) / (f.nose_bottom - f.nose_top);
    if (std::abs(dx) <= f.nose_halfwidth * t + 0.6 * px) return face_class::kNose;
  }
  if (inside(u - (0.5 - f.eye_dx), v - f.eye_cy, f.eye_rx, f.eye_ry)) return face_class::kLeftEye;
  if (inside(u - (0.5 + f.eye_dx), v - f.eye_cy, f.eye_rx, f.eye_ry)) return face_class::kRightEye;
  if (inside(dx, v - f.face_cy, f.face_rx, f.face_ry)) return face_class::kSkin;
  if (v < f.face_cy - 0.55 * f.face_ry && inside(dx, v - f.face_cy, 1.08 * f.face_rx, 1.08 * f.face_ry)) {
    return face_class::kHair;
  }
  return face_class::kBackground;
}

const Rgb& toy_color(const ToyFace& f, int label) {
  switch (label) {
    case face_class::kSkin: return f.skin;
    case face_class::kHair: return f.hair;
    case face_class::kLeftEye:
    case face_class::kRightEye: return f.eye;
    case face_class::kNose: return f.nose;
    case face_class::kUpperLip:
    case face_class::kLowerLip: return f.lip;
    case face_class::kMouth: return f.mouth;
    default: return f.background;
  }
}

}  // namespace

FaceDataset synth_toy_dataset(int64_t n, int64_t size, uint64_t seed) {
  if (size < 16) throw ContractError("synth_toy_dataset: size must be at least 16");
  if (n < 0) throw ContractError("synth_toy_dataset: n must be non-negative");
  std::mt19937_64 rng(seed);
  const double px = 1.0 / static_cast<double>(size);
  FaceDataset out;
  out.reserve(static_cast<size_t>(n));
  const std::array<int, 6> required{face_class::kLeftEye,  face_class::kRightEye,
                                    face_class::kNose,     face_class::kMouth,
                                    face_class::kUpperLip, face_class::kLowerLip};
  for (int64_t i = 0; i < n; ++i) {
    auto face = random_face(size, rng);
    auto labels = torch::zeros({size, size}, torch::kLong);
    auto image = torch::zeros({3, size, size}, torch::kFloat32);
    auto la = labels.accessor<int64_t, 2>();
    auto ia = image.accessor<float, 3>();
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double u = (static_cast<double>(x) + 0.5) * px;
        const double v = (static_cast<double>(y) + 0.5) * px;
        const int label = toy_label(face, u, v, px);
        la[y][x] = label;
        const auto& c = toy_color(face, label);
        for (int ch = 0; ch < 3; ++ch) ia[ch][y][x] = c[ch] * 2.0f - 1.0f;
      }
    }
    for (int cls : required) {
      if (!labels.eq(cls).any().item<bool>()) {
        throw std::logic_error("synth_toy_dataset: class " + std::to_string(cls) + " missing");
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "toy%05lld", static_cast<long long>(i));
    out.push_back({id, image, labels});
  }
  return out;
}

torch::Tensor toy_palette_components(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw ContractError("toy_palette_components: expected 3 x H x W");
  }
  auto rgb = (image.detach().to(torch::kFloat32) + 1.0) * 0.5;
  auto r = rgb[0], g = rgb[1], b = rgb[2];
  auto lum = 0.299 * r + 0.587 * g + 0.114 * b;
  auto out = torch::zeros(r.sizes(), torch::kLong);
  auto mouth = (r - g).gt(0.28);
  auto eyes = b.gt(r + 0.05).logical_and(lum.lt(0.35));
  auto nose = lum.ge(0.3).logical_and(lum.lt(0.6)).logical_and(r.gt(b + 0.15)).logical_and(mouth.logical_not());
  out.masked_fill_(nose, 1 + static_cast<int>(Component::kNose));
  out.masked_fill_(mouth, 1 + static_cast<int>(Component::kMouth));
  out.masked_fill_(eyes, 1 + static_cast<int>(Component::kEyes));
  return out;
}

ComponentSet sample_component_subset(std::mt19937_64& rng, const std::vector<int>& sizes) {
  if (sizes.empty()) throw ContractError("sample_component_subset: no sizes");
  std::uniform_int_distribution<size_t> pick(0, sizes.size() - 1);
  const int k = sizes[pick(rng)];
  if (k < 0 || k > 3) throw ContractError("sample_component_subset: size must be 0..3");
  auto order = kAllComponents;
  std::shuffle(order.begin(), order.end(), rng);
  ComponentSet set;
  for (int i = 0; i < k; ++i) set.insert(order[static_cast<size_t>(i)]);
  return set;
}

}  // namespace rface
