#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rface/dataset.hpp"
#include "rface/image_io.hpp"

using namespace rface;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rface_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_mask(const fs::path& path, int size, cv::Rect box) {
  cv::Mat m(size, size, CV_8UC1, cv::Scalar(0));
  m(box).setTo(255);
  cv::imwrite(path.string(), m);
}

// Three 40 x 40 samples: skin everywhere, nose box, left eye box overlapping the nose.
fs::path celebamask_fixture(const std::string& name, bool nested) {
  auto root = fresh_dir(name);
  auto img_dir = nested ? root / "CelebA-HQ-img" : root;
  auto mask_dir = nested ? root / "CelebAMask-HQ-mask-anno" / "0" : root;
  fs::create_directories(img_dir);
  fs::create_directories(mask_dir);
  for (int id : {0, 1, 2}) {
    cv::Mat img(40, 40, CV_8UC3, cv::Scalar(30 * id, 100, 200));
    cv::imwrite((img_dir / (std::to_string(id) + ".jpg")).string(), img);
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%05d", id);
    write_mask(mask_dir / (std::string(stem) + "_skin.png"), 40, {0, 0, 40, 40});
    write_mask(mask_dir / (std::string(stem) + "_nose.png"), 40, {16, 16, 8, 12});
    write_mask(mask_dir / (std::string(stem) + "_l_eye.png"), 40, {8 + id, 10, 12, 8});
  }
  return root;
}

}  // namespace

TEST(ToyData, DeterministicPerSeed) {
  auto a = synth_toy_dataset(4, 32, 3);
  auto b = synth_toy_dataset(4, 32, 3);
  auto c = synth_toy_dataset(4, 32, 4);
  ASSERT_EQ(a.size(), 4u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_TRUE(torch::equal(a[i].image, b[i].image));
    EXPECT_TRUE(torch::equal(a[i].labels, b[i].labels));
  }
  EXPECT_FALSE(torch::equal(a[0].image, c[0].image));
  EXPECT_THROW(synth_toy_dataset(1, 8, 0), ContractError);
}

TEST(ToyData, LabelsCoverEveryComponentAndVary) {
  auto data = synth_toy_dataset(16, 32, 1);
  std::set<int64_t> eye_counts;
  for (const auto& s : data) {
    EXPECT_EQ(s.image.sizes(), (std::vector<int64_t>{3, 32, 32}));
    EXPECT_LE(s.image.abs().max().item<float>(), 1.0f);
    for (auto c : kAllComponents) {
      for (int id : component_class_ids(c)) {
        EXPECT_GT(s.labels.eq(id).sum().item<int64_t>(), 0) << s.id << " class " << id;
      }
    }
    eye_counts.insert(s.labels.eq(face_class::kLeftEye).sum().item<int64_t>() +
                      s.labels.eq(face_class::kRightEye).sum().item<int64_t>());
  }
  EXPECT_GT(eye_counts.size(), 1u);
}

TEST(ToyData, PaletteThresholdsRecoverComponents) {
  auto data = synth_toy_dataset(8, 32, 2);
  int64_t agree = 0, total = 0;
  for (const auto& s : data) {
    auto guess = toy_palette_components(s.image);
    for (auto c : kAllComponents) {
      auto truth = torch::zeros_like(s.labels, torch::kBool);
      for (int id : component_class_ids(c)) truth = truth | s.labels.eq(id);
      auto pred = guess.eq(1 + static_cast<int>(c));
      agree += (truth & pred).sum().item<int64_t>();
      total += (truth | pred).sum().item<int64_t>();
    }
  }
  EXPECT_GT(static_cast<double>(agree) / total, 0.9);
}

TEST(ComponentSampling, SizesFrequenciesReproducibility) {
  std::mt19937_64 rng(123);
  std::map<int, int> sizes;
  std::map<std::string, int> subsets;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    auto s = sample_component_subset(rng);
    sizes[s.size()]++;
    subsets[s.to_string()]++;
  }
  EXPECT_EQ(sizes.size(), 2u);
  EXPECT_NEAR(sizes[2] / static_cast<double>(draws), 0.5, 0.02);
  EXPECT_NEAR(sizes[3] / static_cast<double>(draws), 0.5, 0.02);
  // Each of the three pairs is equally likely.
  for (auto pair : {"eyes,nose", "eyes,mouth", "nose,mouth"}) {
    EXPECT_NEAR(subsets[pair] / static_cast<double>(draws), 1.0 / 6.0, 0.02) << pair;
  }
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_component_subset(a), sample_component_subset(b));
}

TEST(Split, HoldsOutTail) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(std::to_string(i));
  auto s = split_ids(ids, 3);
  EXPECT_EQ(s.train, (std::vector<std::string>(ids.begin(), ids.begin() + 7)));
  EXPECT_EQ(s.test, (std::vector<std::string>(ids.begin() + 7, ids.end())));
  EXPECT_EQ(split_ids(ids).test.size(), 10u);
  EXPECT_TRUE(split_ids(ids).train.empty());
  EXPECT_THROW(split_ids(ids, -1), ContractError);
}

TEST(CelebAMask, LoadsFixture) {
  auto root = celebamask_fixture("celeba_flat", false);
  EXPECT_EQ(scan_celebamask_index(root), (std::vector<std::string>{"0", "1", "2"}));
  auto data = load_celebamask_hq(root, 20);
  ASSERT_EQ(data.size(), 3u);
  for (const auto& s : data) {
    EXPECT_EQ(s.image.sizes(), (std::vector<int64_t>{3, 20, 20}));
    std::set<int64_t> values;
    auto flat = s.labels.flatten();
    for (int64_t i = 0; i < flat.numel(); ++i) values.insert(flat[i].item<int64_t>());
    EXPECT_EQ(values, (std::set<int64_t>{face_class::kSkin, face_class::kNose, face_class::kLeftEye}));
  }
  // The eye box overlaps the nose; the higher class id wins.
  EXPECT_EQ(data[0].labels[5][5].item<int64_t>(), face_class::kLeftEye);
  EXPECT_EQ(data[0].labels[13][10].item<int64_t>(), face_class::kNose);
  EXPECT_EQ(data[0].labels[0][0].item<int64_t>(), face_class::kSkin);
  fs::remove_all(root);
}

TEST(CelebAMask, ReleasedLayoutDetected) {
  auto root = celebamask_fixture("celeba_nested", true);
  auto layout = detect_celebamask_layout(root);
  EXPECT_EQ(layout.image_dir, "CelebA-HQ-img");
  EXPECT_EQ(layout.mask_dir, "CelebAMask-HQ-mask-anno");
  EXPECT_EQ(load_celebamask_hq(root, 16, layout).size(), 3u);
  fs::remove_all(root);
}

TEST(CelebAMask, MissingFilesNameTheId) {
  auto root = celebamask_fixture("celeba_missing", false);
  fs::remove(root / "1.jpg");
  try {
    scan_celebamask_index(root);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("id 1"), std::string::npos) << e.what();
  }
  fs::remove_all(root);
}

TEST(CelebAMask, MockedFullIndexSplit) {
  auto root = fresh_dir("celeba_mock_small");
  for (int id = 0; id < 120; ++id) {
    std::ofstream(root / (std::to_string(id) + ".jpg")).put('x');
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%05d", id);
    std::ofstream(root / (std::string(stem) + "_skin.png")).put('x');
  }
  auto ids = scan_celebamask_index(root);
  ASSERT_EQ(ids.size(), 120u);
  EXPECT_EQ(ids[9], "9");
  EXPECT_EQ(ids[10], "10");
  auto split = split_ids(ids, 20);
  EXPECT_EQ(split.train.size(), 100u);
  EXPECT_EQ(split.test.front(), "100");
  fs::remove_all(root);
}

TEST(Prepared, RoundTrip) {
  auto dir = fresh_dir("prepared");
  auto data = synth_toy_dataset(5, 16, 7);
  std::vector<std::string> ids;
  for (const auto& s : data) ids.push_back(s.id);
  const auto split = split_ids(ids, 2);
  write_prepared(dir, data, split);
  DatasetSplit loaded_split;
  auto loaded = load_prepared(dir, &loaded_split);
  EXPECT_EQ(loaded_split.train, split.train);
  EXPECT_EQ(loaded_split.test, split.test);
  ASSERT_EQ(loaded.size(), data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(loaded[i].id, data[i].id);
    EXPECT_TRUE(torch::equal(loaded[i].labels, data[i].labels));
    EXPECT_LE((loaded[i].image - data[i].image).abs().max().item<float>(), 1.0f / 255.0f + 1e-6f);
  }
  auto subset = select(loaded, split.test);
  ASSERT_EQ(subset.size(), 2u);
  EXPECT_EQ(subset[1].id, ids.back());
  fs::remove_all(dir);
}

TEST(ImageIo, HconcatAndGray) {
  auto a = torch::zeros({3, 4, 5});
  auto b = torch::ones({3, 4, 2});
  auto h = hconcat({a, b});
  EXPECT_EQ(h.sizes(), (std::vector<int64_t>{3, 4, 7}));
  auto dir = fresh_dir("gray");
  auto labels = torch::randint(0, 19, {6, 6}, torch::kLong);
  write_gray_u8(dir / "l.png", labels);
  EXPECT_TRUE(torch::equal(read_gray_u8(dir / "l.png"), labels));
  EXPECT_ANY_THROW(read_rgb(dir / "absent.png"));
  fs::remove_all(dir);
}
