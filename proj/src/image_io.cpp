#include "rface/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rface/errors.hpp"

namespace rface {

namespace fs = std::filesystem;

torch::Tensor read_rgb(const fs::path& path, int size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot read image " + path.string());
  if (size > 0 && (bgr.rows != size || bgr.cols != size)) {
    const auto interp = bgr.rows > size ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(bgr, bgr, cv::Size(size, size), 0, 0, interp);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

torch::Tensor read_gray_u8(const fs::path& path, int size) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw FormatError("cannot read image " + path.string());
  if (size > 0 && (gray.rows != size || gray.cols != size)) {
    cv::resize(gray, gray, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  }
  return torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8)
      .to(torch::kLong)
      .clone();
}

void write_rgb(const fs::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw ContractError("write_rgb: expected a 3 x H x W tensor");
  }
  auto u8 = image.detach()
                .to(torch::kFloat32)
                .add(1.0)
                .mul(127.5)
                .round()
                .clamp(0, 255)
                .to(torch::kUInt8)
                .permute({1, 2, 0})
                .contiguous();
  cv::Mat rgb(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3,
              u8.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw FormatError("cannot write image " + path.string());
}

void write_gray_u8(const fs::path& path, const torch::Tensor& labels) {
  if (labels.dim() != 2) throw ContractError("write_gray_u8: expected an H x W tensor");
  auto u8 = labels.to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1,
               u8.data_ptr<uint8_t>());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), gray)) throw FormatError("cannot write image " + path.string());
}

torch::Tensor hconcat(const std::vector<torch::Tensor>& images) {
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& im : images) parts.push_back(im.detach().to(torch::kFloat32));
  return torch::cat(parts, 2);
}

}  // namespace rface
