#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lanedetect/image.hpp"

namespace lanedetect {

namespace {

Image from_mat(const cv::Mat& mat) {
  Image img;
  img.width = static_cast<std::size_t>(mat.cols);
  img.height = static_cast<std::size_t>(mat.rows);
  img.channels = static_cast<std::size_t>(mat.channels());
  img.pixels.resize(img.width * img.height * img.channels);
  const std::size_t row_bytes = img.width * img.channels;
  for (int y = 0; y < mat.rows; ++y) {
    std::copy(mat.ptr<std::uint8_t>(y), mat.ptr<std::uint8_t>(y) + row_bytes,
              img.pixels.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
  }
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

Image load_mask(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode mask " + path.string());
  if (raw.depth() != CV_8U) throw DataError("mask " + path.string() + " is not 8-bit");
  if (raw.channels() > 1) {
    cv::Mat first;
    cv::extractChannel(raw, first, 0);
    raw = first;
  }
  return from_mat(raw);
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("save_image: only 1- or 3-channel images are supported");
  }
  cv::Mat view(static_cast<int>(image.height), static_cast<int>(image.width),
               image.channels == 1 ? CV_8UC1 : CV_8UC3,
               const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat out;
  if (image.channels == 3) {
    cv::cvtColor(view, out, cv::COLOR_RGB2BGR);
  } else {
    out = view;
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write image " + path.string());
}

}  // namespace lanedetect
