#pragma once

// On-disk CULane-style trees for pipeline tests.

#include <filesystem>
#include <fstream>
#include <string>

#include "lanedetect/image.hpp"
#include "lanedetect/rng.hpp"

namespace lanedetect::test {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lanedetect_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Image noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img = Image::blank(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Label image with lane ids 0..4 in vertical stripes.
inline Image stripe_labels(std::size_t w, std::size_t h) {
  Image m = Image::blank(w, h, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.pixels[y * w + x] = static_cast<std::uint8_t>((x / 40) % 5);
  return m;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// <root>/<drive>/<frame>.ppm with masks under laneseg_label_w16 and/or .lines.txt.
inline void add_frame(const std::filesystem::path& root, const std::string& drive, const std::string& frame,
                      bool with_mask, bool with_annotation, std::size_t w = kCulaneWidth,
                      std::size_t h = kCulaneHeight, std::uint64_t seed = 1) {
  std::filesystem::create_directories(root / drive);
  save_image(root / drive / (frame + ".ppm"), noise_image(w, h, seed));
  if (with_mask) {
    std::filesystem::create_directories(root / "laneseg_label_w16" / drive);
    save_image(root / "laneseg_label_w16" / drive / (frame + ".png"), stripe_labels(w, h));
  }
  if (with_annotation) {
    write_text(root / drive / (frame + ".lines.txt"), "100 589 400 300\n1500 589 1100 300\n");
  }
}

}  // namespace lanedetect::test
