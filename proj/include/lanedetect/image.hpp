#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lanedetect/rng.hpp"
#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// 8-bit raster, interleaved (HWC) rows, 1 or 3 channels. RGB order for colour.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  static Image blank(std::size_t width, std::size_t height, std::size_t channels,
                     std::uint8_t value = 0);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Polyline = std::vector<Point2>;

inline constexpr std::size_t kCulaneWidth = 1640;
inline constexpr std::size_t kCulaneHeight = 590;
inline constexpr double kDefaultScale = 0.2;
inline constexpr std::size_t kMaxLanes = 4;

/// CULane label values 0..4 become {0, 1}. Any value above 4 throws DataError.
Image binarize_mask(const Image& raw);

/// Area-average resampling; each output pixel is the overlap-weighted mean of the
/// source pixels it covers (an exact block mean for integer factors).
Image resize_area(const Image& src, std::size_t out_width, std::size_t out_height);

/// Nearest-neighbour resampling (sample at pixel centres).
Image resize_nearest(const Image& src, std::size_t out_width, std::size_t out_height);

struct ResizeOptions {
  double scale = kDefaultScale;
  bool allow_any_size = false;
};

/// Output dimensions for `scale`. Without allow_any_size only 1640x590 input is accepted.
void scaled_size(std::size_t width, std::size_t height, const ResizeOptions& options,
                 std::size_t& out_width, std::size_t& out_height);

/// Camera frame to working resolution by area averaging.
Image resize_image(const Image& image, const ResizeOptions& options = {});

/// Label mask to working resolution: nearest neighbour, then binarize.
Image resize_mask(const Image& mask, const ResizeOptions& options = {});

/// Draws each polyline with straight segments of the given thickness into a
/// single-channel mask; lane i (0-based) is written with value i + 1.
Image render_polylines(const std::vector<Polyline>& lanes, std::size_t width, std::size_t height,
                       double thickness);

/// Blends `color` over pixels where mask != 0; other pixels are copied unchanged.
Image overlay_mask(const Image& rgb, const Image& mask, std::uint8_t r = 255, std::uint8_t g = 0,
                   std::uint8_t b = 0, double alpha = 0.6);

/// Adds an independent uniform delta in [-intensity, intensity] to every
/// (sample, channel) plane of a [0,1]-valued batch and clamps to [0, 1].
template <class T>
void channel_shift(Tensor<T>& batch, double intensity, Rng& rng);

/// Decodes JPEG/PNG/PPM/PGM via OpenCV. Colour images come back as RGB.
Image load_image(const std::filesystem::path& path);
/// Loads a label mask as a single 8-bit channel (first channel of colour files).
Image load_mask(const std::filesystem::path& path);
/// Encoding follows the extension (.png, .pgm, .ppm, .jpg).
void save_image(const std::filesystem::path& path, const Image& image);

}  // namespace lanedetect
