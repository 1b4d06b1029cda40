#include "lanedetect/image.hpp"

#include <algorithm>
#include <cmath>

namespace lanedetect {

Image Image::blank(std::size_t width, std::size_t height, std::size_t channels,
                   std::uint8_t value) {
  return Image{width, height, channels, std::vector<std::uint8_t>(width * height * channels, value)};
}

Image binarize_mask(const Image& raw) {
  if (raw.channels != 1) throw DataError("binarize_mask: expected a single-channel mask");
  Image out = raw;
  for (auto& v : out.pixels) {
    if (v > kMaxLanes) {
      throw DataError("mask value " + std::to_string(v) + " outside 0.." + std::to_string(kMaxLanes));
    }
    v = v == 0 ? 0 : 1;
  }
  return out;
}

Image resize_area(const Image& src, std::size_t out_width, std::size_t out_height) {
  if (src.width == 0 || src.height == 0 || out_width == 0 || out_height == 0) {
    throw DataError("resize_area: empty image");
  }
  // Separable: per-axis lists of (source index, weight) for each output index.
  struct Tap {
    std::size_t index;
    double weight;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<Tap>> all(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double lo = static_cast<double>(o) * ratio;
      const double hi = static_cast<double>(o + 1) * ratio;
      for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
        const double w = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (w > 0.0) all[o].push_back({i, w / ratio});
      }
    }
    return all;
  };
  const auto xt = taps(src.width, out_width);
  const auto yt = taps(src.height, out_height);
  Image out = Image::blank(out_width, out_height, src.channels);
  std::vector<double> row(src.width * src.channels);
  for (std::size_t oy = 0; oy < out_height; ++oy) {
    std::fill(row.begin(), row.end(), 0.0);
    for (const Tap& ty : yt[oy]) {
      const std::uint8_t* s = &src.pixels[ty.index * src.width * src.channels];
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += ty.weight * s[i];
    }
    for (std::size_t ox = 0; ox < out_width; ++ox) {
      for (std::size_t c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        for (const Tap& tx : xt[ox]) acc += tx.weight * row[tx.index * src.channels + c];
        out.at(oy, ox, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& src, std::size_t out_width, std::size_t out_height) {
  if (src.width == 0 || src.height == 0 || out_width == 0 || out_height == 0) {
    throw DataError("resize_nearest: empty image");
  }
  Image out = Image::blank(out_width, out_height, src.channels);
  for (std::size_t oy = 0; oy < out_height; ++oy) {
    const std::size_t sy = std::min(src.height - 1, (2 * oy + 1) * src.height / (2 * out_height));
    for (std::size_t ox = 0; ox < out_width; ++ox) {
      const std::size_t sx = std::min(src.width - 1, (2 * ox + 1) * src.width / (2 * out_width));
      for (std::size_t c = 0; c < src.channels; ++c) out.at(oy, ox, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

void scaled_size(std::size_t width, std::size_t height, const ResizeOptions& options,
                 std::size_t& out_width, std::size_t& out_height) {
  if (!(options.scale > 0.0 && options.scale <= 1.0)) {
    throw DomainError("resize scale must lie in (0, 1]");
  }
  if (!options.allow_any_size && (width != kCulaneWidth || height != kCulaneHeight)) {
    throw DataError("expected a " + std::to_string(kCulaneWidth) + "x" +
                    std::to_string(kCulaneHeight) + " frame, got " + std::to_string(width) + "x" +
                    std::to_string(height) + " (use --allow-any-size to override)");
  }
  out_width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(width * options.scale)));
  out_height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(height * options.scale)));
}

Image resize_image(const Image& image, const ResizeOptions& options) {
  std::size_t w = 0, h = 0;
  scaled_size(image.width, image.height, options, w, h);
  return resize_area(image, w, h);
}

Image resize_mask(const Image& mask, const ResizeOptions& options) {
  std::size_t w = 0, h = 0;
  scaled_size(mask.width, mask.height, options, w, h);
  return binarize_mask(resize_nearest(mask, w, h));
}

Image render_polylines(const std::vector<Polyline>& lanes, std::size_t width, std::size_t height,
                       double thickness) {
  if (lanes.size() > kMaxLanes) throw DataError("more than 4 lanes in one frame");
  Image mask = Image::blank(width, height, 1);
  const double r = thickness / 2.0;
  for (std::size_t lane = 0; lane < lanes.size(); ++lane) {
    const Polyline& pts = lanes[lane];
    const auto value = static_cast<std::uint8_t>(lane + 1);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Point2 a = pts[k];
      const Point2 b = k + 1 < pts.size() ? pts[k + 1] : pts[k];
      const double x0 = std::max(0.0, std::floor(std::min(a.x, b.x) - r));
      const double x1 = std::min(static_cast<double>(width) - 1, std::ceil(std::max(a.x, b.x) + r));
      const double y0 = std::max(0.0, std::floor(std::min(a.y, b.y) - r));
      const double y1 = std::min(static_cast<double>(height) - 1, std::ceil(std::max(a.y, b.y) + r));
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      for (double y = y0; y <= y1; y += 1.0) {
        for (double x = x0; x <= x1; x += 1.0) {
          // Distance from the pixel centre to the segment.
          const double px = x + 0.5 - a.x, py = y + 0.5 - a.y;
          const double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
          const double ex = px - t * dx, ey = py - t * dy;
          if (ex * ex + ey * ey <= r * r) {
            mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = value;
          }
        }
      }
    }
  }
  return mask;
}

Image overlay_mask(const Image& rgb, const Image& mask, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b, double alpha) {
  if (rgb.channels != 3 || mask.channels != 1 || rgb.width != mask.width ||
      rgb.height != mask.height) {
    throw DataError("overlay_mask: need an RGB image and a same-sized single-channel mask");
  }
  Image out = rgb;
  const std::uint8_t color[3] = {r, g, b};
  for (std::size_t y = 0; y < rgb.height; ++y) {
    for (std::size_t x = 0; x < rgb.width; ++x) {
      if (mask.at(y, x) == 0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - alpha) * rgb.at(y, x, c) + alpha * color[c];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

template <class T>
void channel_shift(Tensor<T>& batch, double intensity, Rng& rng) {
  if (!(intensity >= 0.0)) throw DomainError("channel shift intensity must be >= 0");
  if (intensity == 0.0) return;
  const Shape& s = batch.shape();
  const std::size_t plane = s.h * s.w;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T delta = static_cast<T>(rng.uniform(-intensity, intensity));
    T* p = batch.data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = std::clamp(p[i] + delta, T(0), T(1));
  }
}

template void channel_shift(Tensor<float>&, double, Rng&);
template void channel_shift(Tensor<double>&, double, Rng&);

}  // namespace lanedetect
