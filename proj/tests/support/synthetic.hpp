#pragma once

// Synthetic road frames with straight painted lanes, for overfit and pipeline tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lanedetect/image.hpp"
#include "lanedetect/rng.hpp"
#include "lanedetect/shard.hpp"

namespace lanedetect::test {

// Lane lines from the bottom edge towards a vanishing point, drawn as
// thickness-px strokes. Image: grey asphalt with noise, lanes near-white.
inline SampleRecord straight_lane_sample(std::uint64_t seed, std::size_t height = 118,
                                         std::size_t width = 328, double thickness = 3.0) {
  Rng rng(seed);
  const std::size_t lanes = 2 + rng.below(3);
  const Point2 vanish{width * rng.uniform(0.4, 0.6), height * rng.uniform(0.3, 0.45)};
  std::vector<Polyline> polys;
  for (std::size_t k = 0; k < lanes; ++k) {
    const double base = width * (0.1 + 0.8 * (k + rng.uniform(0.2, 0.8)) / static_cast<double>(lanes));
    polys.push_back(Polyline{{base, static_cast<double>(height - 1)},
                             {vanish.x + 0.15 * (base - vanish.x), vanish.y + 0.15 * (height - 1 - vanish.y)}});
  }
  const Image raw = render_polylines(polys, width, height, thickness);
  SampleRecord r;
  r.height = height;
  r.width = width;
  r.image.resize(height * width * 3);
  r.mask.resize(height * width);
  for (std::size_t i = 0; i < height * width; ++i) {
    const bool lane = raw.pixels[i] != 0;
    r.mask[i] = lane ? 1 : 0;
    const double base = lane ? 225.0 : 70.0 + 25.0 * (static_cast<double>(i / width) / height);
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = base + rng.uniform(-12.0, 12.0);
      r.image[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return r;
}

inline std::vector<SampleRecord> straight_lane_set(std::size_t count, std::uint64_t seed,
                                                   std::size_t height = 118, std::size_t width = 328) {
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(straight_lane_sample(derive_seed(seed, {i}), height, width));
  return out;
}

}  // namespace lanedetect::test
