#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanedetect/image.hpp"

namespace lanedetect {

/// One frame with its label sources. At least one of mask/annotation is set.
struct DatasetEntry {
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
  std::optional<std::filesystem::path> annotation;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;  // sorted by image path
  std::vector<std::string> warnings;
};

/// Where labels live relative to a CULane-style tree.
struct ScanOptions {
  std::vector<std::string> image_extensions{".jpg", ".jpeg", ".ppm"};
  std::string mask_dir = "laneseg_label_w16";
  std::vector<std::string> mask_extensions{".png", ".pgm"};
  std::string annotation_suffix = ".lines.txt";
};

/// Finds <root>/<drive>/<frame>.jpg with <frame>.lines.txt next to it and
/// masks at <root>/<mask_dir>/<drive>/<frame>.png.
///
/// With a list file only the listed frames (first token per line, relative to
/// root) are considered. Frames without any label source are skipped with a
/// warning. Throws IoError when root does not exist.
DatasetIndex scan_dataset(const std::filesystem::path& root,
                          const std::optional<std::filesystem::path>& list_file = std::nullopt,
                          const ScanOptions& options = {});

/// One polyline per non-empty line of alternating "x y" values.
/// Throws ParseError on odd token counts, non-numeric tokens or more than 4 lanes.
std::vector<Polyline> parse_annotation(std::string_view text);

struct SplitSpec {
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
};

/// Seeded Fisher-Yates shuffle (std::mt19937_64 stream), then the first
/// floor(fraction * N) entries go to train and the rest to dev.
/// Throws DataError for an empty index.
std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& index,
                                                    const SplitSpec& spec = {});

/// In-place Fisher-Yates permutation of 0..n-1 driven by `rng`.
std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng);

}  // namespace lanedetect
