#include "lanedetect/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lanedetect {

namespace fs = std::filesystem;

namespace {

bool has_extension(const fs::path& p, const std::vector<std::string>& exts) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(exts.begin(), exts.end(), ext) != exts.end();
}

std::optional<DatasetEntry> resolve(const fs::path& root, const fs::path& relative,
                                    const ScanOptions& options, std::vector<std::string>& warnings) {
  DatasetEntry e;
  e.image = root / relative;
  fs::path ann = e.image;
  ann.replace_extension();
  ann += options.annotation_suffix;
  if (fs::is_regular_file(ann)) e.annotation = ann;
  for (const auto& ext : options.mask_extensions) {
    fs::path mask = root / options.mask_dir / relative;
    mask.replace_extension(ext);
    if (fs::is_regular_file(mask)) {
      e.mask = mask;
      break;
    }
  }
  if (!e.mask && !e.annotation) {
    warnings.push_back("no mask or annotation for " + relative.generic_string() + "; skipped");
    return std::nullopt;
  }
  return e;
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& root, const std::optional<fs::path>& list_file,
                          const ScanOptions& options) {
  if (!fs::is_directory(root)) throw IoError("dataset root does not exist: " + root.string());
  std::vector<fs::path> frames;
  if (list_file) {
    std::ifstream in(*list_file);
    if (!in) throw IoError("cannot open list file " + list_file->string());
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream tokens(line);
      std::string first;
      if (!(tokens >> first)) continue;
      while (!first.empty() && first.front() == '/') first.erase(first.begin());
      if (!fs::is_regular_file(root / first)) {
        throw IoError("listed frame does not exist: " + (root / first).string());
      }
      frames.emplace_back(first);
    }
  } else {
    const fs::path masks = root / options.mask_dir;
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
         ++it) {
      if (it->is_directory() && it->path() == masks) {
        it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file() && has_extension(it->path(), options.image_extensions)) {
        frames.push_back(fs::relative(it->path(), root));
      }
    }
  }
  std::sort(frames.begin(), frames.end(), [](const fs::path& a, const fs::path& b) {
    return a.generic_string() < b.generic_string();
  });
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  DatasetIndex index;
  index.root = root;
  for (const auto& rel : frames) {
    if (auto e = resolve(root, rel, options, index.warnings)) index.entries.push_back(std::move(*e));
  }
  return index;
}

std::vector<Polyline> parse_annotation(std::string_view text) {
  std::vector<Polyline> lanes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    std::vector<double> values;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
        if (ec != std::errc() || ptr != line.data() + j) {
          throw ParseError("non-numeric token '" + std::string(line.substr(i, j - i)) + "'", line_no);
        }
        values.push_back(v);
      }
      i = j;
    }
    if (values.empty()) continue;
    if (values.size() % 2 != 0) {
      throw ParseError("odd number of coordinates (" + std::to_string(values.size()) + ")", line_no);
    }
    if (lanes.size() == kMaxLanes) throw ParseError("more than 4 lanes in one annotation", line_no);
    Polyline lane;
    for (std::size_t k = 0; k < values.size(); k += 2) lane.push_back({values[k], values[k + 1]});
    lanes.push_back(std::move(lane));
  }
  return lanes;
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& index,
                                                    const SplitSpec& spec) {
  if (index.entries.empty()) throw DataError("cannot split an empty dataset");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw DomainError("train fraction must lie in (0, 1)");
  }
  Rng rng(derive_seed(spec.seed, {kSplitStream}));
  const auto order = shuffled_order(index.entries.size(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_fraction * static_cast<double>(index.entries.size())));
  DatasetIndex train{index.root, {}, {}};
  DatasetIndex dev{index.root, {}, {}};
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_train ? train : dev).entries.push_back(index.entries[order[k]]);
  }
  return {std::move(train), std::move(dev)};
}

}  // namespace lanedetect
