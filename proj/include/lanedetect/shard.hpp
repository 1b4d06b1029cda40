#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lanedetect/dataset.hpp"
#include "lanedetect/image.hpp"

namespace lanedetect {

inline constexpr char kShardMagic[8] = {'L', 'D', 'P', 'K', '0', '0', '0', '1'};
inline constexpr std::size_t kShardHeaderBytes = 20;

/// One training pair at working resolution: RGB image (HWC) and a {0,1} mask.
struct SampleRecord {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> image;  // height * width * 3
  std::vector<std::uint8_t> mask;   // height * width

  /// Throws DataError when sizes are inconsistent or the mask is not binary.
  void validate() const;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct ShardHeader {
  std::uint32_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t record_bytes() const { return std::size_t{height} * width * 4; }
};

/// Shard file: "LDPK0001" | u32 count | u32 H | u32 W | count x (H*W*3 image + H*W mask).
/// Header integers are little-endian.
void write_shard(const std::filesystem::path& path, std::span<const SampleRecord> records);

/// Reads and validates an entire shard. Throws FormatError on bad magic, a
/// count that disagrees with the file size, or non-binary masks.
std::vector<SampleRecord> read_shard(const std::filesystem::path& path);

/// Random access to the records of one shard without loading the file.
class ShardReader {
 public:
  explicit ShardReader(const std::filesystem::path& path);

  const ShardHeader& header() const { return header_; }
  const std::filesystem::path& path() const { return path_; }
  SampleRecord read(std::size_t index);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  ShardHeader header_;
};

/// All *.ldpk files in a directory, sorted by name; a file path is returned as-is.
std::vector<std::filesystem::path> list_shards(const std::filesystem::path& dir_or_file);

struct PrepareOptions {
  ResizeOptions resize;
  std::size_t shard_size = 512;
  /// Stroke width, in source pixels, when a mask must be rendered from annotations.
  double annotation_thickness = 16.0;
};

/// Decodes, resizes and binarizes one dataset entry.
SampleRecord load_sample(const DatasetEntry& entry, const PrepareOptions& options = {});

/// Packs `index` in order into shard_00000.ldpk, shard_00001.ldpk, ... under out_dir.
std::vector<std::filesystem::path> pack_shards(const DatasetIndex& index,
                                               const std::filesystem::path& out_dir,
                                               const PrepareOptions& options = {});

/// As above for records already in memory.
std::vector<std::filesystem::path> pack_records(std::span<const SampleRecord> records,
                                                const std::filesystem::path& out_dir,
                                                std::size_t shard_size,
                                                const std::string& prefix = "shard");

}  // namespace lanedetect
