#include "lanedetect/shard.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <iterator>

#include "byte_io.hpp"

namespace lanedetect {

namespace fs = std::filesystem;

namespace {

ShardHeader decode_header(std::span<const std::uint8_t> bytes, const fs::path& path) {
  detail::ByteReader r(bytes, "shard " + path.string());
  auto magic = r.take(sizeof kShardMagic);
  if (std::memcmp(magic.data(), kShardMagic, sizeof kShardMagic) != 0) {
    throw FormatError("shard " + path.string() + ": bad magic (expected LDPK0001)");
  }
  ShardHeader h;
  h.count = r.u32();
  h.height = r.u32();
  h.width = r.u32();
  if (h.height == 0 || h.width == 0) throw FormatError("shard " + path.string() + ": zero dimension");
  return h;
}

ShardHeader read_header(std::ifstream& in, const fs::path& path) {
  std::uint8_t buf[kShardHeaderBytes];
  in.read(reinterpret_cast<char*>(buf), sizeof buf);
  if (in.gcount() != static_cast<std::streamsize>(sizeof buf)) {
    throw FormatError("shard " + path.string() + ": truncated header");
  }
  ShardHeader h = decode_header(buf, path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected = kShardHeaderBytes + std::uint64_t{h.count} * h.record_bytes();
  if (size != expected) {
    throw FormatError("shard " + path.string() + ": header promises " + std::to_string(h.count) +
                      " records (" + std::to_string(expected) + " bytes) but file has " +
                      std::to_string(size) + " bytes");
  }
  return h;
}

}  // namespace

void SampleRecord::validate() const {
  if (height == 0 || width == 0) throw DataError("sample has a zero dimension");
  if (image.size() != height * width * 3) throw DataError("sample image size mismatch");
  if (mask.size() != height * width) throw DataError("sample mask size mismatch");
  for (auto v : mask) {
    if (v > 1) throw DataError("sample mask is not binary");
  }
}

void write_shard(const fs::path& path, std::span<const SampleRecord> records) {
  if (records.empty()) throw DataError("refusing to write an empty shard");
  const std::size_t h = records.front().height, w = records.front().width;
  std::vector<std::uint8_t> header;
  detail::ByteWriter bw(header);
  bw.bytes(std::string_view(kShardMagic, sizeof kShardMagic));
  bw.u32(static_cast<std::uint32_t>(records.size()));
  bw.u32(static_cast<std::uint32_t>(h));
  bw.u32(static_cast<std::uint32_t>(w));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  for (const auto& r : records) {
    r.validate();
    if (r.height != h || r.width != w) throw DataError("all records in a shard must share dimensions");
    out.write(reinterpret_cast<const char*>(r.image.data()), static_cast<std::streamsize>(r.image.size()));
    out.write(reinterpret_cast<const char*>(r.mask.data()), static_cast<std::streamsize>(r.mask.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ShardReader::ShardReader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open shard " + path.string());
  header_ = read_header(in_, path);
}

SampleRecord ShardReader::read(std::size_t index) {
  if (index >= header_.count) {
    throw DataError("record " + std::to_string(index) + " out of range for " + path_.string());
  }
  SampleRecord r;
  r.height = header_.height;
  r.width = header_.width;
  r.image.resize(r.height * r.width * 3);
  r.mask.resize(r.height * r.width);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kShardHeaderBytes + index * header_.record_bytes()));
  in_.read(reinterpret_cast<char*>(r.image.data()), static_cast<std::streamsize>(r.image.size()));
  in_.read(reinterpret_cast<char*>(r.mask.data()), static_cast<std::streamsize>(r.mask.size()));
  if (!in_) throw FormatError("shard " + path_.string() + ": short read");
  for (auto v : r.mask) {
    if (v > 1) throw FormatError("shard " + path_.string() + ": non-binary mask value");
  }
  return r;
}

std::vector<SampleRecord> read_shard(const fs::path& path) {
  ShardReader reader(path);
  std::vector<SampleRecord> out;
  out.reserve(reader.header().count);
  for (std::size_t i = 0; i < reader.header().count; ++i) out.push_back(reader.read(i));
  return out;
}

std::vector<fs::path> list_shards(const fs::path& dir_or_file) {
  if (fs::is_regular_file(dir_or_file)) return {dir_or_file};
  if (!fs::is_directory(dir_or_file)) throw IoError("no shards at " + dir_or_file.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir_or_file)) {
    if (e.is_regular_file() && e.path().extension() == ".ldpk") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

SampleRecord load_sample(const DatasetEntry& entry, const PrepareOptions& options) {
  const Image image = load_image(entry.image);
  Image raw_mask;
  if (entry.mask) {
    raw_mask = load_mask(*entry.mask);
  } else if (entry.annotation) {
    std::ifstream in(*entry.annotation);
    if (!in) throw IoError("cannot open annotation " + entry.annotation->string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    raw_mask = render_polylines(parse_annotation(text), image.width, image.height,
                                options.annotation_thickness);
  } else {
    throw DataError("no label source for " + entry.image.string());
  }
  if (raw_mask.width != image.width || raw_mask.height != image.height) {
    throw DataError("mask and image sizes differ for " + entry.image.string());
  }
  const Image small = resize_image(image, options.resize);
  const Image small_mask = resize_mask(binarize_mask(raw_mask), options.resize);
  SampleRecord r{small.height, small.width, small.pixels, small_mask.pixels};
  r.validate();
  return r;
}

std::vector<fs::path> pack_records(std::span<const SampleRecord> records, const fs::path& out_dir,
                                   std::size_t shard_size, const std::string& prefix) {
  if (shard_size == 0) throw DomainError("shard size must be >= 1");
  fs::create_directories(out_dir);
  std::vector<fs::path> paths;
  for (std::size_t start = 0; start < records.size(); start += shard_size) {
    const std::size_t n = std::min(shard_size, records.size() - start);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05zu.ldpk", prefix.c_str(), paths.size());
    paths.push_back(out_dir / name);
    write_shard(paths.back(), records.subspan(start, n));
  }
  return paths;
}

std::vector<fs::path> pack_shards(const DatasetIndex& index, const fs::path& out_dir,
                                  const PrepareOptions& options) {
  if (options.shard_size == 0) throw DomainError("shard size must be >= 1");
  std::vector<fs::path> paths;
  std::vector<SampleRecord> pending;
  // Only one shard's worth of decoded samples is held at a time.
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    pending.push_back(load_sample(index.entries[i], options));
    if (pending.size() == options.shard_size || i + 1 == index.entries.size()) {
      char name[64];
      std::snprintf(name, sizeof name, "shard_%05zu.ldpk", paths.size());
      paths.push_back(out_dir / name);
      write_shard(paths.back(), pending);
      pending.clear();
    }
  }
  return paths;
}

}  // namespace lanedetect
