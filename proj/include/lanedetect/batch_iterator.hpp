#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "lanedetect/shard.hpp"
#include "lanedetect/tensor.hpp"

namespace lanedetect {

struct BatchOptions {
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::size_t prefetch_depth = 2;
  bool shuffle = true;
  /// Channel-shift augmentation intensity; 0 disables it.
  double channel_shift = 0.0;
};

namespace detail {
struct InFlightCounter;
}

/// Counts a batch as materialized from creation until destruction.
class InFlightToken {
 public:
  InFlightToken() = default;
  explicit InFlightToken(std::shared_ptr<detail::InFlightCounter> counter);
  InFlightToken(InFlightToken&& other) noexcept;
  InFlightToken& operator=(InFlightToken&& other) noexcept;
  InFlightToken(const InFlightToken&) = delete;
  InFlightToken& operator=(const InFlightToken&) = delete;
  ~InFlightToken();

 private:
  void release();
  std::shared_ptr<detail::InFlightCounter> counter_;
};

struct Batch {
  TensorF x;        // (B, 3, H, W), u8 / 255
  TensorF labels;   // (B, 1, H, W), values in {0, 1}
  std::vector<std::uint64_t> sample_ids;  // global sample index across the shard list
  InFlightToken token;
};

/// Streams mini-batches from shard files with one background producer.
///
/// Sample order is a seeded shuffle per (seed, epoch) and is independent of
/// producer timing. The producer never holds more than prefetch_depth finished
/// batches, so at most prefetch_depth + 1 batches exist at once counting the
/// one the consumer holds. The last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::vector<std::filesystem::path> shards, const BatchOptions& options);
  ~BatchIterator();
  BatchIterator(const BatchIterator&) = delete;
  BatchIterator& operator=(const BatchIterator&) = delete;

  /// Next batch, or nullopt after the epoch is exhausted. Rethrows producer errors.
  std::optional<Batch> next();

  std::size_t sample_count() const { return locations_.size(); }
  std::size_t batch_count() const;
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  /// Largest number of simultaneously materialized batches observed so far.
  std::size_t peak_in_flight() const;

 private:
  struct Location {
    std::uint32_t shard;
    std::uint32_t record;
  };

  void produce();
  Batch build(std::size_t first, std::size_t count, std::vector<ShardReader>& readers);

  std::vector<std::filesystem::path> shards_;
  BatchOptions options_;
  std::vector<Location> locations_;
  std::vector<std::size_t> order_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;

  std::shared_ptr<detail::InFlightCounter> counter_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<Batch> queue_;
  bool done_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

/// Header-only scan of a shard list: total samples and the common H, W.
struct ShardSetInfo {
  std::size_t samples = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Throws DataError for an empty list or mismatched dimensions.
ShardSetInfo inspect_shards(const std::vector<std::filesystem::path>& shards);

}  // namespace lanedetect
