#include "lanedetect/batch_iterator.hpp"

#include <algorithm>

#include "lanedetect/dataset.hpp"
#include "lanedetect/image.hpp"

namespace lanedetect {

namespace detail {

struct InFlightCounter {
  std::mutex mutex;
  std::condition_variable released;
  std::size_t live = 0;
  std::size_t peak = 0;
  bool stopping = false;
};

}  // namespace detail

InFlightToken::InFlightToken(std::shared_ptr<detail::InFlightCounter> counter)
    : counter_(std::move(counter)) {}

InFlightToken::InFlightToken(InFlightToken&& other) noexcept : counter_(std::move(other.counter_)) {}

InFlightToken& InFlightToken::operator=(InFlightToken&& other) noexcept {
  if (this != &other) {
    release();
    counter_ = std::move(other.counter_);
  }
  return *this;
}

InFlightToken::~InFlightToken() { release(); }

void InFlightToken::release() {
  if (!counter_) return;
  {
    std::lock_guard lock(counter_->mutex);
    counter_->live -= 1;
  }
  counter_->released.notify_all();
  counter_.reset();
}

ShardSetInfo inspect_shards(const std::vector<std::filesystem::path>& shards) {
  if (shards.empty()) throw DataError("no shard files given");
  ShardSetInfo info;
  for (const auto& path : shards) {
    ShardReader reader(path);
    const auto& h = reader.header();
    if (info.height == 0) {
      info.height = h.height;
      info.width = h.width;
    } else if (h.height != info.height || h.width != info.width) {
      throw DataError("shard " + path.string() + " has different dimensions from the first shard");
    }
    info.samples += h.count;
  }
  if (info.samples == 0) throw DataError("shard set contains no samples");
  return info;
}

BatchIterator::BatchIterator(std::vector<std::filesystem::path> shards, const BatchOptions& options)
    : shards_(std::move(shards)),
      options_(options),
      counter_(std::make_shared<detail::InFlightCounter>()) {
  if (options_.batch_size == 0) throw DomainError("batch size must be >= 1");
  if (options_.prefetch_depth == 0) throw DomainError("prefetch depth must be >= 1");
  const ShardSetInfo info = inspect_shards(shards_);
  height_ = info.height;
  width_ = info.width;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    ShardReader reader(shards_[s]);
    for (std::uint32_t r = 0; r < reader.header().count; ++r) {
      locations_.push_back({static_cast<std::uint32_t>(s), r});
    }
  }
  if (options_.shuffle) {
    Rng rng(derive_seed(options_.seed, {kShuffleStream, options_.epoch}));
    order_ = shuffled_order(locations_.size(), rng);
  } else {
    order_.resize(locations_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }
  worker_ = std::thread([this] { produce(); });
}

BatchIterator::~BatchIterator() {
  {
    std::lock_guard lock(counter_->mutex);
    counter_->stopping = true;
  }
  counter_->released.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::size_t BatchIterator::batch_count() const {
  return (locations_.size() + options_.batch_size - 1) / options_.batch_size;
}

std::size_t BatchIterator::peak_in_flight() const {
  std::lock_guard lock(counter_->mutex);
  return counter_->peak;
}

Batch BatchIterator::build(std::size_t first, std::size_t count, std::vector<ShardReader>& readers) {
  const std::size_t plane = height_ * width_;
  Batch b;
  b.x = TensorF::zeros(Shape{count, 3, height_, width_});
  b.labels = TensorF::zeros(Shape{count, 1, height_, width_});
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t id = order_[first + k];
    const Location loc = locations_[id];
    const SampleRecord rec = readers[loc.shard].read(loc.record);
    b.sample_ids.push_back(id);
    float* x = b.x.item(k).data();
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        x[c * plane + p] = static_cast<float>(rec.image[p * 3 + c]) / 255.0f;
      }
    }
    float* y = b.labels.item(k).data();
    for (std::size_t p = 0; p < plane; ++p) y[p] = static_cast<float>(rec.mask[p]);
    if (options_.channel_shift > 0.0) {
      // Keyed by position in the epoch so augmentation does not depend on thread timing.
      Rng rng(derive_seed(options_.seed, {kAugmentStream, options_.epoch, first + k}));
      TensorF one(Shape{1, 3, height_, width_},
                  std::vector<float>(x, x + 3 * plane));
      channel_shift(one, options_.channel_shift, rng);
      std::copy(one.data(), one.data() + 3 * plane, x);
    }
  }
  return b;
}

void BatchIterator::produce() {
  try {
    std::vector<ShardReader> readers;
    for (const auto& path : shards_) readers.emplace_back(path);
    for (std::size_t first = 0; first < order_.size(); first += options_.batch_size) {
      {
        std::unique_lock lock(counter_->mutex);
        counter_->released.wait(lock, [&] {
          return counter_->stopping || counter_->live < options_.prefetch_depth + 1;
        });
        if (counter_->stopping) return;
        counter_->live += 1;
        counter_->peak = std::max(counter_->peak, counter_->live);
      }
      InFlightToken token(counter_);
      Batch b = build(first, std::min(options_.batch_size, order_.size() - first), readers);
      b.token = std::move(token);
      {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(b));
      }
      ready_.notify_one();
    }
  } catch (...) {
    std::lock_guard lock(mutex_);
    error_ = std::current_exception();
  }
  {
    std::lock_guard lock(mutex_);
    done_ = true;
  }
  ready_.notify_one();
}

std::optional<Batch> BatchIterator::next() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    return b;
  }
  if (error_) std::rethrow_exception(error_);
  return std::nullopt;
}

}  // namespace lanedetect
