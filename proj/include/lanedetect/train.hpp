#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanedetect/checkpoint.hpp"
#include "lanedetect/losses.hpp"
#include "lanedetect/metrics.hpp"
#include "lanedetect/model.hpp"
#include "lanedetect/optim.hpp"

namespace lanedetect {

struct TrainConfig {
  std::filesystem::path shards;  // directory of *.ldpk files or a single shard
  std::filesystem::path out_dir;
  std::uint64_t epochs = 600;
  std::size_t batch = 128;
  /// Largest number of samples pushed through the network at once. Larger
  /// batches are processed in chunks with activations recomputed for backward.
  std::size_t micro_batch = 8;
  LossKind loss = LossKind::dice;
  LrSchedule lr;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 10;
  std::size_t prefetch_depth = 2;
  std::size_t filter_scale = 4;
  double dropout_rate = 0.2;
  double channel_shift = 0.0;
  /// Report each epoch's metrics from an inference pass over the training
  /// shards after the epoch's updates instead of the running training values.
  bool eval_after_epoch = false;
  /// Continue from this checkpoint (weights, Adam state, epoch counter).
  std::optional<std::filesystem::path> resume;

  /// Throws DomainError for out-of-range values.
  void validate() const;
};

/// One line of the metrics log.
struct MetricsRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double binary_accuracy = 0.0;
  double f1 = 0.0;
  double lr = 0.0;
  std::int64_t wall_ms = 0;
};

inline constexpr std::string_view kMetricsCsvHeader = "epoch,step,loss,binary_accuracy,f1,lr,wall_ms";

std::string metrics_csv_row(const MetricsRecord& record);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
  std::vector<MetricsRecord> records;
};

/// Called after each epoch's record is logged. Returning false stops training
/// after a checkpoint of the current epoch is written.
using EpochCallback = std::function<bool(const MetricsRecord&)>;

/// Runs the full training loop. Everything except wall_ms is a function of
/// (config, data): init, shuffle and dropout all derive from config.seed.
///
/// Writes <out_dir>/metrics.csv, numbered checkpoints ckpt_<epoch>.ldfcn every
/// checkpoint_interval epochs and at the end, and <out_dir>/manifest.json naming
/// the latest one. A non-finite loss aborts with NumericError and leaves the
/// previous checkpoint in place.
TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

struct StepResult {
  double loss = 0.0;
  ConfusionCounts counts;  // at threshold 0.5, from the training forward pass
};

/// Forward, loss, backward and one Adam update on a single mini-batch.
/// Dropout masks for chunk k draw from Rng(derive_seed(dropout_seed, {k})).
StepResult train_step(const ModelGraph& graph, ModelParams<float>& params,
                      AdamState<float>& adam, const TensorF& x, const TensorF& labels,
                      LossKind loss, std::size_t micro_batch, std::uint64_t dropout_seed);

/// Path of the checkpoint written after `epoch` completed epochs.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::uint64_t epoch);

/// Latest checkpoint recorded in <out_dir>/manifest.json.
std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir);

}  // namespace lanedetect
