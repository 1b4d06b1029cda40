#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// Pixel counts of a thresholded prediction against binary ground truth.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A pixel is predicted positive iff pred > threshold. threshold must lie in (0, 1).
template <class T>
ConfusionCounts confusion(const Tensor<T>& truth, const Tensor<T>& pred, double threshold);

/// (tp + tn) / total, 0 for an empty count.
double binary_accuracy(const ConfusionCounts& counts);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Every 0/0 ratio is defined as 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& counts);

struct F1DiceCheck {
  double f1 = 0.0;
  double dice = 0.0;
};

/// F1 from confusion counts next to the set-overlap Dice coefficient
/// 2|A n B| / (|A| + |B|). Both inputs must be binary (DomainError otherwise).
template <class T>
F1DiceCheck f1_equals_dice_check(const Tensor<T>& truth, const Tensor<T>& pred_binary);

struct SweepRow {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double binary_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // strictly increasing thresholds

  /// Row with the highest F1 (first one on ties).
  const SweepRow& best() const;
};

/// Confusion counts at several thresholds, accumulated batch by batch.
class ThresholdAccumulator {
 public:
  /// Throws DomainError unless thresholds are strictly increasing inside (0, 1).
  explicit ThresholdAccumulator(std::vector<double> thresholds);

  template <class T>
  void add(const Tensor<T>& truth, const Tensor<T>& pred);

  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<ConfusionCounts>& counts() const { return counts_; }
  SweepResult result() const;

 private:
  std::vector<double> thresholds_;
  std::vector<ConfusionCounts> counts_;
};

/// "lo:hi:step" inclusive of both ends, e.g. "0.05:0.95:0.05".
std::vector<double> parse_threshold_grid(std::string_view spec);
std::vector<double> default_threshold_grid();

inline constexpr std::string_view kSweepCsvHeader = "threshold,precision,recall,f1,binary_accuracy";

std::string sweep_csv(const SweepResult& result);
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);

}  // namespace lanedetect
