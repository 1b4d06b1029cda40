#include "lanedetect/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace lanedetect {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
}

template <class T>
bool is_positive_label(T v, const char* op) {
  if (v == T(1)) return true;
  if (v == T(0)) return false;
  throw DomainError(std::string(op) + ": labels must be 0 or 1");
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DomainError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

template <class T>
ConfusionCounts confusion(const Tensor<T>& truth, const Tensor<T>& pred, double threshold) {
  check_threshold(threshold);
  if (truth.shape() != pred.shape()) {
    throw ShapeError("confusion: truth " + truth.shape().str() + " vs prediction " +
                     pred.shape().str());
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool actual = is_positive_label(truth[i], "confusion");
    const bool predicted = static_cast<double>(pred[i]) > threshold;
    if (predicted) {
      actual ? ++c.tp : ++c.fp;
    } else {
      actual ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

double binary_accuracy(const ConfusionCounts& c) {
  return ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  r.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

template <class T>
F1DiceCheck f1_equals_dice_check(const Tensor<T>& truth, const Tensor<T>& pred_binary) {
  if (truth.shape() != pred_binary.shape()) throw ShapeError("f1_equals_dice_check: shape mismatch");
  ConfusionCounts c;
  std::uint64_t intersection = 0, truth_size = 0, pred_size = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool a = is_positive_label(truth[i], "f1_equals_dice_check");
    const bool b = is_positive_label(pred_binary[i], "f1_equals_dice_check");
    intersection += (a && b) ? 1 : 0;
    truth_size += a ? 1 : 0;
    pred_size += b ? 1 : 0;
    if (b) {
      a ? ++c.tp : ++c.fp;
    } else {
      a ? ++c.fn : ++c.tn;
    }
  }
  return F1DiceCheck{precision_recall_f1(c).f1,
                     ratio(2.0 * static_cast<double>(intersection),
                           static_cast<double>(truth_size + pred_size))};
}

const SweepRow& SweepResult::best() const {
  if (rows.empty()) throw DomainError("empty sweep result");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].f1 > rows[best].f1) best = i;
  }
  return rows[best];
}

ThresholdAccumulator::ThresholdAccumulator(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)), counts_(thresholds_.size()) {
  if (thresholds_.empty()) throw DomainError("threshold list is empty");
  for (std::size_t i = 0; i < thresholds_.size(); ++i) {
    check_threshold(thresholds_[i]);
    if (i > 0 && !(thresholds_[i] > thresholds_[i - 1])) {
      throw DomainError("thresholds must be strictly increasing");
    }
  }
}

template <class T>
void ThresholdAccumulator::add(const Tensor<T>& truth, const Tensor<T>& pred) {
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    counts_[k] += confusion(truth, pred, thresholds_[k]);
  }
}

SweepResult ThresholdAccumulator::result() const {
  SweepResult r;
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    const auto prf = precision_recall_f1(counts_[k]);
    r.rows.push_back(SweepRow{thresholds_[k], prf.precision, prf.recall, prf.f1,
                              binary_accuracy(counts_[k])});
  }
  return r;
}

std::vector<double> parse_threshold_grid(std::string_view spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string_view::npos ? a : spec.find(':', a + 1);
  if (b == std::string_view::npos) {
    throw DomainError("threshold grid must look like lo:hi:step, got '" + std::string(spec) + "'");
  }
  const double lo = parse_double(spec.substr(0, a));
  const double hi = parse_double(spec.substr(a + 1, b - a - 1));
  const double step = parse_double(spec.substr(b + 1));
  if (!(step > 0.0) || hi < lo) throw DomainError("threshold grid needs step > 0 and lo <= hi");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    // Round to 12 decimals so 0.05 + 5 * 0.05 prints as 0.3.
    grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  ThresholdAccumulator validate(grid);
  return grid;
}

std::vector<double> default_threshold_grid() { return parse_threshold_grid("0.05:0.95:0.05"); }

std::string sweep_csv(const SweepResult& result) {
  std::string out(kSweepCsvHeader);
  out += '\n';
  char line[160];
  for (const auto& r : result.rows) {
    std::snprintf(line, sizeof line, "%.6g,%.9f,%.9f,%.9f,%.9f\n", r.threshold, r.precision,
                  r.recall, r.f1, r.binary_accuracy);
    out += line;
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << sweep_csv(result);
  if (!out) throw IoError("write failed: " + path.string());
}

template ConfusionCounts confusion(const Tensor<float>&, const Tensor<float>&, double);
template ConfusionCounts confusion(const Tensor<double>&, const Tensor<double>&, double);
template F1DiceCheck f1_equals_dice_check(const Tensor<float>&, const Tensor<float>&);
template F1DiceCheck f1_equals_dice_check(const Tensor<double>&, const Tensor<double>&);
template void ThresholdAccumulator::add(const Tensor<float>&, const Tensor<float>&);
template void ThresholdAccumulator::add(const Tensor<double>&, const Tensor<double>&);

}  // namespace lanedetect
