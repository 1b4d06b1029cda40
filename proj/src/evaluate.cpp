#include "lanedetect/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "lanedetect/batch_iterator.hpp"
#include "lanedetect/shard.hpp"

namespace lanedetect {

namespace fs = std::filesystem;

namespace {

BatchOptions inference_batches(const EvalOptions& options) {
  BatchOptions b;
  b.batch_size = options.batch;
  b.prefetch_depth = options.prefetch_depth;
  b.shuffle = false;
  return b;
}

struct LoadedModel {
  ModelGraph graph;
  ModelParams<float> params;
};

LoadedModel load_for(const fs::path& checkpoint, std::size_t height, std::size_t width) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel m{build_graph(config_from_checkpoint(ckpt, height, width)), {}};
  m.params = params_from_checkpoint(m.graph, ckpt);
  return m;
}

}  // namespace

TensorF predict_batched(const ModelGraph& graph, const ModelParams<float>& params,
                        const TensorF& x, std::size_t micro_batch) {
  if (micro_batch == 0) throw DomainError("micro batch must be >= 1");
  const std::size_t n = x.shape().n;
  if (n <= micro_batch) return predict_probabilities(graph, params, x);
  std::vector<TensorF> parts;
  for (std::size_t first = 0; first < n; first += micro_batch) {
    parts.push_back(
        predict_probabilities(graph, params, slice_batch(x, first, std::min(micro_batch, n - first))));
  }
  return concat_batch(parts);
}

MetricsRecord evaluate_params(const ModelGraph& graph, const ModelParams<float>& params,
                              const std::vector<fs::path>& shards, const EvalOptions& options) {
  BatchIterator batches(shards, inference_batches(options));
  double loss_sum = 0.0;
  std::size_t seen = 0;
  ConfusionCounts counts;
  while (auto batch = batches.next()) {
    const TensorF y = predict_batched(graph, params, batch->x, options.micro_batch);
    const std::size_t n = batch->x.shape().n;
    loss_sum += compute_loss(options.loss, batch->labels, y).value * static_cast<double>(n);
    seen += n;
    counts += confusion(batch->labels, y, options.threshold);
  }
  MetricsRecord r;
  r.loss = loss_sum / static_cast<double>(seen);
  r.binary_accuracy = binary_accuracy(counts);
  r.f1 = precision_recall_f1(counts).f1;
  return r;
}

MetricsRecord evaluate(const fs::path& checkpoint, const fs::path& shards,
                       const EvalOptions& options) {
  const auto files = list_shards(shards);
  const ShardSetInfo info = inspect_shards(files);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const ModelGraph graph = build_graph(config_from_checkpoint(ckpt, info.height, info.width));
  const ModelParams<float> params = params_from_checkpoint(graph, ckpt);
  MetricsRecord r = evaluate_params(graph, params, files, options);
  r.epoch = ckpt.epoch;
  r.step = ckpt.adam ? ckpt.adam->step : 0;
  return r;
}

SweepResult threshold_sweep(const ModelGraph& graph, const ModelParams<float>& params,
                            const std::vector<fs::path>& shards,
                            const std::vector<double>& thresholds, const EvalOptions& options) {
  ThresholdAccumulator acc(thresholds);
  BatchIterator batches(shards, inference_batches(options));
  while (auto batch = batches.next()) {
    acc.add(batch->labels, predict_batched(graph, params, batch->x, options.micro_batch));
  }
  return acc.result();
}

SweepResult threshold_sweep(const fs::path& checkpoint, const fs::path& shards,
                            const std::vector<double>& thresholds, const EvalOptions& options) {
  const auto files = list_shards(shards);
  const ShardSetInfo info = inspect_shards(files);
  const LoadedModel m = load_for(checkpoint, info.height, info.width);
  return threshold_sweep(m.graph, m.params, files, thresholds, options);
}

TensorF image_to_tensor(const Image& rgb) {
  if (rgb.channels != 3) throw DataError("expected an RGB image");
  const std::size_t plane = rgb.width * rgb.height;
  TensorF x = TensorF::zeros(Shape{1, 3, rgb.height, rgb.width});
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) x[c * plane + p] = rgb.pixels[p * 3 + c] / 255.0f;
  }
  return x;
}

Prediction render_prediction(const Image& input, const TensorF& probabilities, double threshold) {
  const Shape& s = probabilities.shape();
  if (s.n != 1 || s.c != 1 || s.h != input.height || s.w != input.width) {
    throw ShapeError("render_prediction: probabilities " + s.str() + " do not match the image");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("threshold must lie in (0, 1)");
  Prediction out;
  out.input = input;
  out.probability = Image::blank(input.width, input.height, 1);
  out.mask = Image::blank(input.width, input.height, 1);
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    out.probability.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * p));
    out.mask.pixels[i] = p > threshold ? 255 : 0;
  }
  out.overlay = overlay_mask(input, out.mask);
  return out;
}

Prediction predict(const fs::path& checkpoint, const fs::path& image_path,
                   const PredictOptions& options) {
  const ModelConfig defaults;
  Image frame = load_image(image_path);
  if (frame.width == kCulaneWidth && frame.height == kCulaneHeight) {
    frame = resize_image(frame);
  } else if (frame.width != defaults.width || frame.height != defaults.height) {
    if (!options.allow_any_size) {
      throw DataError("image " + image_path.string() + " is " + std::to_string(frame.width) + "x" +
                      std::to_string(frame.height) + "; expected 1640x590 or " +
                      std::to_string(defaults.width) + "x" + std::to_string(defaults.height) +
                      " (use --allow-any-size to resample)");
    }
    frame = resize_area(frame, defaults.width, defaults.height);
  }
  const LoadedModel m = load_for(checkpoint, frame.height, frame.width);
  const TensorF y = predict_probabilities(m.graph, m.params, image_to_tensor(frame));
  return render_prediction(frame, y, options.threshold);
}

}  // namespace lanedetect
