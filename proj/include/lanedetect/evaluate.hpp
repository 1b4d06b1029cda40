#pragma once

#include <filesystem>
#include <vector>

#include "lanedetect/checkpoint.hpp"
#include "lanedetect/image.hpp"
#include "lanedetect/losses.hpp"
#include "lanedetect/metrics.hpp"
#include "lanedetect/model.hpp"
#include "lanedetect/train.hpp"

namespace lanedetect {

struct EvalOptions {
  double threshold = 0.5;
  LossKind loss = LossKind::dice;
  std::size_t batch = 128;
  std::size_t micro_batch = 8;
  std::size_t prefetch_depth = 2;
};

/// Inference over every sample of `shards` in file order with dropout off.
///
/// Loss is the sample-weighted mean of per-batch losses; accuracy and F1 come
/// from confusion counts accumulated over the whole set. epoch, step, lr and
/// wall_ms are left for the caller.
MetricsRecord evaluate_params(const ModelGraph& graph, const ModelParams<float>& params,
                              const std::vector<std::filesystem::path>& shards,
                              const EvalOptions& options = {});

/// Loads `checkpoint`, sizes the network from the shards and evaluates.
/// The record's epoch is the checkpoint's epoch.
MetricsRecord evaluate(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& shards, const EvalOptions& options = {});

/// Confusion at every threshold from a single inference pass over `shards`.
SweepResult threshold_sweep(const ModelGraph& graph, const ModelParams<float>& params,
                            const std::vector<std::filesystem::path>& shards,
                            const std::vector<double>& thresholds,
                            const EvalOptions& options = {});

SweepResult threshold_sweep(const std::filesystem::path& checkpoint,
                            const std::filesystem::path& shards,
                            const std::vector<double>& thresholds,
                            const EvalOptions& options = {});

/// Inference on an arbitrary batch in chunks of at most `micro_batch` items.
TensorF predict_batched(const ModelGraph& graph, const ModelParams<float>& params,
                        const TensorF& x, std::size_t micro_batch);

/// (1, 3, H, W) tensor in [0, 1] from an RGB image.
TensorF image_to_tensor(const Image& rgb);

struct Prediction {
  Image input;        // the frame at model resolution
  Image probability;  // round(255 * p)
  Image mask;         // 255 where p > threshold, else 0
  Image overlay;      // input with lane pixels tinted
};

/// Encodes a model output for one image: grey map, binary mask and overlay.
Prediction render_prediction(const Image& input, const TensorF& probabilities, double threshold);

struct PredictOptions {
  double threshold = 0.5;
  bool allow_any_size = false;
};

/// Frames of 1640x590 are reduced by 1/5; frames already at the model size pass
/// through; anything else needs allow_any_size and is area-resampled.
Prediction predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                   const PredictOptions& options = {});

}  // namespace lanedetect
