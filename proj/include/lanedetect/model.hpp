#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lanedetect/layers.hpp"
#include "lanedetect/rng.hpp"
#include "lanedetect/tensor.hpp"

namespace lanedetect {

/// Knobs of the lane segmentation network. Defaults give the production
/// configuration: 118x328 RGB input and encoder widths {32,64,64,128,128,256,256}.
struct ModelConfig {
  std::size_t height = 118;
  std::size_t width = 328;
  /// Multiplier on the baseline widths {8,16,16,32,32,64,64}.
  std::size_t filter_scale = 4;
  double dropout_rate = 0.2;
};

enum class LayerKind { pad_rows, conv, conv_transpose, relu, maxpool, dropout, sigmoid, crop_rows };

std::string to_string(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t rows_top = 0;     // pad_rows / crop_rows
  std::size_t rows_bottom = 0;
  double rate = 0.0;            // dropout
  int param_index = -1;         // conv / conv_transpose
  Shape output;                 // per-item shape (n == 1) after this layer
};

/// Ordered layer list with every intermediate shape resolved at build time.
struct ModelGraph {
  ModelConfig config;
  std::vector<LayerSpec> layers;
  Shape input;   // (1, 3, height, width)
  Shape output;  // (1, 1, height, width)

  std::size_t count(LayerKind kind) const;
  /// Layers that own parameters, in parameter-index order.
  std::vector<const LayerSpec*> parametric_layers() const;
  /// "<layer>.weight" / "<layer>.bias" pairs, in parameter-index order.
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

/// Resolves the encoder/decoder stack for `config`.
///
/// Rows are zero-padded up to a multiple of 8 before the encoder and cropped
/// back after the decoder; the width must already be a multiple of 8.
ModelGraph build_graph(const ModelConfig& config);

/// Parameters of every conv / conv-transpose layer, indexed by LayerSpec::param_index.
template <class T>
struct ModelParams {
  std::vector<ConvParams<T>> layers;

  /// Flat views in parameter_names() order (weight, bias, weight, bias, ...).
  std::vector<std::span<T>> buffers();
  std::vector<std::span<const T>> buffers() const;

  template <class U>
  ModelParams<U> cast() const;
};

/// He-normal weights and zero biases, fully determined by `seed`.
template <class T>
ModelParams<T> init_params(const ModelGraph& graph, std::uint64_t seed);

struct BuiltModel {
  ModelGraph graph;
  ModelParams<float> params;
};

BuiltModel build_model(std::uint64_t seed, const ModelConfig& config = {});

/// Per-layer state needed by the backward pass.
template <class T>
struct TapeEntry {
  Tensor<T> saved;  // conv input, relu input or sigmoid output
  MaxPoolMask pool;
  DropoutMask drop;
};

template <class T>
struct Tape {
  std::vector<TapeEntry<T>> entries;
};

template <class T>
struct ForwardResult {
  Tensor<T> y;
  Tape<T> tape;  // empty when recording was disabled
};

/// Runs the network on x of shape (B, 3, height, width) and returns per-pixel probabilities.
///
/// Dropout draws from `rng` in layer order and only when `training` is set.
template <class T>
ForwardResult<T> forward(const ModelGraph& graph, const ModelParams<T>& params, const Tensor<T>& x,
                         bool training, Rng& rng, bool record_tape = true);

/// Inference-mode forward pass without a tape.
template <class T>
Tensor<T> predict_probabilities(const ModelGraph& graph, const ModelParams<T>& params,
                                const Tensor<T>& x);

template <class T>
struct ModelGrads {
  std::vector<Tensor<T>> d_weights;
  std::vector<std::vector<T>> d_bias;
  Tensor<T> d_input;

  std::vector<std::span<const T>> buffers() const;
};

template <class T>
ModelGrads<T> backward(const ModelGraph& graph, const ModelParams<T>& params, const Tape<T>& tape,
                       const Tensor<T>& d_y);

}  // namespace lanedetect
