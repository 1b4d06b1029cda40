#include "lanedetect/model.hpp"

#include <array>

#include "lanedetect/optim.hpp"
#include "lanedetect/runtime.hpp"

namespace lanedetect {

namespace {

constexpr std::array<std::size_t, 7> kBaselineEncoderWidths{8, 16, 16, 32, 32, 64, 64};

struct DeconvSpec {
  std::size_t out_baseline;  // 0 marks the single-channel output layer
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

constexpr std::array<DeconvSpec, 6> kDecoder{{
    {64, 3, 1, 1},
    {32, 2, 2, 0},
    {32, 3, 1, 1},
    {16, 2, 2, 0},
    {8, 2, 2, 0},
    {0, 3, 1, 1},
}};

class GraphBuilder {
 public:
  explicit GraphBuilder(ModelGraph& g) : g_(g), shape_(g.input) {}

  void add(LayerSpec spec) {
    switch (spec.kind) {
      case LayerKind::pad_rows:
        shape_.h += spec.rows_top + spec.rows_bottom;
        break;
      case LayerKind::crop_rows:
        if (spec.rows_top + spec.rows_bottom >= shape_.h) throw ShapeError("crop exceeds height");
        shape_.h -= spec.rows_top + spec.rows_bottom;
        break;
      case LayerKind::conv:
        spec.in_channels = shape_.c;
        spec.param_index = next_param_++;
        shape_ = conv2d_output_shape(shape_,
                                     Shape{spec.out_channels, spec.in_channels, spec.kernel,
                                           spec.kernel},
                                     spec.stride, spec.padding);
        break;
      case LayerKind::conv_transpose:
        spec.in_channels = shape_.c;
        spec.param_index = next_param_++;
        shape_ = convtranspose2d_output_shape(
            shape_, Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel},
            spec.stride, spec.padding);
        break;
      case LayerKind::maxpool:
        if (shape_.h % 2 != 0 || shape_.w % 2 != 0) {
          throw ShapeError("maxpool input " + shape_.str() + " has an odd dimension");
        }
        shape_.h /= 2;
        shape_.w /= 2;
        break;
      case LayerKind::relu:
      case LayerKind::dropout:
      case LayerKind::sigmoid:
        break;
    }
    spec.output = shape_;
    g_.layers.push_back(std::move(spec));
  }

  const Shape& shape() const { return shape_; }

 private:
  ModelGraph& g_;
  Shape shape_;
  int next_param_ = 0;
};

LayerSpec simple(std::string name, LayerKind kind) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = kind;
  return s;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::pad_rows: return "pad_rows";
    case LayerKind::conv: return "conv2d";
    case LayerKind::conv_transpose: return "conv_transpose2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool2x2";
    case LayerKind::dropout: return "dropout";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::crop_rows: return "crop_rows";
  }
  return "unknown";
}

std::size_t ModelGraph::count(LayerKind kind) const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == kind ? 1 : 0;
  return n;
}

std::vector<const LayerSpec*> ModelGraph::parametric_layers() const {
  std::vector<const LayerSpec*> out;
  for (const auto& l : layers) {
    if (l.param_index >= 0) out.push_back(&l);
  }
  return out;
}

std::vector<std::string> ModelGraph::parameter_names() const {
  std::vector<std::string> names;
  for (const LayerSpec* l : parametric_layers()) {
    names.push_back(l->name + ".weight");
    names.push_back(l->name + ".bias");
  }
  return names;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t total = 0;
  for (const LayerSpec* l : parametric_layers()) {
    total += l->out_channels * l->in_channels * l->kernel * l->kernel + l->out_channels;
  }
  return total;
}

ModelGraph build_graph(const ModelConfig& config) {
  if (config.height < 1 || config.width < 1) throw ShapeError("model input must be non-empty");
  if (config.width % 8 != 0) {
    throw ShapeError("model input width must be a multiple of 8, got " +
                     std::to_string(config.width));
  }
  if (config.filter_scale < 1) throw DomainError("filter_scale must be >= 1");
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw DomainError("dropout rate must lie in [0, 1)");
  }
  ModelGraph g;
  g.config = config;
  g.input = Shape{1, 3, config.height, config.width};
  GraphBuilder b(g);

  const std::size_t pad_total = (8 - config.height % 8) % 8;
  LayerSpec pad = simple("pad", LayerKind::pad_rows);
  pad.rows_top = pad_total / 2;
  pad.rows_bottom = pad_total - pad.rows_top;
  b.add(pad);

  for (std::size_t i = 0; i < kBaselineEncoderWidths.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    LayerSpec conv = simple("enc" + idx, LayerKind::conv);
    conv.out_channels = kBaselineEncoderWidths[i] * config.filter_scale;
    conv.kernel = 3;
    conv.padding = 1;
    b.add(conv);
    b.add(simple("enc" + idx + ".relu", LayerKind::relu));
    if (i == 1 || i == 3 || i == 5) b.add(simple("pool" + std::to_string(i / 2 + 1), LayerKind::maxpool));
    if (i == 2 || i == 4 || i == 6) {
      LayerSpec drop = simple("drop" + std::to_string(i / 2), LayerKind::dropout);
      drop.rate = config.dropout_rate;
      b.add(drop);
    }
  }

  for (std::size_t i = 0; i < kDecoder.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    LayerSpec deconv = simple("dec" + idx, LayerKind::conv_transpose);
    deconv.out_channels = kDecoder[i].out_baseline == 0 ? 1 : kDecoder[i].out_baseline * config.filter_scale;
    deconv.kernel = kDecoder[i].kernel;
    deconv.stride = kDecoder[i].stride;
    deconv.padding = kDecoder[i].padding;
    b.add(deconv);
    b.add(simple(i + 1 < kDecoder.size() ? "dec" + idx + ".relu" : "output",
                 i + 1 < kDecoder.size() ? LayerKind::relu : LayerKind::sigmoid));
  }

  LayerSpec crop = simple("crop", LayerKind::crop_rows);
  crop.rows_top = pad.rows_top;
  crop.rows_bottom = pad.rows_bottom;
  b.add(crop);

  g.output = b.shape();
  const Shape expected{1, 1, config.height, config.width};
  if (g.output != expected) {
    throw ShapeError("layer stack produces " + g.output.str() + ", expected " + expected.str());
  }
  return g;
}

template <class T>
std::vector<std::span<T>> ModelParams<T>::buffers() {
  std::vector<std::span<T>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weights.values());
    out.emplace_back(l.bias);
  }
  return out;
}

template <class T>
std::vector<std::span<const T>> ModelParams<T>::buffers() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weights.values());
    out.emplace_back(l.bias);
  }
  return out;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  for (const auto& l : layers) {
    out.layers.push_back(ConvParams<U>{l.weights.template cast<U>(),
                                       std::vector<U>(l.bias.begin(), l.bias.end()), l.stride,
                                       l.padding});
  }
  return out;
}

template <class T>
ModelParams<T> init_params(const ModelGraph& graph, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kInitStream}));
  ModelParams<T> params;
  for (const LayerSpec* l : graph.parametric_layers()) {
    const std::size_t k2 = l->kernel * l->kernel;
    ConvParams<T> p;
    p.stride = l->stride;
    p.padding = l->padding;
    p.bias.assign(l->out_channels, T(0));
    if (l->kind == LayerKind::conv) {
      p.weights = he_init<T>(Shape{l->out_channels, l->in_channels, l->kernel, l->kernel}, rng);
    } else {
      // Each transposed-conv output pixel sums in_channels * k^2 / stride^2 terms.
      const double fan_in = static_cast<double>(l->in_channels * k2) /
                            static_cast<double>(l->stride * l->stride);
      p.weights = he_init<T>(Shape{l->in_channels, l->out_channels, l->kernel, l->kernel},
                             fan_in, rng);
    }
    params.layers.push_back(std::move(p));
  }
  return params;
}

BuiltModel build_model(std::uint64_t seed, const ModelConfig& config) {
  ModelGraph graph = build_graph(config);
  ModelParams<float> params = init_params<float>(graph, seed);
  return {std::move(graph), std::move(params)};
}

template <class T>
ForwardResult<T> forward(const ModelGraph& graph, const ModelParams<T>& params, const Tensor<T>& x,
                         bool training, Rng& rng, bool record_tape) {
  const FlushDenormalsGuard ftz;
  const Shape& s = x.shape();
  if (s.c != graph.input.c || s.h != graph.input.h || s.w != graph.input.w) {
    throw ShapeError("model expects (B," + std::to_string(graph.input.c) + "," +
                     std::to_string(graph.input.h) + "," + std::to_string(graph.input.w) +
                     ") input, got " + s.str());
  }
  if (params.layers.size() != graph.parametric_layers().size()) {
    throw ShapeError("parameter set does not match the model graph");
  }
  ForwardResult<T> result;
  if (record_tape) result.tape.entries.resize(graph.layers.size());
  Tensor<T> cur = x;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    TapeEntry<T>* entry = record_tape ? &result.tape.entries[i] : nullptr;
    switch (l.kind) {
      case LayerKind::pad_rows:
        cur = zeropad_rows(cur, l.rows_top, l.rows_bottom);
        break;
      case LayerKind::crop_rows:
        cur = crop_rows(cur, l.rows_top, l.rows_bottom);
        break;
      case LayerKind::conv: {
        Tensor<T> y = conv2d_forward(cur, params.layers[l.param_index]);
        if (entry) entry->saved = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::conv_transpose: {
        Tensor<T> y = convtranspose2d_forward(cur, params.layers[l.param_index]);
        if (entry) entry->saved = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::relu: {
        Tensor<T> y = relu_forward(cur);
        if (entry) entry->saved = std::move(cur);
        cur = std::move(y);
        break;
      }
      case LayerKind::maxpool: {
        auto r = maxpool2x2_forward(cur);
        if (entry) entry->pool = std::move(r.mask);
        cur = std::move(r.output);
        break;
      }
      case LayerKind::dropout: {
        auto r = dropout(cur, l.rate, rng, training);
        if (entry) entry->drop = std::move(r.mask);
        cur = std::move(r.output);
        break;
      }
      case LayerKind::sigmoid:
        cur = sigmoid_forward(cur);
        if (entry) entry->saved = cur;
        break;
    }
  }
  result.y = std::move(cur);
  return result;
}

template <class T>
Tensor<T> predict_probabilities(const ModelGraph& graph, const ModelParams<T>& params,
                                const Tensor<T>& x) {
  Rng unused(0);
  return forward(graph, params, x, /*training=*/false, unused, /*record_tape=*/false).y;
}

template <class T>
std::vector<std::span<const T>> ModelGrads<T>::buffers() const {
  std::vector<std::span<const T>> out;
  for (std::size_t k = 0; k < d_weights.size(); ++k) {
    out.emplace_back(d_weights[k].values());
    out.emplace_back(d_bias[k]);
  }
  return out;
}

template <class T>
ModelGrads<T> backward(const ModelGraph& graph, const ModelParams<T>& params, const Tape<T>& tape,
                       const Tensor<T>& d_y) {
  const FlushDenormalsGuard ftz;
  if (tape.entries.size() != graph.layers.size()) {
    throw ShapeError("backward: tape was not recorded for this graph");
  }
  const Shape out = graph.output;
  const Shape& ds = d_y.shape();
  if (ds.c != out.c || ds.h != out.h || ds.w != out.w) {
    throw ShapeError("backward: d_y " + ds.str() + " does not match model output");
  }
  const std::size_t nparams = params.layers.size();
  ModelGrads<T> grads;
  grads.d_weights.resize(nparams);
  grads.d_bias.resize(nparams);
  Tensor<T> d = d_y;
  for (std::size_t i = graph.layers.size(); i-- > 0;) {
    const LayerSpec& l = graph.layers[i];
    const TapeEntry<T>& e = tape.entries[i];
    switch (l.kind) {
      case LayerKind::pad_rows:
        d = crop_rows(d, l.rows_top, l.rows_bottom);
        break;
      case LayerKind::crop_rows:
        d = zeropad_rows(d, l.rows_top, l.rows_bottom);
        break;
      case LayerKind::conv:
      case LayerKind::conv_transpose: {
        const auto& p = params.layers[l.param_index];
        LayerGrads<T> g = l.kind == LayerKind::conv ? conv2d_backward(e.saved, p, d)
                                                    : convtranspose2d_backward(e.saved, p, d);
        grads.d_weights[l.param_index] = std::move(g.d_weights);
        grads.d_bias[l.param_index] = std::move(g.d_bias);
        d = std::move(g.d_input);
        break;
      }
      case LayerKind::relu:
        d = relu_backward(e.saved, d);
        break;
      case LayerKind::maxpool:
        d = maxpool2x2_backward(e.pool, d);
        break;
      case LayerKind::dropout:
        d = dropout_backward(e.drop, d);
        break;
      case LayerKind::sigmoid:
        d = sigmoid_backward(e.saved, d);
        break;
    }
  }
  grads.d_input = std::move(d);
  return grads;
}

#define LANEDETECT_INSTANTIATE_MODEL(T)                                                       \
  template struct ModelParams<T>;                                                            \
  template ModelParams<T> init_params(const ModelGraph&, std::uint64_t);                     \
  template ForwardResult<T> forward(const ModelGraph&, const ModelParams<T>&,                \
                                    const Tensor<T>&, bool, Rng&, bool);                     \
  template Tensor<T> predict_probabilities(const ModelGraph&, const ModelParams<T>&,         \
                                           const Tensor<T>&);                                \
  template struct ModelGrads<T>;                                                             \
  template ModelGrads<T> backward(const ModelGraph&, const ModelParams<T>&, const Tape<T>&,  \
                                  const Tensor<T>&);

LANEDETECT_INSTANTIATE_MODEL(float)
LANEDETECT_INSTANTIATE_MODEL(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace lanedetect
