#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "lanedetect/dataset.hpp"
#include "lanedetect/errors.hpp"
#include "lanedetect/evaluate.hpp"
#include "lanedetect/gradcheck.hpp"
#include "lanedetect/layers.hpp"
#include "lanedetect/losses.hpp"
#include "lanedetect/metrics.hpp"
#include "lanedetect/model.hpp"
#include "lanedetect/shard.hpp"
#include "lanedetect/train.hpp"

namespace py = pybind11;
using namespace lanedetect;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class T>
Tensor<T> to_tensor(const Array<T>& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-d (N, C, H, W) array");
  const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
  return Tensor<T>(s, std::vector<T>(a.data(), a.data() + a.size()));
}

template <class T>
Array<T> to_array(const Tensor<T>& t) {
  const Shape& s = t.shape();
  Array<T> out({s.n, s.c, s.h, s.w});
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(T));
  return out;
}

ConvParams<double> conv_params(const Array<double>& w, const std::vector<double>& b, std::size_t stride,
                               std::size_t padding) {
  return ConvParams<double>{to_tensor(w), b, stride, padding};
}

py::tuple grads_tuple(const LayerGrads<double>& g) {
  return py::make_tuple(to_array(g.d_input), to_array(g.d_weights), g.d_bias);
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["step"] = r.step;
  d["loss"] = r.loss;
  d["binary_accuracy"] = r.binary_accuracy;
  d["f1"] = r.f1;
  d["lr"] = r.lr;
  d["wall_ms"] = r.wall_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lanedetect, m) {
  m.doc() = "Lane segmentation engine";

  py::register_exception<Error>(m, "LanedetectError", PyExc_RuntimeError);

  // Layers (float64, NCHW arrays).
  m.def("conv2d", [](const Array<double>& x, const Array<double>& w, const std::vector<double>& b,
                     std::size_t stride, std::size_t padding) {
    return to_array(conv2d_forward(to_tensor(x), conv_params(w, b, stride, padding)));
  }, py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("stride") = 1, py::arg("padding") = 0);
  m.def("conv2d_backward", [](const Array<double>& x, const Array<double>& w, const std::vector<double>& b,
                              const Array<double>& d_out, std::size_t stride, std::size_t padding) {
    return grads_tuple(conv2d_backward(to_tensor(x), conv_params(w, b, stride, padding), to_tensor(d_out)));
  }, py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("d_out"), py::arg("stride") = 1,
        py::arg("padding") = 0);
  m.def("conv_transpose2d", [](const Array<double>& x, const Array<double>& w, const std::vector<double>& b,
                               std::size_t stride, std::size_t padding) {
    return to_array(convtranspose2d_forward(to_tensor(x), conv_params(w, b, stride, padding)));
  }, py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("stride") = 1, py::arg("padding") = 0);
  m.def("conv_transpose2d_backward",
        [](const Array<double>& x, const Array<double>& w, const std::vector<double>& b,
           const Array<double>& d_out, std::size_t stride, std::size_t padding) {
          return grads_tuple(
              convtranspose2d_backward(to_tensor(x), conv_params(w, b, stride, padding), to_tensor(d_out)));
        },
        py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("d_out"), py::arg("stride") = 1,
        py::arg("padding") = 0);
  m.def("maxpool2x2", [](const Array<double>& x) {
    auto r = maxpool2x2_forward(to_tensor(x));
    return py::make_tuple(to_array(r.output), r.mask.argmax);
  });
  m.def("relu", [](const Array<double>& x) { return to_array(relu_forward(to_tensor(x))); });
  m.def("sigmoid", [](const Array<double>& x) { return to_array(sigmoid_forward(to_tensor(x))); });

  // Losses: (value, gradient w.r.t. prediction).
  auto loss = [](LossKind kind) {
    return [kind](const Array<double>& truth, const Array<double>& pred) {
      auto v = compute_loss(kind, to_tensor(truth), to_tensor(pred));
      return py::make_tuple(v.value, to_array(v.d_pred));
    };
  };
  m.def("dice_loss", loss(LossKind::dice), py::arg("truth"), py::arg("pred"));
  m.def("bce_loss", loss(LossKind::bce), py::arg("truth"), py::arg("pred"));
  m.def("mse_loss", loss(LossKind::mse), py::arg("truth"), py::arg("pred"));

  // Metrics.
  m.def("confusion", [](const Array<double>& truth, const Array<double>& pred, double threshold) {
    const auto c = confusion(to_tensor(truth), to_tensor(pred), threshold);
    py::dict d;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["tn"] = c.tn;
    d["fn"] = c.fn;
    const auto prf = precision_recall_f1(c);
    d["precision"] = prf.precision;
    d["recall"] = prf.recall;
    d["f1"] = prf.f1;
    d["binary_accuracy"] = binary_accuracy(c);
    return d;
  }, py::arg("truth"), py::arg("pred"), py::arg("threshold") = 0.5);
  m.def("threshold_grid", &parse_threshold_grid, py::arg("spec") = "0.05:0.95:0.05");

  // Model.
  m.def("parameter_count", [](std::size_t height, std::size_t width, std::size_t filter_scale) {
    ModelConfig c;
    c.height = height;
    c.width = width;
    c.filter_scale = filter_scale;
    return build_graph(c).parameter_count();
  }, py::arg("height") = 118, py::arg("width") = 328, py::arg("filter_scale") = 4);
  m.def("parameter_names", [](std::size_t filter_scale) {
    ModelConfig c;
    c.filter_scale = filter_scale;
    return build_graph(c).parameter_names();
  }, py::arg("filter_scale") = 4);

  // Data pipeline.
  m.def("binarize", [](const std::vector<std::uint8_t>& values) {
    Image img = Image::blank(values.size(), 1, 1);
    img.pixels = values;
    return binarize_mask(img).pixels;
  });
  m.def("parse_annotation", [](const std::string& text) {
    std::vector<std::vector<std::pair<double, double>>> out;
    for (const auto& line : parse_annotation(text)) {
      auto& poly = out.emplace_back();
      for (const auto& p : line) poly.emplace_back(p.x, p.y);
    }
    return out;
  });
  m.def("split_sizes", [](std::size_t n, std::uint64_t seed) {
    DatasetIndex index;
    index.entries.resize(n);
    for (std::size_t i = 0; i < n; ++i) index.entries[i].image = std::to_string(i);
    const auto [train_set, dev_set] = split_dataset(index, SplitSpec{seed, 0.9});
    return py::make_tuple(train_set.entries.size(), dev_set.entries.size());
  }, py::arg("n"), py::arg("seed") = 0);
  m.def("write_shard", [](const std::filesystem::path& path, const Array<std::uint8_t>& images,
                          const Array<std::uint8_t>& masks) {
    if (images.ndim() != 4 || images.shape(3) != 3 || masks.ndim() != 3) {
      throw ShapeError("expected images (N, H, W, 3) and masks (N, H, W)");
    }
    const std::size_t n = images.shape(0), h = images.shape(1), w = images.shape(2);
    if (masks.shape(0) != images.shape(0) || masks.shape(1) != images.shape(1) ||
        masks.shape(2) != images.shape(2)) {
      throw ShapeError("masks must match the image batch, height and width");
    }
    std::vector<SampleRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
      records[i] = SampleRecord{h, w, std::vector<std::uint8_t>(images.data() + i * h * w * 3, images.data() + (i + 1) * h * w * 3),
                                std::vector<std::uint8_t>(masks.data() + i * h * w, masks.data() + (i + 1) * h * w)};
    }
    write_shard(path, records);
  });
  m.def("read_shard", [](const std::filesystem::path& path) {
    const auto records = read_shard(path);
    const std::size_t n = records.size(), h = records.front().height, w = records.front().width;
    Array<std::uint8_t> images({n, h, w, std::size_t{3}});
    Array<std::uint8_t> masks({n, h, w});
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(images.mutable_data() + i * h * w * 3, records[i].image.data(), h * w * 3);
      std::memcpy(masks.mutable_data() + i * h * w, records[i].mask.data(), h * w);
    }
    return py::make_tuple(images, masks);
  });

  // Training and evaluation.
  m.def("train", [](const std::filesystem::path& shards, const std::filesystem::path& out, std::uint64_t epochs,
                    std::size_t batch, const std::string& loss_name, double lr, std::uint64_t seed,
                    std::size_t filter_scale, std::uint64_t checkpoint_interval) {
    TrainConfig c;
    c.shards = shards;
    c.out_dir = out;
    c.epochs = epochs;
    c.batch = batch;
    c.loss = parse_loss_kind(loss_name);
    c.lr.initial = lr;
    c.lr.floor = lr;
    c.seed = seed;
    c.filter_scale = filter_scale;
    c.checkpoint_interval = checkpoint_interval;
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(c);
    }
    py::list records;
    for (const auto& rec : r.records) records.append(record_dict(rec));
    return py::make_tuple(r.final_checkpoint, records);
  }, py::arg("shards"), py::arg("out"), py::arg("epochs") = 1, py::arg("batch") = 128, py::arg("loss") = "dice",
        py::arg("lr") = 1e-4, py::arg("seed") = 0, py::arg("filter_scale") = 4, py::arg("checkpoint_interval") = 10);
  m.def("evaluate", [](const std::filesystem::path& ckpt, const std::filesystem::path& shards, double threshold) {
    EvalOptions o;
    o.threshold = threshold;
    py::gil_scoped_release release;
    const MetricsRecord r = evaluate(ckpt, shards, o);
    py::gil_scoped_acquire acquire;
    return record_dict(r);
  }, py::arg("ckpt"), py::arg("shards"), py::arg("threshold") = 0.5);
  m.def("sweep_csv", [](const std::filesystem::path& ckpt, const std::filesystem::path& shards,
                        const std::string& grid) {
    return sweep_csv(threshold_sweep(ckpt, shards, parse_threshold_grid(grid)));
  }, py::arg("ckpt"), py::arg("shards"), py::arg("grid") = "0.05:0.95:0.05");
  m.def("predict", [](const std::filesystem::path& ckpt, const std::filesystem::path& image, double threshold,
                      bool allow_any_size) {
    const Prediction p = predict(ckpt, image, PredictOptions{threshold, allow_any_size});
    Array<std::uint8_t> prob({p.probability.height, p.probability.width});
    std::memcpy(prob.mutable_data(), p.probability.pixels.data(), p.probability.pixels.size());
    Array<std::uint8_t> mask({p.mask.height, p.mask.width});
    std::memcpy(mask.mutable_data(), p.mask.pixels.data(), p.mask.pixels.size());
    return py::make_tuple(prob, mask);
  }, py::arg("ckpt"), py::arg("image"), py::arg("threshold") = 0.5, py::arg("allow_any_size") = false);

  m.def("gradcheck", [](std::uint64_t seed, double eps) {
    GradcheckOptions o;
    o.seed = seed;
    o.epsilon = eps;
    const GradcheckReport r = run_gradcheck(o);
    py::dict worst;
    for (const auto& s : r.suites) worst[py::str(s.name)] = s.worst_error;
    return py::make_tuple(r.passed(), worst);
  }, py::arg("seed") = 0, py::arg("eps") = 1e-5);
}
