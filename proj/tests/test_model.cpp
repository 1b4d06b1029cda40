#include <doctest.h>

#include <array>

#include "lanedetect/losses.hpp"
#include "lanedetect/model.hpp"
#include "support/oracles.hpp"

using namespace lanedetect;
using namespace lanedetect::test;

namespace {

ModelConfig tiny(std::size_t scale = 1) {
  ModelConfig c;
  c.height = 16;
  c.width = 32;
  c.filter_scale = scale;
  return c;
}

}  // namespace

TEST_CASE("layer inventory") {
  const ModelGraph g = build_graph(ModelConfig{});
  CHECK(g.count(LayerKind::conv) == 7);
  CHECK(g.count(LayerKind::conv_transpose) == 6);
  CHECK(g.count(LayerKind::maxpool) == 3);
  CHECK(g.count(LayerKind::dropout) == 3);
  CHECK(g.count(LayerKind::pad_rows) == 1);
  CHECK(g.count(LayerKind::crop_rows) == 1);
  CHECK(g.count(LayerKind::sigmoid) == 1);
  CHECK(g.input == Shape{1, 3, 118, 328});
  CHECK(g.output == Shape{1, 1, 118, 328});
}

TEST_CASE("shape chain") {
  const ModelGraph g = build_graph(ModelConfig{});
  CHECK(g.layers.front().kind == LayerKind::pad_rows);
  CHECK(g.layers.front().output == Shape{1, 3, 120, 328});
  Shape bottleneck;
  for (const auto& l : g.layers) {
    if (l.name == "enc7") bottleneck = l.output;
  }
  CHECK(bottleneck == Shape{1, 256, 15, 41});
  CHECK(g.layers.back().kind == LayerKind::crop_rows);
  CHECK(g.layers[g.layers.size() - 2].kind == LayerKind::sigmoid);
  CHECK(g.layers[g.layers.size() - 2].output == Shape{1, 1, 120, 328});
}

TEST_CASE("parameter count") {
  // (in, out, k) per layer, encoder then decoder.
  const std::array<std::array<std::size_t, 3>, 13> table{{{3, 32, 3},
                                                          {32, 64, 3},
                                                          {64, 64, 3},
                                                          {64, 128, 3},
                                                          {128, 128, 3},
                                                          {128, 256, 3},
                                                          {256, 256, 3},
                                                          {256, 256, 3},
                                                          {256, 128, 2},
                                                          {128, 128, 3},
                                                          {128, 64, 2},
                                                          {64, 32, 2},
                                                          {32, 1, 3}}};
  std::size_t total = 0;
  for (const auto& [in, out, k] : table) total += out * in * k * k + out;
  CHECK(total == 2073217);
  CHECK(build_graph(ModelConfig{}).parameter_count() == total);

  const auto names = build_graph(ModelConfig{}).parameter_names();
  REQUIRE(names.size() == 26);
  CHECK(names[0] == "enc1.weight");
  CHECK(names[1] == "enc1.bias");
  CHECK(names[25] == "dec6.bias");
}

TEST_CASE("unsupported geometry") {
  ModelConfig c;
  c.width = 330;
  CHECK_THROWS_AS(build_graph(c), ShapeError);
  c = ModelConfig{};
  c.filter_scale = 0;
  CHECK_THROWS(build_graph(c));
}

TEST_CASE("build is seeded") {
  const auto a = build_model(11), b = build_model(11), c = build_model(12);
  CHECK(a.params.layers[3].weights == b.params.layers[3].weights);
  CHECK_FALSE(a.params.layers[3].weights == c.params.layers[3].weights);
  for (const auto& l : a.params.layers) {
    for (float v : l.bias) CHECK(v == 0.0f);
  }
}

TEST_CASE("forward output shape and range") {
  const auto m = build_model(1);
  Rng rng(2);
  const TensorF x = random_tensor(Shape{2, 3, 118, 328}, rng, 0.0, 1.0).cast<float>();
  const TensorF y = predict_probabilities(m.graph, m.params, x);
  CHECK(y.shape() == Shape{2, 1, 118, 328});
  for (float v : y.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK_THROWS_AS(predict_probabilities(m.graph, m.params, TensorF::zeros(Shape{1, 3, 118, 320})), ShapeError);
  CHECK_THROWS_AS(predict_probabilities(m.graph, m.params, TensorF::zeros(Shape{1, 1, 118, 328})), ShapeError);
}

TEST_CASE("zero final layer gives a constant map") {
  const ModelGraph g = build_graph(tiny());
  auto params = init_params<double>(g, 3);
  auto& last = params.layers.back();
  for (double& w : last.weights.values()) w = 0.0;
  last.bias[0] = 0.7;
  Rng rng(4);
  const auto y = predict_probabilities(g, params, random_tensor(Shape{1, 3, 16, 32}, rng, 0.0, 1.0));
  const double expect = 1.0 / (1.0 + std::exp(-0.7));
  for (double v : y.values()) CHECK(v == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("inference is deterministic and batch independent") {
  const ModelGraph g = build_graph(tiny(2));
  const auto params = init_params<float>(g, 5);
  Rng rng(6);
  const TensorF a = random_tensor(Shape{1, 3, 16, 32}, rng, 0.0, 1.0).cast<float>();
  const TensorF b = random_tensor(Shape{1, 3, 16, 32}, rng, 0.0, 1.0).cast<float>();
  const TensorF ya = predict_probabilities(g, params, a);
  CHECK(predict_probabilities(g, params, a) == ya);
  const TensorF both = predict_probabilities(g, params, concat_batch(std::vector<TensorF>{a, b}));
  CHECK(slice_batch(both, 0, 1) == ya);
  CHECK(slice_batch(both, 1, 1) == predict_probabilities(g, params, b));
}

TEST_CASE("backward") {
  const ModelGraph g = build_graph(tiny());
  const auto params = init_params<double>(g, 7);
  Rng rng(8);
  const auto x = random_tensor(Shape{2, 3, 16, 32}, rng, 0.0, 1.0);
  auto fwd = forward(g, params, x, true, rng);
  const auto zero = backward(g, params, fwd.tape, TensorD::zeros(fwd.y.shape()));
  REQUIRE(zero.d_weights.size() == params.layers.size());
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    CHECK(zero.d_weights[k].shape() == params.layers[k].weights.shape());
    CHECK(zero.d_bias[k].size() == params.layers[k].bias.size());
    for (double v : zero.d_weights[k].values()) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(backward(g, params, fwd.tape, TensorD::zeros(Shape{2, 1, 16, 30})), ShapeError);
  CHECK_THROWS_AS(backward(g, params, Tape<double>{}, fwd.y), ShapeError);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  const ModelGraph g = build_graph(tiny());
  Rng rng(9);
  for (int trial = 0; trial < 3; ++trial) {
    auto params = init_params<double>(g, 10 + trial);
    for (auto& l : params.layers) {
      for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
    }
    const auto x = random_tensor(Shape{2, 3, 16, 32}, rng, 0.0, 1.0);
    const auto truth = random_mask(Shape{2, 1, 16, 32}, rng, 0.2);
    const bool training = trial == 1;
    const std::uint64_t drop_seed = 100 + trial;
    auto loss_of = [&](const ModelParams<double>& p) {
      Rng d(drop_seed);
      return dice_loss(truth, forward(g, p, x, training, d, false).y).value;
    };
    Rng d(drop_seed);
    auto fwd = forward(g, params, x, training, d);
    const auto grads = backward(g, params, fwd.tape, dice_loss(truth, fwd.y).d_pred);

    // Jacobian-vector product along a random direction.
    const auto analytic_buffers = grads.buffers();
    std::vector<std::vector<double>> dir;
    double jvp = 0.0;
    for (std::size_t k = 0; k < analytic_buffers.size(); ++k) {
      dir.push_back(random_vector(analytic_buffers[k].size(), rng));
    }
    double norm = 0.0;
    for (const auto& v : dir)
      for (double e : v) norm += e * e;
    for (auto& v : dir)
      for (double& e : v) e /= std::sqrt(norm);
    for (std::size_t k = 0; k < dir.size(); ++k)
      for (std::size_t i = 0; i < dir[k].size(); ++i) jvp += analytic_buffers[k][i] * dir[k][i];
    auto shifted = [&](double t) {
      auto q = params;
      auto qb = q.buffers();
      for (std::size_t k = 0; k < dir.size(); ++k)
        for (std::size_t i = 0; i < dir[k].size(); ++i) qb[k][i] += t * dir[k][i];
      return loss_of(q);
    };
    const double numeric = (shifted(1e-5) - shifted(-1e-5)) / 2e-5;
    CHECK(std::abs(jvp - numeric) / std::max(std::abs(jvp), std::abs(numeric)) < 1e-3);

    // A few individual coordinates of the last two layers.
    for (std::size_t k : {params.layers.size() - 1, params.layers.size() - 2}) {
      for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t idx = (i * 7919) % params.layers[k].weights.size();
        const double saved = params.layers[k].weights[idx];
        params.layers[k].weights[idx] = saved + 1e-5;
        const double up = loss_of(params);
        params.layers[k].weights[idx] = saved - 1e-5;
        const double down = loss_of(params);
        params.layers[k].weights[idx] = saved;
        const double num = (up - down) / 2e-5, ana = grads.d_weights[k][idx];
        CHECK(std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-3}) < 1e-4);
      }
    }
  }
}

TEST_CASE("dropout only in training") {
  const ModelGraph g = build_graph(tiny());
  const auto params = init_params<double>(g, 12);
  Rng r1(13), r2(14);
  const auto x = TensorD::full(Shape{1, 3, 16, 32}, 0.5);
  CHECK(forward(g, params, x, false, r1, false).y == forward(g, params, x, false, r2, false).y);
  Rng r3(13), r4(13), r5(99);
  const auto a = forward(g, params, x, true, r3, false).y;
  CHECK(a == forward(g, params, x, true, r4, false).y);
  CHECK_FALSE(a == forward(g, params, x, true, r5, false).y);
}
