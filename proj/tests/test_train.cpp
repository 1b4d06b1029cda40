#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "lanedetect/evaluate.hpp"
#include "lanedetect/shard.hpp"
#include "lanedetect/train.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic.hpp"

using namespace lanedetect;
using namespace lanedetect::test;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// metrics.csv with the wall_ms column removed.
std::string metrics_without_wall(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

fs::path small_shards(const std::string& name, std::size_t count, std::size_t h = 16, std::size_t w = 32) {
  const fs::path dir = fresh_dir(name);
  pack_records(straight_lane_set(count, 21, h, w), dir, 4);
  return dir;
}

TrainConfig small_config(const fs::path& shards, const fs::path& out) {
  TrainConfig c;
  c.shards = shards;
  c.out_dir = out;
  c.epochs = 2;
  c.batch = 3;
  c.micro_batch = 2;
  c.filter_scale = 1;
  c.lr = LrSchedule{1e-3, 1.0, 1, 1e-3};
  c.seed = 17;
  c.checkpoint_interval = 1;
  return c;
}

bool records_equal(const MetricsRecord& a, const MetricsRecord& b) {
  return a.epoch == b.epoch && a.step == b.step && a.loss == b.loss &&
         a.binary_accuracy == b.binary_accuracy && a.f1 == b.f1 && a.lr == b.lr;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = TrainConfig{};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK(TrainConfig{}.epochs == 600);
  CHECK(TrainConfig{}.batch == 128);
  CHECK(TrainConfig{}.loss == LossKind::dice);
}

TEST_CASE("one epoch smoke run") {
  const fs::path shards = small_shards("smoke_shards", 2);
  const fs::path out = fresh_dir("smoke_out");
  TrainConfig c = small_config(shards, out);
  c.epochs = 1;
  const TrainResult r = train(c);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].epoch == 1);
  CHECK(r.records[0].step == 1);
  CHECK(r.final_checkpoint == out / "ckpt_000001.ldfcn");
  CHECK(fs::exists(r.final_checkpoint));
  CHECK(latest_checkpoint(out) == r.final_checkpoint);
  const std::string csv = slurp(r.metrics_csv);
  CHECK(csv.rfind("epoch,step,loss,binary_accuracy,f1,lr,wall_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("seeded runs are reproducible") {
  const fs::path shards = small_shards("det_shards", 5);
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  train(small_config(shards, a));
  train(small_config(shards, b));
  CHECK(slurp(a / "ckpt_000002.ldfcn") == slurp(b / "ckpt_000002.ldfcn"));
  CHECK(metrics_without_wall(a / "metrics.csv") == metrics_without_wall(b / "metrics.csv"));

  TrainConfig other = small_config(shards, fresh_dir("det_c"));
  other.seed = 18;
  train(other);
  CHECK(slurp(a / "ckpt_000002.ldfcn") != slurp(other.out_dir / "ckpt_000002.ldfcn"));
}

TEST_CASE("resume continues bit-identically") {
  const fs::path shards = small_shards("resume_shards", 5);
  const fs::path full = fresh_dir("resume_full"), part = fresh_dir("resume_part");
  TrainConfig c = small_config(shards, full);
  c.epochs = 3;
  const TrainResult uninterrupted = train(c);

  TrainConfig first = small_config(shards, part);
  train(first);
  TrainConfig second = small_config(shards, part);
  second.epochs = 3;
  second.resume = part / "ckpt_000002.ldfcn";
  const TrainResult resumed = train(second);
  REQUIRE(resumed.records.size() == 1);
  CHECK(records_equal(resumed.records[0], uninterrupted.records[2]));
  CHECK(slurp(full / "ckpt_000003.ldfcn") == slurp(part / "ckpt_000003.ldfcn"));
  CHECK(metrics_without_wall(full / "metrics.csv") == metrics_without_wall(part / "metrics.csv"));
}

TEST_CASE("loss selection") {
  const fs::path shards = small_shards("loss_shards", 3);
  for (LossKind k : {LossKind::bce, LossKind::mse}) {
    TrainConfig c = small_config(shards, fresh_dir("loss_" + to_string(k)));
    c.epochs = 1;
    c.loss = k;
    const auto r = train(c);
    CHECK(std::isfinite(r.records[0].loss));
  }
}

TEST_CASE("evaluate matches the last epoch when metrics come from inference") {
  const fs::path shards = small_shards("eval_shards", 5);
  const fs::path out = fresh_dir("eval_out");
  TrainConfig c = small_config(shards, out);
  c.eval_after_epoch = true;
  const TrainResult r = train(c);
  EvalOptions o;
  o.batch = c.batch;
  o.micro_batch = c.micro_batch;
  const MetricsRecord e = evaluate(r.final_checkpoint, shards, o);
  const MetricsRecord& last = r.records.back();
  CHECK(e.epoch == last.epoch);
  CHECK(e.step == last.step);
  CHECK(e.loss == last.loss);
  CHECK(e.binary_accuracy == last.binary_accuracy);
  CHECK(e.f1 == last.f1);

  // Threshold reaches the confusion counts.
  o.threshold = 0.3;
  const MetricsRecord low = evaluate(r.final_checkpoint, shards, o);
  const SweepResult sweep = threshold_sweep(r.final_checkpoint, shards, {0.3, 0.5}, o);
  CHECK(sweep.rows[0].f1 == low.f1);
  CHECK(sweep.rows[0].binary_accuracy == low.binary_accuracy);
  CHECK(sweep.rows[1].f1 == e.f1);

  CHECK_THROWS(evaluate(r.final_checkpoint, fresh_dir("eval_empty"), o));
  CHECK_THROWS(evaluate(r.final_checkpoint, small_shards("eval_wrong", 2, 16, 36), o));
}

TEST_CASE("micro-batching matches a single pass") {
  ModelConfig mc;
  mc.height = 16;
  mc.width = 32;
  mc.filter_scale = 1;
  mc.dropout_rate = 0.0;
  const ModelGraph g = build_graph(mc);
  Rng rng(3);
  TensorF x = TensorF::zeros(Shape{4, 3, 16, 32});
  for (float& v : x.values()) v = static_cast<float>(rng.uniform());
  TensorF y = TensorF::zeros(Shape{4, 1, 16, 32});
  for (std::size_t i = 0; i < y.size(); i += 5) y[i] = 1.0f;
  auto p1 = init_params<float>(g, 4), p2 = p1;
  AdamState<float> a1, a2;
  a1.lr = a2.lr = 1e-3;
  const StepResult s1 = train_step(g, p1, a1, x, y, LossKind::dice, 4, 9);
  const StepResult s2 = train_step(g, p2, a2, x, y, LossKind::dice, 1, 9);
  CHECK(s1.loss == doctest::Approx(s2.loss).epsilon(1e-6));
  CHECK(s1.counts == s2.counts);
  const auto b1 = p1.buffers(), b2 = p2.buffers();
  double worst = 0.0;
  for (std::size_t k = 0; k < b1.size(); ++k)
    for (std::size_t i = 0; i < b1[k].size(); ++i) worst = std::max(worst, double(std::abs(b1[k][i] - b2[k][i])));
  CHECK(worst < 1e-5);
}

TEST_CASE("non-finite input aborts the step without touching parameters") {
  ModelConfig mc;
  mc.height = 16;
  mc.width = 32;
  mc.filter_scale = 1;
  const ModelGraph g = build_graph(mc);
  auto params = init_params<float>(g, 5);
  const auto before = params.layers[0].weights;
  AdamState<float> adam;
  TensorF x = TensorF::full(Shape{1, 3, 16, 32}, 0.5f);
  x[7] = std::numeric_limits<float>::quiet_NaN();
  const TensorF y = TensorF::zeros(Shape{1, 1, 16, 32});
  CHECK_THROWS_AS(train_step(g, params, adam, x, y, LossKind::mse, 8, 0), NumericError);
  CHECK(params.layers[0].weights == before);
  CHECK(adam.step == 0);
}

TEST_CASE("prediction outputs") {
  const fs::path shards = small_shards("pred_shards", 2, 118, 328);
  const fs::path out = fresh_dir("pred_out");
  TrainConfig c = small_config(shards, out);
  c.epochs = 1;
  const TrainResult r = train(c);

  const fs::path img_dir = fresh_dir("pred_img");
  const Image frame = noise_image(328, 118, 8);
  save_image(img_dir / "frame.png", frame);
  const Prediction p = predict(r.final_checkpoint, img_dir / "frame.png");
  CHECK(p.input == frame);

  const Checkpoint ckpt = load_checkpoint(r.final_checkpoint);
  const ModelGraph g = build_graph(config_from_checkpoint(ckpt, 118, 328));
  const TensorF probs = predict_probabilities(g, params_from_checkpoint(g, ckpt), image_to_tensor(frame));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(p.probability.pixels[i] == std::lround(255.0 * probs[i]));
    CHECK(p.mask.pixels[i] == (probs[i] > 0.5f ? 255 : 0));
  }

  TensorF zeros = TensorF::zeros(Shape{1, 1, 118, 328});
  const Prediction blank = render_prediction(frame, zeros, 0.5);
  CHECK(blank.overlay == frame);

  // Full-size frames are reduced; other sizes need the opt-in.
  save_image(img_dir / "full.png", noise_image(1640, 590, 9));
  CHECK(predict(r.final_checkpoint, img_dir / "full.png").input.width == 328);
  save_image(img_dir / "odd.png", noise_image(400, 200, 10));
  CHECK_THROWS_AS(predict(r.final_checkpoint, img_dir / "odd.png"), DataError);
  CHECK(predict(r.final_checkpoint, img_dir / "odd.png", PredictOptions{0.5, true}).mask.width == 328);
  CHECK_THROWS(predict(r.final_checkpoint, img_dir / "missing.png"));
}
