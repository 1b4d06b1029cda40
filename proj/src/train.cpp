#include "lanedetect/train.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lanedetect/batch_iterator.hpp"
#include "lanedetect/evaluate.hpp"
#include "lanedetect/shard.hpp"

namespace lanedetect {

namespace fs = std::filesystem;

namespace {

constexpr double kTrainThreshold = 0.5;

void accumulate(ModelGrads<float>& total, ModelGrads<float>&& part) {
  if (total.d_weights.empty()) {
    total = std::move(part);
    return;
  }
  for (std::size_t k = 0; k < total.d_weights.size(); ++k) {
    auto dst = total.d_weights[k].values();
    auto src = part.d_weights[k].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < total.d_bias[k].size(); ++i) total.d_bias[k][i] += part.d_bias[k][i];
  }
}

void write_manifest(const fs::path& out_dir, const fs::path& latest, std::uint64_t epoch,
                    std::uint64_t seed) {
  nlohmann::json manifest;
  manifest["latest"] = latest.filename().string();
  manifest["epoch"] = epoch;
  manifest["seed"] = seed;
  std::vector<std::string> all;
  for (const auto& e : fs::directory_iterator(out_dir)) {
    if (e.path().extension() == ".ldfcn") all.push_back(e.path().filename().string());
  }
  std::sort(all.begin(), all.end());
  manifest["checkpoints"] = all;
  const fs::path tmp = out_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, out_dir / "manifest.json");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch < 1) throw DomainError("batch must be >= 1");
  if (micro_batch < 1) throw DomainError("micro batch must be >= 1");
  if (checkpoint_interval < 1) throw DomainError("checkpoint interval must be >= 1");
  if (prefetch_depth < 1) throw DomainError("prefetch depth must be >= 1");
  if (!(channel_shift >= 0.0)) throw DomainError("channel shift intensity must be >= 0");
  lr.validate();
}

std::string metrics_csv_row(const MetricsRecord& r) {
  char line[256];
  std::snprintf(line, sizeof line, "%" PRIu64 ",%" PRIu64 ",%.9g,%.9g,%.9g,%.9g,%" PRId64, r.epoch,
                r.step, r.loss, r.binary_accuracy, r.f1, r.lr, r.wall_ms);
  return line;
}

fs::path checkpoint_path(const fs::path& out_dir, std::uint64_t epoch) {
  char name[48];
  std::snprintf(name, sizeof name, "ckpt_%06" PRIu64 ".ldfcn", epoch);
  return out_dir / name;
}

fs::path latest_checkpoint(const fs::path& out_dir) {
  std::ifstream in(out_dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + out_dir.string());
  const auto manifest = nlohmann::json::parse(in);
  return out_dir / manifest.at("latest").get<std::string>();
}

StepResult train_step(const ModelGraph& graph, ModelParams<float>& params, AdamState<float>& adam,
                      const TensorF& x, const TensorF& labels, LossKind loss,
                      std::size_t micro_batch, std::uint64_t dropout_seed) {
  const std::size_t n = x.shape().n;
  if (labels.shape().n != n) throw ShapeError("train_step: images and labels differ in batch size");
  const std::size_t chunks = (n + micro_batch - 1) / micro_batch;
  auto chunk_rng = [&](std::size_t k) { return Rng(derive_seed(dropout_seed, {k})); };

  StepResult result;
  ModelGrads<float> grads;
  if (chunks == 1) {
    Rng rng = chunk_rng(0);
    auto fwd = forward(graph, params, x, /*training=*/true, rng);
    auto lv = compute_loss(loss, labels, fwd.y);
    result.loss = lv.value;
    if (!std::isfinite(result.loss)) throw NumericError("non-finite training loss");
    result.counts = confusion(labels, fwd.y, kTrainThreshold);
    grads = backward(graph, params, fwd.tape, lv.d_pred);
  } else {
    // First pass: predictions only, so the loss sees the whole batch.
    std::vector<TensorF> parts;
    for (std::size_t k = 0; k < chunks; ++k) {
      const std::size_t first = k * micro_batch;
      Rng rng = chunk_rng(k);
      parts.push_back(forward(graph, params, slice_batch(x, first, std::min(micro_batch, n - first)),
                              true, rng, /*record_tape=*/false)
                          .y);
    }
    const TensorF y = concat_batch(parts);
    auto lv = compute_loss(loss, labels, y);
    result.loss = lv.value;
    if (!std::isfinite(result.loss)) throw NumericError("non-finite training loss");
    result.counts = confusion(labels, y, kTrainThreshold);
    // Second pass: replay each chunk with the same dropout stream and backpropagate.
    for (std::size_t k = 0; k < chunks; ++k) {
      const std::size_t first = k * micro_batch;
      const std::size_t count = std::min(micro_batch, n - first);
      Rng rng = chunk_rng(k);
      auto fwd = forward(graph, params, slice_batch(x, first, count), true, rng);
      accumulate(grads, backward(graph, params, fwd.tape, slice_batch(lv.d_pred, first, count)));
    }
  }
  adam_step(params.buffers(), grads.buffers(), adam);
  return result;
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto shards = list_shards(config.shards);
  const ShardSetInfo info = inspect_shards(shards);

  ModelConfig model_config;
  model_config.height = info.height;
  model_config.width = info.width;
  model_config.filter_scale = config.filter_scale;
  model_config.dropout_rate = config.dropout_rate;
  const ModelGraph graph = build_graph(model_config);
  ModelParams<float> params = init_params<float>(graph, config.seed);
  AdamState<float> adam;
  std::uint64_t start_epoch = 0;
  if (config.resume) {
    const Checkpoint ckpt = load_checkpoint(*config.resume);
    params = params_from_checkpoint(graph, ckpt);
    restore_adam(graph, ckpt, adam);
    start_epoch = ckpt.epoch;
  }

  fs::create_directories(config.out_dir);
  TrainResult result;
  result.metrics_csv = config.out_dir / "metrics.csv";
  {
    const bool append = start_epoch > 0 && fs::exists(result.metrics_csv);
    std::ofstream csv(result.metrics_csv, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + result.metrics_csv.string());
    if (!append) csv << kMetricsCsvHeader << '\n';
  }

  for (std::uint64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    adam.lr = schedule_lr(epoch, config.lr);
    BatchOptions batch_options;
    batch_options.batch_size = config.batch;
    batch_options.seed = config.seed;
    batch_options.epoch = epoch;
    batch_options.prefetch_depth = config.prefetch_depth;
    batch_options.channel_shift = config.channel_shift;
    BatchIterator batches(shards, batch_options);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    ConfusionCounts counts;
    while (auto batch = batches.next()) {
      const std::uint64_t dropout_seed = derive_seed(config.seed, {kDropoutStream, adam.step});
      const StepResult step = train_step(graph, params, adam, batch->x, batch->labels, config.loss,
                                         config.micro_batch, dropout_seed);
      const std::size_t n = batch->x.shape().n;
      loss_sum += step.loss * static_cast<double>(n);
      seen += n;
      counts += step.counts;
    }

    MetricsRecord record;
    record.epoch = epoch + 1;
    record.step = adam.step;
    record.lr = adam.lr;
    if (config.eval_after_epoch) {
      EvalOptions eval;
      eval.loss = config.loss;
      eval.batch = config.batch;
      eval.micro_batch = config.micro_batch;
      eval.prefetch_depth = config.prefetch_depth;
      const MetricsRecord m = evaluate_params(graph, params, shards, eval);
      record.loss = m.loss;
      record.binary_accuracy = m.binary_accuracy;
      record.f1 = m.f1;
    } else {
      record.loss = loss_sum / static_cast<double>(seen);
      record.binary_accuracy = binary_accuracy(counts);
      record.f1 = precision_recall_f1(counts).f1;
    }
    record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    {
      std::ofstream csv(result.metrics_csv, std::ios::app);
      csv << metrics_csv_row(record) << '\n';
      if (!csv) throw IoError("cannot append to " + result.metrics_csv.string());
    }
    result.records.push_back(record);
    const bool stop = on_epoch && !on_epoch(record);

    const std::uint64_t done = epoch + 1;
    if (done % config.checkpoint_interval == 0 || done == config.epochs || stop) {
      const fs::path path = checkpoint_path(config.out_dir, done);
      save_checkpoint(path, make_checkpoint(graph, params, &adam, static_cast<std::uint32_t>(done),
                                            config.seed));
      write_manifest(config.out_dir, path, done, config.seed);
      result.final_checkpoint = path;
    }
    if (stop) break;
  }
  if (result.final_checkpoint.empty() && config.resume) result.final_checkpoint = *config.resume;
  return result;
}

}  // namespace lanedetect
