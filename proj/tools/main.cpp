#include <cinttypes>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lanedetect/dataset.hpp"
#include "lanedetect/errors.hpp"
#include "lanedetect/evaluate.hpp"
#include "lanedetect/gradcheck.hpp"
#include "lanedetect/layers.hpp"
#include "lanedetect/runtime.hpp"
#include "lanedetect/shard.hpp"
#include "lanedetect/train.hpp"

namespace fs = std::filesystem;
using namespace lanedetect;

namespace {

// "f,interval" -> factor and interval.
void parse_decay(const std::string& text, LrSchedule& s) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw DomainError("--lr-decay expects factor,interval");
  try {
    s.factor = std::stod(text.substr(0, comma));
    s.interval = std::stoull(text.substr(comma + 1));
  } catch (const std::logic_error&) {
    throw DomainError("--lr-decay expects factor,interval, got '" + text + "'");
  }
}

void print_record(const char* label, const MetricsRecord& r) {
  std::printf("%s epoch=%" PRIu64 " step=%" PRIu64 " loss=%.6f binary_accuracy=%.6f f1=%.6f\n", label,
              r.epoch, r.step, r.loss, r.binary_accuracy, r.f1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane segmentation with a fully convolutional encoder-decoder"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Scan a CULane-style tree and pack train/dev shards");
  fs::path root, list_file, prep_out;
  PrepareOptions prep;
  SplitSpec split;
  prepare->add_option("--root", root, "Dataset root")->required();
  prepare->add_option("--list", list_file, "List file restricting the frames");
  prepare->add_option("--out", prep_out, "Output directory (train/ and dev/ are created)")->required();
  prepare->add_option("--scale", prep.resize.scale, "Resize factor")->capture_default_str();
  prepare->add_option("--seed", split.seed, "Split seed")->capture_default_str();
  prepare->add_option("--shard-size", prep.shard_size, "Samples per shard")->capture_default_str();
  prepare->add_flag("--allow-any-size", prep.resize.allow_any_size, "Accept frames other than 1640x590");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train from shards");
  TrainConfig cfg;
  std::string loss_name = "dice", decay;
  double lr = 1e-4;
  std::optional<double> lr_floor;
  fs::path resume;
  train_cmd->add_option("--shards", cfg.shards, "Shard directory or file")->required();
  train_cmd->add_option("--out", cfg.out_dir, "Checkpoint directory")->required();
  train_cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch", cfg.batch)->capture_default_str();
  train_cmd->add_option("--micro-batch", cfg.micro_batch, "Samples per forward/backward chunk")
      ->capture_default_str();
  train_cmd->add_option("--loss", loss_name)->check(CLI::IsMember({"dice", "bce", "mse"}))->capture_default_str();
  train_cmd->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--lr-decay", decay, "Step decay as factor,interval");
  train_cmd->add_option("--lr-floor", lr_floor, "Smallest learning rate (default min(lr, 1e-4))");
  train_cmd->add_option("--seed", cfg.seed)->capture_default_str();
  train_cmd->add_option("--ckpt-interval", cfg.checkpoint_interval)->capture_default_str();
  train_cmd->add_option("--prefetch", cfg.prefetch_depth)->capture_default_str();
  train_cmd->add_option("--filter-scale", cfg.filter_scale)->capture_default_str();
  train_cmd->add_option("--dropout", cfg.dropout_rate)->capture_default_str();
  train_cmd->add_option("--channel-shift", cfg.channel_shift)->capture_default_str();
  train_cmd->add_flag("--eval-metrics", cfg.eval_after_epoch,
                      "Log metrics from an inference pass after each epoch");
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  fs::path ckpt, shards;
  EvalOptions eval;
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--shards", shards)->required();
  eval_cmd->add_option("--threshold", eval.threshold)->capture_default_str();
  eval_cmd->add_option("--batch", eval.batch)->capture_default_str();
  eval_cmd->add_option("--micro-batch", eval.micro_batch)->capture_default_str();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "F1 over a grid of thresholds");
  std::string grid = "0.05:0.95:0.05";
  fs::path sweep_out;
  sweep_cmd->add_option("--ckpt", ckpt)->required();
  sweep_cmd->add_option("--shards", shards)->required();
  sweep_cmd->add_option("--grid", grid, "lo:hi:step")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "CSV output")->required();
  sweep_cmd->add_option("--batch", eval.batch)->capture_default_str();
  sweep_cmd->add_option("--micro-batch", eval.micro_batch)->capture_default_str();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Segment one image");
  fs::path image, out_prob, out_mask, out_overlay;
  PredictOptions pred;
  predict_cmd->add_option("--ckpt", ckpt)->required();
  predict_cmd->add_option("--image", image)->required();
  predict_cmd->add_option("--out-prob", out_prob)->required();
  predict_cmd->add_option("--out-mask", out_mask)->required();
  predict_cmd->add_option("--out-overlay", out_overlay)->required();
  predict_cmd->add_option("--threshold", pred.threshold)->capture_default_str();
  predict_cmd->add_flag("--allow-any-size", pred.allow_any_size, "Resample frames of any size");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference and adjoint checks");
  GradcheckOptions gc;
  double fault = 0.0;
  grad_cmd->add_option("--seed", gc.seed)->capture_default_str();
  grad_cmd->add_option("--eps", gc.epsilon)->capture_default_str();
  grad_cmd->add_option("--cases", gc.cases)->capture_default_str();
  grad_cmd->add_option("--inject-conv-fault", fault)->group("");

  CLI11_PARSE(app, argc, argv);
  configure_threads();

  try {
    if (*prepare) {
      const auto index = scan_dataset(root, list_file.empty() ? std::nullopt : std::optional(list_file));
      for (const auto& w : index.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const auto [train_set, dev_set] = split_dataset(index, split);
      const auto train_files = pack_shards(train_set, prep_out / "train", prep);
      const auto dev_files = pack_shards(dev_set, prep_out / "dev", prep);
      std::printf("%zu samples: %zu train in %zu shards, %zu dev in %zu shards\n", index.entries.size(),
                  train_set.entries.size(), train_files.size(), dev_set.entries.size(), dev_files.size());
    } else if (*train_cmd) {
      cfg.loss = parse_loss_kind(loss_name);
      cfg.lr.initial = lr;
      cfg.lr.floor = lr_floor ? *lr_floor : std::min(lr, 1e-4);
      if (!decay.empty()) parse_decay(decay, cfg.lr);
      if (!resume.empty()) cfg.resume = resume;
      const TrainResult r = train(cfg, [](const MetricsRecord& m) {
        std::printf("epoch %" PRIu64 " step %" PRIu64 " loss %.6f acc %.6f f1 %.6f lr %.3g (%" PRId64 " ms)\n",
                    m.epoch, m.step, m.loss, m.binary_accuracy, m.f1, m.lr, m.wall_ms);
        std::fflush(stdout);
        return true;
      });
      std::printf("final checkpoint: %s\n", r.final_checkpoint.string().c_str());
    } else if (*eval_cmd) {
      print_record("eval", evaluate(ckpt, shards, eval));
    } else if (*sweep_cmd) {
      const SweepResult r = threshold_sweep(ckpt, shards, parse_threshold_grid(grid), eval);
      write_sweep_csv(sweep_out, r);
      const SweepRow& best = r.best();
      std::printf("best threshold %.6g f1 %.6f\n", best.threshold, best.f1);
    } else if (*predict_cmd) {
      const Prediction p = predict(ckpt, image, pred);
      save_image(out_prob, p.probability);
      save_image(out_mask, p.mask);
      save_image(out_overlay, p.overlay);
    } else if (*grad_cmd) {
      testing::set_conv_backward_fault(fault);
      const GradcheckReport report = run_gradcheck(gc);
      std::fputs(report.format().c_str(), stdout);
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
