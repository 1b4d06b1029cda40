#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "lanedetect/image.hpp"
#include "lanedetect/shard.hpp"
#include "support/fixtures.hpp"

using namespace lanedetect;
using namespace lanedetect::test;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LANEDETECT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("prepare, train, eval, sweep and predict from the command line") {
  const fs::path root = fresh_dir("cli_tree"), work = fresh_dir("cli_work"), log = work / "log.txt";
  for (int i = 0; i < 10; ++i) add_frame(root, "drive_a", "f" + std::to_string(i), true, false, 160, 80, i + 1);

  CHECK(run("prepare --root " + root.string() + " --out " + (work / "data").string(), log) == 2);
  CHECK(slurp(log).find("--allow-any-size") != std::string::npos);

  REQUIRE(run("prepare --root " + root.string() + " --out " + (work / "data").string() +
                  " --allow-any-size --shard-size 4",
              log) == 0);
  CHECK(list_shards(work / "data" / "train").size() == 3);
  CHECK(list_shards(work / "data" / "dev").size() == 1);

  const std::string shards = (work / "data" / "train").string();
  const std::string ckpts = (work / "ckpt").string();
  REQUIRE(run("train --shards " + shards + " --out " + ckpts +
                  " --epochs 2 --batch 4 --micro-batch 2 --loss bce --lr 1e-3 --lr-decay 0.5,1"
                  " --filter-scale 1 --seed 3 --ckpt-interval 1",
              log) == 0);
  CHECK(fs::exists(work / "ckpt" / "ckpt_000002.ldfcn"));
  const std::string csv = slurp(work / "ckpt" / "metrics.csv");
  CHECK(csv.find(",0.0005,") != std::string::npos);

  const std::string ckpt = (work / "ckpt" / "ckpt_000002.ldfcn").string();
  CHECK(run("eval --ckpt " + ckpt + " --shards " + shards, log) == 0);
  CHECK(slurp(log).find("eval epoch=2") != std::string::npos);

  CHECK(run("sweep --ckpt " + ckpt + " --shards " + shards + " --grid 0.1:0.9:0.2 --out " +
                (work / "sweep.csv").string(),
            log) == 0);
  const std::string sweep = slurp(work / "sweep.csv");
  CHECK(sweep.rfind("threshold,precision,recall,f1,binary_accuracy\n", 0) == 0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);

  save_image(work / "frame.png", noise_image(160, 80, 4));
  CHECK(run("predict --ckpt " + ckpt + " --image " + (work / "frame.png").string() + " --out-prob " +
                (work / "p.png").string() + " --out-mask " + (work / "m.png").string() +
                " --out-overlay " + (work / "o.png").string() + " --allow-any-size",
            log) == 0);
  const Image mask = load_mask(work / "m.png");
  CHECK(mask.width == 328);
  CHECK(mask.height == 118);
  CHECK(load_image(work / "o.png").width == 328);

  CHECK(run("train --shards " + shards + " --out " + ckpts + " --loss hinge", log) != 0);
  CHECK(run("frobnicate", log) != 0);
}

TEST_CASE("gradcheck exit status") {
  const fs::path log = fresh_dir("cli_grad") / "log.txt";
  CHECK(run("gradcheck --cases 3", log) == 0);
  CHECK(slurp(log).find("conv2d") != std::string::npos);
  CHECK(run("gradcheck --cases 3 --inject-conv-fault 1e-3", log) == 1);
}
