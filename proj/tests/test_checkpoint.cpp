#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lanedetect/checkpoint.hpp"
#include "lanedetect/optim.hpp"

using namespace lanedetect;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lanedetect_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

BuiltModel small_model(std::uint64_t seed) {
  ModelConfig c;
  c.height = 16;
  c.width = 32;
  c.filter_scale = 1;
  return build_model(seed, c);
}

}  // namespace

TEST_CASE("save, load, save is byte identical") {
  auto m = small_model(1);
  AdamState<float> adam;
  std::vector<std::vector<float>> g;
  for (auto b : m.params.buffers()) g.emplace_back(b.size(), 0.01f);
  std::vector<std::span<const float>> gs(g.begin(), g.end());
  adam_step(m.params.buffers(), gs, adam);

  const Checkpoint ckpt = make_checkpoint(m.graph, m.params, &adam, 3, 42);
  const auto a = scratch("a.ldfcn"), b = scratch("b.ldfcn");
  save_checkpoint(a, ckpt);
  const Checkpoint loaded = load_checkpoint(a);
  CHECK(loaded == ckpt);
  save_checkpoint(b, loaded);
  CHECK(slurp(a) == slurp(b));
  CHECK(loaded.epoch == 3);
  CHECK(loaded.seed == 42);
  REQUIRE(loaded.adam.has_value());
  CHECK(loaded.adam->step == 1);

  const auto params = params_from_checkpoint(m.graph, loaded);
  CHECK(params.layers[2].weights == m.params.layers[2].weights);
  AdamState<float> restored;
  restore_adam(m.graph, loaded, restored);
  CHECK(restored.step == 1);
  CHECK(restored.m == adam.m);
  CHECK(restored.v == adam.v);
}

TEST_CASE("layout of the header") {
  auto m = small_model(2);
  const auto bytes = encode_checkpoint(make_checkpoint<float>(m.graph, m.params, nullptr, 0, 7));
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "LDFCN001");
  CHECK(bytes[8] == 26);  // u32 little-endian tensor count
  CHECK(bytes[9] == 0);
  CHECK(bytes[12] == 11);  // u16 name length of "enc1.weight"
  CHECK(std::string(bytes.begin() + 14, bytes.begin() + 25) == "enc1.weight");
  CHECK(bytes[25] == 0);  // dtype f32
  CHECK(bytes[26] == 4);  // rank
  CHECK(bytes[27] == 8);  // out channels at scale 1
  CHECK(bytes[bytes.size() - 8] == 7);  // seed footer
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto m = small_model(3);
  const auto good = encode_checkpoint(make_checkpoint<float>(m.graph, m.params, nullptr, 1, 1));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[7] = '2';  // other version
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  const std::vector<std::uint8_t> truncated(good.begin(), good.begin() + good.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);

  Checkpoint missing = decode_checkpoint(good);
  missing.tensors.pop_back();
  CHECK_THROWS_AS(params_from_checkpoint(m.graph, missing), FormatError);

  CHECK_THROWS_AS(load_checkpoint(scratch("does_not_exist.ldfcn")), IoError);
}

TEST_CASE("width is recovered from the weights") {
  auto m = small_model(4);
  const Checkpoint ckpt = make_checkpoint<float>(m.graph, m.params, nullptr, 0, 0);
  const ModelConfig c = config_from_checkpoint(ckpt, 16, 32);
  CHECK(c.filter_scale == 1);
  CHECK(c.height == 16);
}
