#include <doctest.h>

#include <algorithm>
#include <set>
#include <thread>

#include "lanedetect/batch_iterator.hpp"
#include "lanedetect/dataset.hpp"
#include "lanedetect/image.hpp"
#include "lanedetect/shard.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic.hpp"

using namespace lanedetect;
using namespace lanedetect::test;
namespace fs = std::filesystem;

TEST_CASE("binarize") {
  Image raw = Image::blank(256, 1, 1);
  for (std::size_t v = 0; v < 256; ++v) raw.pixels[v] = static_cast<std::uint8_t>(v);
  raw.pixels.resize(5);
  raw.width = 5;
  const Image b = binarize_mask(raw);
  CHECK(b.pixels == std::vector<std::uint8_t>{0, 1, 1, 1, 1});
  for (int v = 5; v < 256; ++v) {
    Image bad = Image::blank(1, 1, 1);
    bad.pixels[0] = static_cast<std::uint8_t>(v);
    CHECK_THROWS_AS(binarize_mask(bad), DataError);
  }
  Image four = Image::blank(4, 1, 1);
  four.pixels = {0, 1, 4, 2};
  CHECK(binarize_mask(four).pixels == std::vector<std::uint8_t>{0, 1, 1, 1});
}

TEST_CASE("resize to working resolution") {
  const Image frame = noise_image(kCulaneWidth, kCulaneHeight, 3);
  const Image small = resize_image(frame);
  CHECK(small.width == 328);
  CHECK(small.height == 118);

  Image flat = Image::blank(kCulaneWidth, kCulaneHeight, 3);
  std::fill(flat.pixels.begin(), flat.pixels.end(), std::uint8_t{77});
  for (auto p : resize_image(flat).pixels) CHECK(p == 77);

  Image ones = Image::blank(kCulaneWidth, kCulaneHeight, 1);
  std::fill(ones.pixels.begin(), ones.pixels.end(), std::uint8_t{1});
  const Image m = resize_mask(ones);
  CHECK(m.width == 328);
  for (auto p : m.pixels) CHECK(p == 1);

  // Exact 5x5 block mean.
  const Image block = resize_area(frame, 328, 118);
  double sum = 0.0;
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) sum += frame.pixels[(y * kCulaneWidth + x) * 3 + 1];
  CHECK(std::abs(block.pixels[1] - sum / 25.0) <= 0.5);

  CHECK_THROWS_AS(resize_image(noise_image(800, 600, 1)), DataError);
  CHECK(resize_image(noise_image(800, 600, 1), ResizeOptions{0.2, true}).width == 160);
}

TEST_CASE("annotation parsing") {
  CHECK(parse_annotation("").empty());
  const auto one = parse_annotation("10 590 20 580 30 570");
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 3);
  CHECK(one[0][2].x == 30.0);
  CHECK(one[0][2].y == 570.0);
  CHECK(parse_annotation("1 2 3 4\n\n5 6 7 8\n").size() == 2);
  try {
    parse_annotation("1 2\n3 4 5\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_annotation("1 2 x 4"), ParseError);
  CHECK_THROWS_AS(parse_annotation("1 1\n2 2\n3 3\n4 4\n5 5\n"), ParseError);
  CHECK(parse_annotation("1 1\n2 2\n3 3\n4 4\n").size() == 4);
}

TEST_CASE("rendered lanes") {
  const Image m = render_polylines({{{0, 5}, {19, 5}}, {{10, 0}, {10, 9}}}, 20, 10, 1.0);
  CHECK(m.pixels[5 * 20 + 3] == 1);
  CHECK(m.pixels[2 * 20 + 10] == 2);
  CHECK(m.pixels[0] == 0);
}

TEST_CASE("overlay") {
  const Image rgb = noise_image(12, 7, 4);
  CHECK(overlay_mask(rgb, Image::blank(12, 7, 1)) == rgb);
  Image mask = Image::blank(12, 7, 1);
  mask.pixels[0] = 255;
  const Image o = overlay_mask(rgb, mask);
  CHECK(o.pixels[0] == static_cast<std::uint8_t>(std::lround(0.4 * rgb.pixels[0] + 0.6 * 255)));
  CHECK(std::equal(o.pixels.begin() + 3, o.pixels.end(), rgb.pixels.begin() + 3));
}

TEST_CASE("channel shift") {
  Rng rng(1);
  TensorF x = TensorF::zeros(Shape{2, 3, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>((i % 11) / 10.0);
  TensorF same = x;
  channel_shift(same, 0.0, rng);
  CHECK(same == x);
  TensorF a = x, b = x;
  Rng r1(5), r2(5);
  channel_shift(a, 0.5, r1);
  channel_shift(b, 0.5, r2);
  CHECK(a == b);
  CHECK_FALSE(a == x);
  for (float v : a.values()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK_THROWS_AS(channel_shift(a, -0.1, r1), DomainError);
}

TEST_CASE("image codecs round trip") {
  const fs::path dir = fresh_dir("codec");
  const Image rgb = noise_image(9, 5, 2);
  save_image(dir / "a.png", rgb);
  save_image(dir / "a.ppm", rgb);
  CHECK(load_image(dir / "a.png") == rgb);
  CHECK(load_image(dir / "a.ppm") == rgb);
  const Image m = stripe_labels(90, 3);
  save_image(dir / "m.png", m);
  CHECK(load_mask(dir / "m.png") == m);
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
}

TEST_CASE("dataset scan") {
  const fs::path empty = fresh_dir("scan_empty");
  CHECK(scan_dataset(empty).entries.empty());
  CHECK_THROWS_AS(scan_dataset(empty / "nope"), IoError);

  const fs::path root = fresh_dir("scan");
  add_frame(root, "driver_b", "00030", true, false, 64, 32);
  add_frame(root, "driver_a", "00060", true, true, 64, 32);
  add_frame(root, "driver_a", "00000", true, false, 64, 32);
  add_frame(root, "driver_a", "00090", false, false, 64, 32);
  add_frame(root, "driver_c", "00010", false, true, 64, 32);
  const DatasetIndex index = scan_dataset(root);
  REQUIRE(index.entries.size() == 4);
  CHECK(index.entries[0].image == root / "driver_a/00000.ppm");
  CHECK(index.entries[1].image == root / "driver_a/00060.ppm");
  CHECK(index.entries[1].annotation.has_value());
  CHECK(index.entries[2].image == root / "driver_b/00030.ppm");
  CHECK(index.entries[2].mask == root / "laneseg_label_w16/driver_b/00030.png");
  CHECK_FALSE(index.entries[3].mask.has_value());
  REQUIRE(index.warnings.size() == 1);
  CHECK(index.warnings[0].find("driver_a/00090") != std::string::npos);

  write_text(root / "list.txt", "/driver_b/00030.ppm /laneseg_label_w16/driver_b/00030.png 1 1\n");
  const DatasetIndex listed = scan_dataset(root, root / "list.txt");
  REQUIRE(listed.entries.size() == 1);
  CHECK(listed.entries[0].image == root / "driver_b/00030.ppm");
}

TEST_CASE("split") {
  auto make = [](std::size_t n) {
    DatasetIndex index;
    for (std::size_t i = 0; i < n; ++i) index.entries.push_back({std::to_string(i), {}, {}});
    return index;
  };
  const auto idx = make(100);
  const auto [train, dev] = split_dataset(idx, SplitSpec{3, 0.9});
  CHECK(train.entries.size() == 90);
  CHECK(dev.entries.size() == 10);
  std::set<std::string> all;
  for (const auto& e : train.entries) all.insert(e.image.string());
  for (const auto& e : dev.entries) all.insert(e.image.string());
  CHECK(all.size() == 100);

  const auto [t1, d1] = split_dataset(make(10), SplitSpec{9, 0.9});
  const auto [t2, d2] = split_dataset(make(10), SplitSpec{9, 0.9});
  CHECK(t1.entries == t2.entries);
  CHECK(d1.entries == d2.entries);

  const auto [t0, d0] = split_dataset(make(1), SplitSpec{});
  CHECK(t0.entries.empty());
  CHECK(d0.entries.size() == 1);
  CHECK_THROWS_AS(split_dataset(make(0), SplitSpec{}), DataError);
  CHECK_THROWS(split_dataset(make(5), SplitSpec{0, 1.0}));
}

TEST_CASE("shard round trip") {
  const fs::path dir = fresh_dir("shards");
  const auto records = straight_lane_set(5, 1, 16, 24);
  const auto paths = pack_records(records, dir, 2);
  REQUIRE(paths.size() == 3);
  CHECK(read_shard(paths[0]).size() == 2);
  CHECK(read_shard(paths[2]).size() == 1);
  std::vector<SampleRecord> back;
  for (const auto& p : list_shards(dir)) {
    for (auto& r : read_shard(p)) back.push_back(std::move(r));
  }
  CHECK(back == records);
  ShardReader reader(paths[1]);
  CHECK(reader.read(1) == records[3]);
  CHECK_THROWS_AS(reader.read(2), DataError);
}

TEST_CASE("corrupt shards") {
  const fs::path dir = fresh_dir("bad_shards");
  const auto records = straight_lane_set(2, 2, 8, 8);
  write_shard(dir / "a.ldpk", records);
  std::ifstream in(dir / "a.ldpk", std::ios::binary);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream(dir / name, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  auto magic = bytes;
  magic[3] = 'Q';
  CHECK_THROWS_AS(read_shard(write("magic.ldpk", magic)), FormatError);
  auto count = bytes;
  count[8] = 3;
  CHECK_THROWS_AS(read_shard(write("count.ldpk", count)), FormatError);
  const std::vector<char> cut(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(read_shard(write("cut.ldpk", cut)), FormatError);
  auto mask = bytes;
  mask.back() = 7;
  CHECK_THROWS_AS(read_shard(write("mask.ldpk", mask)), FormatError);

  auto bad = records;
  bad[1].height = 9;
  CHECK_THROWS(write_shard(dir / "mixed.ldpk", bad));
}

TEST_CASE("prepare from a CULane-style tree") {
  const fs::path root = fresh_dir("prepare_src");
  add_frame(root, "d0", "f0", true, false);
  add_frame(root, "d0", "f1", false, true);
  const DatasetIndex index = scan_dataset(root);
  REQUIRE(index.entries.size() == 2);
  const fs::path out = fresh_dir("prepare_out");
  const auto paths = pack_shards(index, out, PrepareOptions{});
  REQUIRE(paths.size() == 1);
  const auto recs = read_shard(paths[0]);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].height == 118);
  CHECK(recs[0].width == 328);
  // Stripes of width 40 px at full size are 8 px wide after the 1/5 resize; value 0 on the first.
  CHECK(recs[0].mask[0] == 0);
  CHECK(recs[0].mask[8] == 1);
  CHECK(std::count(recs[1].mask.begin(), recs[1].mask.end(), 1) > 0);
}

TEST_CASE("batch partition and order") {
  const fs::path dir = fresh_dir("batches");
  pack_records(straight_lane_set(300, 3, 8, 8), dir, 64);
  const auto files = list_shards(dir);
  BatchOptions o;
  o.batch_size = 128;
  o.seed = 4;
  std::vector<std::size_t> sizes;
  std::vector<std::uint64_t> ids;
  BatchIterator it(files, o);
  CHECK(it.sample_count() == 300);
  CHECK(it.batch_count() == 3);
  while (auto b = it.next()) {
    sizes.push_back(b->x.shape().n);
    CHECK(b->labels.shape() == Shape{b->x.shape().n, 1, 8, 8});
    ids.insert(ids.end(), b->sample_ids.begin(), b->sample_ids.end());
  }
  CHECK(sizes == std::vector<std::size_t>{128, 128, 44});
  CHECK(std::set<std::uint64_t>(ids.begin(), ids.end()).size() == 300);

  std::vector<std::uint64_t> again;
  BatchIterator it2(files, o);
  while (auto b = it2.next()) again.insert(again.end(), b->sample_ids.begin(), b->sample_ids.end());
  CHECK(again == ids);

  o.epoch = 1;
  std::vector<std::uint64_t> next_epoch;
  BatchIterator it3(files, o);
  while (auto b = it3.next()) next_epoch.insert(next_epoch.end(), b->sample_ids.begin(), b->sample_ids.end());
  CHECK(next_epoch != ids);
}

TEST_CASE("batch normalization is exact") {
  const fs::path dir = fresh_dir("norm");
  const auto records = straight_lane_set(3, 5, 6, 8);
  pack_records(records, dir, 8);
  BatchOptions o;
  o.batch_size = 3;
  o.shuffle = false;
  BatchIterator it(list_shards(dir), o);
  const auto b = it.next();
  REQUIRE(b);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const float v = b->x.at(n, c, y, x);
          CHECK(std::lround(v * 255.0f) == records[n].image[(y * 8 + x) * 3 + c]);
          CHECK(b->labels.at(n, 0, y, x) == records[n].mask[y * 8 + x]);
        }
  CHECK_FALSE(it.next());
}

TEST_CASE("memory bound with a slow consumer") {
  const fs::path dir = fresh_dir("bound");
  pack_records(straight_lane_set(200, 6, 4, 8), dir, 50);
  BatchOptions o;
  o.batch_size = 4;
  o.prefetch_depth = 2;
  BatchIterator it(list_shards(dir), o);
  std::size_t n = 0;
  while (auto b = it.next()) {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    n += b->x.shape().n;
  }
  CHECK(n == 200);
  CHECK(it.peak_in_flight() <= 3);
  CHECK(it.peak_in_flight() >= 1);
}

TEST_CASE("empty shard set") {
  CHECK_THROWS_AS(BatchIterator({}, BatchOptions{}), DataError);
  const fs::path dir = fresh_dir("empty_shards");
  CHECK(list_shards(dir).empty());
}
