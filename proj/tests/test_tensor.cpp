#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "lanedetect/tensor.hpp"

using namespace lanedetect;

TEST_CASE("zeros") {
  const auto a = TensorF::zeros(Shape{1, 1, 2, 2});
  CHECK(a.size() == 4);
  for (float v : a.values()) CHECK(v == 0.0f);

  const auto big = TensorF::zeros(Shape{2, 3, 118, 328});
  CHECK(big.size() == 232224);
  CHECK(reduce_sum(big) == 0.0);

  const auto unit = TensorD::zeros(Shape{1, 1, 1, 1});
  CHECK(unit.size() == 1);
  CHECK(unit[0] == 0.0);
}

TEST_CASE("invalid shapes") {
  CHECK_THROWS_AS(TensorF::zeros(Shape{0, 1, 1, 1}), ShapeError);
  const std::size_t huge = std::numeric_limits<std::size_t>::max() / 2;
  CHECK_THROWS_AS(TensorF::zeros(Shape{huge, 4, 1, 1}), SizeError);
  CHECK_THROWS_AS(TensorF(Shape{1, 1, 2, 2}, {1.0f, 2.0f}), ShapeError);
}

TEST_CASE("elementwise") {
  const TensorD a(Shape{1, 1, 1, 2}, {1, 2});
  const TensorD b(Shape{1, 1, 1, 2}, {3, 4});
  CHECK(add(a, b) == TensorD(Shape{1, 1, 1, 2}, {4, 6}));
  CHECK(mul(a, TensorD::zeros(a.shape())) == TensorD::zeros(a.shape()));
  CHECK(sub(a, a) == TensorD::zeros(a.shape()));
  CHECK(elementwise(a, b, ElementwiseOp::mul) == TensorD(Shape{1, 1, 1, 2}, {3, 8}));
  CHECK_THROWS_AS(add(a, TensorD::zeros(Shape{1, 1, 2, 1})), ShapeError);
}

TEST_CASE("exact scalar algebra on representable values") {
  const TensorD a(Shape{1, 1, 1, 3}, {0.5, -2, 8});
  const TensorD b(Shape{1, 1, 1, 3}, {0.25, 3, -1});
  const TensorD c(Shape{1, 1, 1, 3}, {1, 1.5, 4});
  CHECK(add(a, b) == add(b, a));
  CHECK(mul(a, b) == mul(b, a));
  CHECK(add(add(a, b), c) == add(a, add(b, c)));
}

TEST_CASE("reduce_sum") {
  CHECK(reduce_sum(TensorD(Shape{1, 1, 1, 4}, {1, 2, 3, 4})) == 10.0);
  CHECK(reduce_sum(TensorF::zeros(Shape{1, 2, 3, 4})) == 0.0);
  const auto tenth = TensorF::full(Shape{1, 1, 10, 100}, 0.1f);
  // f32 0.1 summed in double: 1000 * float(0.1)
  CHECK(reduce_sum(tenth) == doctest::Approx(100.0).epsilon(1e-6));
  const auto tenth_d = TensorD::full(Shape{1, 1, 10, 100}, 0.1);
  CHECK(std::abs(reduce_sum(tenth_d) - 100.0) <= 1e-9);
}

TEST_CASE("reduce_sum is repeatable and sum of squares is nonnegative") {
  TensorF a = TensorF::zeros(Shape{2, 3, 7, 5});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::sin(static_cast<float>(i) * 1.7f) * 1e3f;
  const double s1 = reduce_sum(a), s2 = reduce_sum(a);
  CHECK(std::memcmp(&s1, &s2, sizeof s1) == 0);
  CHECK(reduce_sum(mul(a, a)) >= 0.0);
}

TEST_CASE("batch slicing") {
  TensorF a = TensorF::zeros(Shape{3, 1, 1, 2});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(i);
  const auto mid = slice_batch(a, 1, 2);
  CHECK(mid.shape() == Shape{2, 1, 1, 2});
  CHECK(mid[0] == 2.0f);
  CHECK(concat_batch(std::vector<TensorF>{slice_batch(a, 0, 1), mid}) == a);
  CHECK_THROWS_AS(slice_batch(a, 2, 2), ShapeError);
}

TEST_CASE("casts and finiteness") {
  const TensorD a(Shape{1, 1, 1, 2}, {1.5, -2});
  CHECK(a.cast<float>().cast<double>() == a);
  std::vector<float> bad{1.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_FALSE(all_finite(std::span<const float>(bad)));
  CHECK(all_finite(a.values()));
}
