#include <doctest.h>

#include <set>

#include "lanedetect/gradcheck.hpp"
#include "lanedetect/layers.hpp"
#include "lanedetect/model.hpp"

using namespace lanedetect;

TEST_CASE("all suites pass on a clean build") {
  const GradcheckReport r = run_gradcheck();
  CHECK(r.passed());
  for (const auto& s : r.suites) {
    INFO(s.name);
    CHECK(s.passed);
    CHECK(s.cases >= (s.name == "model" ? 3u : 20u));
  }
}

TEST_CASE("each layer type is reported exactly once") {
  const GradcheckReport r = run_gradcheck(GradcheckOptions{.cases = 2, .include_model = false});
  std::multiset<std::string> names;
  for (const auto& s : r.suites) names.insert(s.name);
  for (LayerKind k : {LayerKind::pad_rows, LayerKind::conv, LayerKind::conv_transpose, LayerKind::relu,
                      LayerKind::maxpool, LayerKind::dropout, LayerKind::sigmoid, LayerKind::crop_rows}) {
    CHECK(names.count(to_string(k)) == 1);
  }
  for (const char* loss : {"dice_loss", "bce_loss", "mse_loss"}) CHECK(names.count(loss) == 1);
  const std::string text = r.format();
  CHECK(text.find("conv_transpose2d") != std::string::npos);
}

TEST_CASE("a perturbed conv backward is caught") {
  testing::set_conv_backward_fault(1e-3);
  const GradcheckReport r = run_gradcheck(GradcheckOptions{.cases = 5, .include_model = false});
  testing::set_conv_backward_fault(0.0);
  CHECK_FALSE(r.passed());
  for (const auto& s : r.suites) {
    if (s.name == "conv2d") CHECK_FALSE(s.passed);
  }
  CHECK(run_gradcheck(GradcheckOptions{.cases = 5, .include_model = false}).passed());
}
