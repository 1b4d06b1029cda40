#include "lanedetect/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>

#include "lanedetect/layers.hpp"
#include "lanedetect/losses.hpp"
#include "lanedetect/model.hpp"

namespace lanedetect {

namespace {

using Objective = std::function<double()>;

TensorD random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t = TensorD::zeros(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

/// Worst error of `analytic` against central differences of `f` over `values`.
double check_span(std::span<double> values, std::span<const double> analytic, const Objective& f,
                  double eps) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f();
    values[i] = saved - eps;
    const double down = f();
    values[i] = saved;
    worst = std::max(worst, gradient_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

/// A random conv geometry whose output is 2..4 pixels per side.
struct ConvCase {
  Shape x;
  Shape w;
  std::size_t stride;
  std::size_t pad;
};

ConvCase random_conv_case(Rng& rng, bool transpose) {
  const std::size_t k = 1 + rng.below(3);
  const std::size_t s = 1 + rng.below(2);
  const std::size_t pad = k > 1 ? rng.below(2) : 0;
  const std::size_t in_c = 1 + rng.below(3), out_c = 1 + rng.below(3);
  const std::size_t n = 1 + rng.below(2);
  if (!transpose) {
    const std::size_t oh = 2 + rng.below(3), ow = 2 + rng.below(3);
    return {Shape{n, in_c, (oh - 1) * s + k - 2 * pad, (ow - 1) * s + k - 2 * pad},
            Shape{out_c, in_c, k, k}, s, pad};
  }
  std::size_t ih = 2 + rng.below(3), iw = 2 + rng.below(3);
  return {Shape{n, in_c, ih, iw}, Shape{in_c, out_c, k, k}, s, pad};
}

SuiteResult conv_suite(const GradcheckOptions& o, Rng& rng, bool transpose) {
  SuiteResult r{transpose ? "conv_transpose2d" : "conv2d", o.cases, 0.0, o.tolerance, false};
  for (std::size_t c = 0; c < o.cases; ++c) {
    const ConvCase cc = random_conv_case(rng, transpose);
    TensorD x = random_tensor(cc.x, rng);
    ConvParams<double> p{random_tensor(cc.w, rng), {}, cc.stride, cc.pad};
    p.bias = random_vector(transpose ? cc.w.c : cc.w.n, rng);
    auto fwd = [&] { return transpose ? convtranspose2d_forward(x, p) : conv2d_forward(x, p); };
    const TensorD proj = random_tensor(fwd().shape(), rng);
    const Objective f = [&] { return dot(fwd(), proj); };
    const LayerGrads<double> g =
        transpose ? convtranspose2d_backward(x, p, proj) : conv2d_backward(x, p, proj);
    r.worst_error = std::max({r.worst_error, check_span(x.values(), g.d_input.values(), f, o.epsilon),
                              check_span(p.weights.values(), g.d_weights.values(), f, o.epsilon),
                              check_span(p.bias, g.d_bias, f, o.epsilon)});
  }
  return r;
}

template <class Forward, class Backward>
SuiteResult unary_suite(const std::string& name, const GradcheckOptions& o, Rng& rng,
                        const std::function<TensorD(Rng&)>& make_input, Forward forward_fn,
                        Backward backward_fn) {
  SuiteResult r{name, o.cases, 0.0, o.tolerance, false};
  for (std::size_t c = 0; c < o.cases; ++c) {
    TensorD x = make_input(rng);
    const TensorD proj = random_tensor(forward_fn(x).shape(), rng);
    const Objective f = [&] { return dot(forward_fn(x), proj); };
    const TensorD dx = backward_fn(x, proj);
    r.worst_error = std::max(r.worst_error, check_span(x.values(), dx.values(), f, o.epsilon));
  }
  return r;
}

Shape small_shape(Rng& rng, bool even = false) {
  std::size_t h = 2 + rng.below(5), w = 2 + rng.below(5);
  if (even) {
    h += h % 2;
    w += w % 2;
  }
  return Shape{1 + rng.below(2), 1 + rng.below(3), h, w};
}

/// Values bounded away from zero so relu's kink is never crossed.
TensorD away_from_zero(const Shape& s, Rng& rng) {
  TensorD t = TensorD::zeros(s);
  for (double& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0);
  return t;
}

/// Distinct values so maxpool winners are stable under perturbation.
TensorD distinct_values(const Shape& s, Rng& rng) {
  TensorD t = TensorD::zeros(s);
  const auto order = [&] {
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
  }();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(order[i]);
  return t;
}

SuiteResult loss_suite(const std::string& name, LossKind kind, const GradcheckOptions& o, Rng& rng) {
  SuiteResult r{name, o.cases, 0.0, o.tolerance, false};
  for (std::size_t c = 0; c < o.cases; ++c) {
    const Shape s = small_shape(rng);
    TensorD truth = TensorD::zeros(s);
    for (double& v : truth.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    TensorD pred = random_tensor(s, rng, 0.05, 0.95);
    const Objective f = [&] { return compute_loss(kind, truth, pred).value; };
    const auto lv = compute_loss(kind, truth, pred);
    r.worst_error = std::max(r.worst_error, check_span(pred.values(), lv.d_pred.values(), f, o.epsilon));
  }
  return r;
}

SuiteResult adjoint_suite(const GradcheckOptions& o, Rng& rng) {
  SuiteResult r{"adjoint", o.cases, 0.0, o.adjoint_tolerance, false};
  for (std::size_t c = 0; c < o.cases; ++c) {
    const ConvCase cc = random_conv_case(rng, false);
    const TensorD x = random_tensor(cc.x, rng);
    ConvParams<double> conv{random_tensor(cc.w, rng), std::vector<double>(cc.w.n, 0.0), cc.stride, cc.pad};
    ConvParams<double> convt{conv.weights, std::vector<double>(cc.w.c, 0.0), cc.stride, cc.pad};
    const TensorD cx = conv2d_forward(x, conv);
    const TensorD y = random_tensor(cx.shape(), rng);
    const double lhs = dot(cx, y);
    const double rhs = dot(x, convtranspose2d_forward(y, convt));
    r.worst_error = std::max(r.worst_error, std::abs(lhs - rhs) / (std::abs(lhs) + 1e-12));
  }
  return r;
}

SuiteResult model_suite(const GradcheckOptions& o, Rng& rng) {
  SuiteResult r{"model", o.model_cases, 0.0, o.model_tolerance, false};
  ModelConfig cfg;
  cfg.height = 16;
  cfg.width = 32;
  cfg.filter_scale = 1;
  const ModelGraph graph = build_graph(cfg);
  for (std::size_t c = 0; c < o.model_cases; ++c) {
    ModelParams<double> params = init_params<double>(graph, rng.next_u64());
    for (auto& l : params.layers) {
      for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
    }
    const TensorD x = random_tensor(Shape{2, 3, cfg.height, cfg.width}, rng, 0.0, 1.0);
    TensorD truth = TensorD::zeros(Shape{2, 1, cfg.height, cfg.width});
    for (double& v : truth.values()) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    const bool training = c % 2 == 1;  // alternate dropout off / fixed dropout mask
    const std::uint64_t dropout_seed = rng.next_u64();
    auto loss_at = [&](const ModelParams<double>& p) {
      Rng drop(dropout_seed);
      return dice_loss(truth, forward(graph, p, x, training, drop, false).y).value;
    };
    Rng drop(dropout_seed);
    auto fwd = forward(graph, params, x, training, drop);
    const auto lv = dice_loss(truth, fwd.y);
    const ModelGrads<double> g = backward(graph, params, fwd.tape, lv.d_pred);

    // Directional derivative along a random unit direction in parameter space.
    const auto grads = g.buffers();
    auto buffers = params.buffers();
    std::vector<std::vector<double>> dir;
    double norm2 = 0.0;
    for (const auto& b : buffers) {
      dir.push_back(random_vector(b.size(), rng));
      for (double v : dir.back()) norm2 += v * v;
    }
    double analytic = 0.0;
    for (std::size_t k = 0; k < dir.size(); ++k) {
      for (double& v : dir[k]) v /= std::sqrt(norm2);
      for (std::size_t i = 0; i < dir[k].size(); ++i) analytic += grads[k][i] * dir[k][i];
    }
    auto shifted = [&](double t) {
      ModelParams<double> q = params;
      auto qb = q.buffers();
      for (std::size_t k = 0; k < dir.size(); ++k) {
        for (std::size_t i = 0; i < dir[k].size(); ++i) qb[k][i] += t * dir[k][i];
      }
      return loss_at(q);
    };
    const double numeric = (shifted(o.epsilon) - shifted(-o.epsilon)) / (2.0 * o.epsilon);
    r.worst_error = std::max(r.worst_error, std::abs(analytic - numeric) /
                                                std::max({std::abs(analytic), std::abs(numeric), 1e-12}));
  }
  return r;
}

}  // namespace

double gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

bool GradcheckReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

std::string GradcheckReport::format() const {
  std::string out;
  char line[160];
  for (const auto& s : suites) {
    std::snprintf(line, sizeof line, "%-18s cases=%-3zu worst=%.3e tol=%.0e  %s\n", s.name.c_str(),
                  s.cases, s.worst_error, s.tolerance, s.passed ? "PASS" : "FAIL");
    out += line;
  }
  out += passed() ? "all gradient checks passed\n" : "GRADIENT CHECK FAILED\n";
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  Rng rng(o.seed);
  GradcheckReport report;
  auto& s = report.suites;
  s.push_back(conv_suite(o, rng, false));
  s.push_back(conv_suite(o, rng, true));
  s.push_back(unary_suite(
      "maxpool2x2", o, rng, [](Rng& g) { return distinct_values(small_shape(g, true), g); },
      [](const TensorD& x) { return maxpool2x2_forward(x).output; },
      [](const TensorD& x, const TensorD& d) {
        return maxpool2x2_backward(maxpool2x2_forward(x).mask, d);
      }));
  const std::uint64_t dropout_seed = rng.next_u64();
  s.push_back(unary_suite(
      "dropout", o, rng, [](Rng& g) { return random_tensor(small_shape(g), g); },
      [&](const TensorD& x) {
        Rng d(dropout_seed);
        return dropout(x, 0.3, d, true).output;
      },
      [&](const TensorD& x, const TensorD& grad) {
        Rng d(dropout_seed);
        return dropout_backward(dropout(x, 0.3, d, true).mask, grad);
      }));
  s.push_back(unary_suite(
      "pad_rows", o, rng, [](Rng& g) { return random_tensor(small_shape(g), g); },
      [](const TensorD& x) { return zeropad_rows(x, 1, 2); },
      [](const TensorD&, const TensorD& d) { return crop_rows(d, 1, 2); }));
  s.push_back(unary_suite(
      "crop_rows", o, rng,
      [](Rng& g) {
        Shape sh = small_shape(g);
        sh.h += 3;
        return random_tensor(sh, g);
      },
      [](const TensorD& x) { return crop_rows(x, 2, 1); },
      [](const TensorD&, const TensorD& d) { return zeropad_rows(d, 2, 1); }));
  s.push_back(unary_suite(
      "relu", o, rng, [](Rng& g) { return away_from_zero(small_shape(g), g); },
      [](const TensorD& x) { return relu_forward(x); },
      [](const TensorD& x, const TensorD& d) { return relu_backward(x, d); }));
  s.push_back(unary_suite(
      "sigmoid", o, rng, [](Rng& g) { return random_tensor(small_shape(g), g, -4.0, 4.0); },
      [](const TensorD& x) { return sigmoid_forward(x); },
      [](const TensorD& x, const TensorD& d) { return sigmoid_backward(sigmoid_forward(x), d); }));
  s.push_back(loss_suite("dice_loss", LossKind::dice, o, rng));
  s.push_back(loss_suite("bce_loss", LossKind::bce, o, rng));
  s.push_back(loss_suite("mse_loss", LossKind::mse, o, rng));
  s.push_back(adjoint_suite(o, rng));
  if (o.include_model) s.push_back(model_suite(o, rng));
  for (auto& suite : s) suite.passed = suite.worst_error < suite.tolerance;
  return report;
}

}  // namespace lanedetect
