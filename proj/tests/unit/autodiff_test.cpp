#include "advdiff/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "advdiff/error.hpp"
#include "advdiff/nets.hpp"
#include "test_util.hpp"

namespace advdiff {
namespace {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using testing::central_difference;
using testing::random_tensor;
using testing::relative_error;

TEST(Forward, SquareOfThree) {
  Graph g;
  const Var x = g.input(Tensor::scalar(3.0));
  EXPECT_EQ(ad::square(x).value().item(), 9.0);
}

TEST(Forward, ReluOfNegative) {
  Graph g;
  const Var x = g.input(Tensor::scalar(-2.0));
  EXPECT_EQ(ad::relu(x).value().item(), 0.0);
}

// Independent straight-line evaluation of a ReLU MLP.
std::vector<double> straight_line_mlp(const nets::Mlp& net, std::vector<double> x) {
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    std::vector<double> next(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double acc = layers[l].bias.at(0, j);
      for (std::size_t i = 0; i < w.rows(); ++i) acc += x[i] * w.at(i, j);
      next[j] = (l + 1 < layers.size() && acc < 0.0) ? 0.0 : acc;
    }
    x = std::move(next);
  }
  return x;
}

TEST(Forward, ThreeLayerMlpMatchesStraightLine) {
  const nets::Mlp net = nets::mlp_init({3, 7, 5, 2}, nets::Activation::kRelu, 0);
  const std::vector<double> x{0.3, -1.2, 0.8};
  Graph g;
  const auto bound = net.bind(g);
  const Var out = bound.apply(g.input(Tensor::row(x)));
  const auto expected = straight_line_mlp(net, x);
  ASSERT_EQ(out.value().size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(out.value()[i], expected[i], 1e-14);
    EXPECT_NEAR(net.evaluate(x)[i], expected[i], 1e-14);
  }
}

TEST(Gradient, SquareDerivative) {
  Graph g;
  const Var x = g.parameter(Tensor::scalar(3.0));
  EXPECT_EQ(g.gradient(ad::square(x), x).value().item(), 6.0);
}

TEST(Gradient, ProductDerivative) {
  Graph g;
  const Var w = g.parameter(Tensor::scalar(2.0));
  const Var x = g.input(Tensor::scalar(5.0));
  EXPECT_EQ(g.gradient(w * x, w).value().item(), 5.0);
}

TEST(Gradient, NonScalarOutputThrows) {
  Graph g;
  const Var x = g.parameter(Tensor({1, 2}, 1.0));
  EXPECT_THROW(g.gradient(ad::square(x), x), ShapeError);
}

TEST(Gradient, UnusedLeafGetsZero) {
  Graph g;
  const Var x = g.parameter(Tensor({2, 2}, 1.0));
  const Var y = g.parameter(Tensor::scalar(4.0));
  const Var grad = g.gradient(ad::square(y), x);
  EXPECT_EQ(grad.value(), Tensor({2, 2}, 0.0));
}

TEST(Gradient, ReluSubgradientAtZeroIsZero) {
  Graph g;
  const Var x = g.parameter(Tensor::matrix(1, 3, {-1.0, 0.0, 2.0}));
  const Var grad = g.gradient(ad::sum(ad::relu(x)), x);
  EXPECT_EQ(grad.value().storage(), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Errors, ShapeMismatchThrows) {
  Graph g;
  const Var a = g.input(Tensor({2, 3}, 1.0));
  const Var b = g.input(Tensor({3, 2}, 1.0));
  EXPECT_THROW(a + b, ShapeError);
  EXPECT_THROW(ad::matmul(a, a), ShapeError);
  EXPECT_THROW(ad::add_bias(a, g.input(Tensor({1, 2}, 0.0))), ShapeError);
}

TEST(Errors, NonFiniteIntermediateThrows) {
  Graph g;
  const Var x = g.input(Tensor::scalar(-1.0));
  EXPECT_THROW(ad::log(x), NumericError);
  EXPECT_THROW(g.input(Tensor::scalar(std::nan(""))), NumericError);
}

// One differentiable primitive: builds y from leaves; the test reduces y with
// random weights so every output entry contributes.
struct OpCase {
  std::string name;
  std::vector<ad::Shape> shapes;
  double lo = -2.0;
  double hi = 2.0;
  std::function<Var(std::vector<Var>&)> build;
  double min_abs = 0.0;  // keep inputs away from kinks
};

std::vector<OpCase> primitive_cases() {
  using V = std::vector<Var>;
  return {
      {"add", {{3, 4}, {3, 4}}, -2, 2, [](V& v) { return v[0] + v[1]; }},
      {"sub", {{3, 4}, {3, 4}}, -2, 2, [](V& v) { return v[0] - v[1]; }},
      {"mul", {{3, 4}, {3, 4}}, -2, 2, [](V& v) { return v[0] * v[1]; }},
      {"div", {{3, 4}, {3, 4}}, 0.5, 2, [](V& v) { return v[0] / v[1]; }},
      {"neg", {{3, 4}}, -2, 2, [](V& v) { return -v[0]; }},
      {"scale", {{3, 4}}, -2, 2, [](V& v) { return 1.7 * v[0]; }},
      {"add_scalar", {{3, 4}}, -2, 2, [](V& v) { return v[0] + 0.3; }},
      {"relu", {{3, 4}}, -2, 2, [](V& v) { return ad::relu(v[0]); }, 1e-3},
      {"tanh", {{3, 4}}, -2, 2, [](V& v) { return ad::tanh(v[0]); }},
      {"sigmoid", {{3, 4}}, -3, 3, [](V& v) { return ad::sigmoid(v[0]); }},
      {"exp", {{3, 4}}, -2, 2, [](V& v) { return ad::exp(v[0]); }},
      {"log", {{3, 4}}, 0.2, 3, [](V& v) { return ad::log(v[0]); }},
      {"sqrt", {{3, 4}}, 0.2, 3, [](V& v) { return ad::sqrt(v[0]); }},
      {"square", {{3, 4}}, -2, 2, [](V& v) { return ad::square(v[0]); }},
      {"clamp", {{3, 4}}, -2, 2, [](V& v) { return ad::clamp(v[0], -1.0, 1.0); }},
      {"log_sigmoid", {{3, 4}}, -4, 4, [](V& v) { return ad::log_sigmoid(v[0]); }, 1e-3},
      {"matmul", {{3, 4}, {4, 2}}, -2, 2, [](V& v) { return ad::matmul(v[0], v[1]); }},
      {"transpose", {{3, 4}}, -2, 2, [](V& v) { return ad::transpose(v[0]); }},
      {"add_bias", {{3, 4}, {1, 4}}, -2, 2, [](V& v) { return ad::add_bias(v[0], v[1]); }},
      {"sum_rows", {{3, 4}}, -2, 2, [](V& v) { return ad::sum_rows(v[0]); }},
      {"sum_cols", {{3, 4}}, -2, 2, [](V& v) { return ad::sum_cols(v[0]); }},
      {"repeat_rows", {{1, 4}}, -2, 2, [](V& v) { return ad::repeat_rows(v[0], 3); }},
      {"repeat_cols", {{3, 1}}, -2, 2, [](V& v) { return ad::repeat_cols(v[0], 4); }},
      {"sum", {{3, 4}}, -2, 2, [](V& v) { return ad::sum(v[0]); }},
      {"mean", {{3, 4}}, -2, 2, [](V& v) { return ad::mean(v[0]); }},
      {"fill", {{1, 1}}, -2, 2, [](V& v) { return ad::fill(v[0], {3, 4}); }},
      {"concat", {{3, 2}, {3, 3}}, -2, 2, [](V& v) { return ad::concat(v[0], v[1]); }},
      {"slice", {{3, 5}}, -2, 2, [](V& v) { return ad::slice(v[0], 1, 4); }},
      {"pad_cols", {{3, 2}}, -2, 2, [](V& v) { return ad::pad_cols(v[0], 5, 2); }},
  };
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const OpCase op = primitive_cases()[GetParam()];
  std::mt19937_64 rng(1234 + GetParam());
  for (int instance = 0; instance < 100; ++instance) {
    std::vector<Tensor> inputs;
    for (const auto& shape : op.shapes) {
      Tensor t = random_tensor(shape, rng, op.lo, op.hi);
      for (double& v : t.data()) {
        if (std::abs(v) < op.min_abs) v = v < 0 ? -op.min_abs : op.min_abs;
      }
      inputs.push_back(std::move(t));
    }
    auto evaluate = [&](const std::vector<Tensor>& values) {
      Graph g;
      std::vector<Var> leaves;
      for (const auto& t : values) leaves.push_back(g.parameter(t));
      return op.build(leaves).value();
    };
    const Tensor weights = random_tensor(evaluate(inputs).shape(), rng);

    Graph g;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.parameter(t));
    const Var y = op.build(leaves);
    const Var loss = ad::sum(y * g.constant(weights));
    const auto grads = g.gradient(loss, leaves);

    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto f = [&](const std::vector<double>& flat) {
        std::vector<Tensor> perturbed = inputs;
        perturbed[k] = Tensor(inputs[k].shape(), flat);
        const Tensor out = evaluate(perturbed);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
        return acc;
      };
      const auto numeric = central_difference(f, inputs[k].storage());
      EXPECT_LE(relative_error(grads[k].value().data(), numeric), 1e-4)
          << op.name << " input " << k << " instance " << instance;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, primitive_cases().size()),
                         [](const auto& info) { return primitive_cases()[info.param].name; });

double mlp_loss(const nets::Mlp& net, const Tensor& x, const Tensor& target) {
  const Tensor out = net.evaluate(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += (out[i] - target[i]) * (out[i] - target[i]);
  return acc / static_cast<double>(out.size());
}

TEST(MlpGradient, MatchesCentralDifferencesOnRandomNetworks) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> width(2, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = width(rng), out = width(rng);
    nets::Mlp net = nets::mlp_init({in, width(rng), width(rng), out},
                                   trial % 2 ? nets::Activation::kTanh : nets::Activation::kRelu,
                                   rng());
    // Random biases keep pre-activations off the ReLU kink at exactly zero.
    net.assign(random_tensor({net.parameter_count()}, rng).storage());
    const Tensor x = random_tensor({4, in}, rng);
    const Tensor target = random_tensor({4, out}, rng);

    Graph g;
    const auto bound = net.bind(g);
    const Var pred = bound.apply(g.input(x));
    const Var loss = ad::mean(ad::square(pred - g.constant(target)));
    const auto grads = g.gradient(loss, bound.params());
    std::vector<double> analytic;
    for (const Var& v : grads) analytic.insert(analytic.end(), v.value().data().begin(), v.value().data().end());

    auto f = [&](const std::vector<double>& flat) {
      nets::Mlp copy = net;
      copy.assign(flat);
      return mlp_loss(copy, x, target);
    };
    const auto numeric = central_difference(f, net.flatten());
    EXPECT_LE(relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(GradNormSq, LinearFunction) {
  Graph g;
  const Var w = g.parameter(Tensor::matrix(2, 1, {1.0, 2.0}));
  const Var x = g.input(Tensor::matrix(1, 2, {0.7, -0.4}));
  const Var gn = g.grad_norm_sq(ad::sum(ad::matmul(x, w)), x);
  EXPECT_DOUBLE_EQ(gn.value().item(), 5.0);
  const Var dw = g.gradient(gn, w);
  EXPECT_DOUBLE_EQ(dw.value()[0], 2.0);
  EXPECT_DOUBLE_EQ(dw.value()[1], 4.0);
}

TEST(GradNormSq, ConstantFunction) {
  Graph g;
  const Var w = g.parameter(Tensor::matrix(1, 2, {1.0, 2.0}));
  const Var x = g.input(Tensor::matrix(1, 2, {0.7, -0.4}));
  const Var gn = g.grad_norm_sq(ad::sum(w), x);
  EXPECT_EQ(gn.value().item(), 0.0);
  EXPECT_EQ(g.gradient(gn, w).value(), Tensor({1, 2}, 0.0));
}

double penalty_value(const nets::Discriminator& disc, const Tensor& x) {
  Graph g;
  const auto bound = disc.net().bind(g);
  const Var in = g.input(x);
  return g.grad_norm_sq(ad::sum(disc.score(bound, in)), in).value().item();
}

TEST(GradNormSq, ParameterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const nets::Discriminator disc(
        nets::mlp_init({3, 8, 6, 1}, nets::Activation::kTanh, rng()));
    const Tensor x = random_tensor({5, 3}, rng);
    Graph g;
    const auto bound = disc.net().bind(g);
    const Var in = g.input(x);
    const Var gn = g.grad_norm_sq(ad::sum(disc.score(bound, in)), in);
    const auto grads = g.gradient(gn, bound.params());
    std::vector<double> analytic;
    for (const Var& v : grads) analytic.insert(analytic.end(), v.value().data().begin(), v.value().data().end());

    auto f = [&](const std::vector<double>& flat) {
      nets::Discriminator copy = disc;
      copy.net().assign(flat);
      return penalty_value(copy, x);
    };
    const auto numeric = central_difference(f, disc.net().flatten());
    EXPECT_LE(relative_error(analytic, numeric), 1e-3) << "trial " << trial;
  }
}

TEST(GradNormSq, ThroughReluNetwork) {
  std::mt19937_64 rng(5);
  const nets::Discriminator disc(nets::mlp_init({2, 16, 16, 1}, nets::Activation::kRelu, 3));
  const Tensor x = random_tensor({6, 2}, rng);
  Graph g;
  const auto bound = disc.net().bind(g);
  const Var in = g.input(x);
  const Var gn = g.grad_norm_sq(ad::sum(disc.score(bound, in)), in);
  const auto grads = g.gradient(gn, bound.params());
  std::vector<double> analytic;
  for (const Var& v : grads) analytic.insert(analytic.end(), v.value().data().begin(), v.value().data().end());
  auto f = [&](const std::vector<double>& flat) {
    nets::Discriminator copy = disc;
    copy.net().assign(flat);
    return penalty_value(copy, x);
  };
  EXPECT_LE(relative_error(analytic, central_difference(f, disc.net().flatten())), 1e-3);
}

TEST(Properties, ForwardIsBitIdentical) {
  std::mt19937_64 rng(3);
  const nets::Mlp net = nets::mlp_init({4, 9, 9, 2}, nets::Activation::kTanh, 21);
  const Tensor x = random_tensor({8, 4}, rng);
  auto run = [&] {
    Graph g;
    return net.bind(g).apply(g.input(x)).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Properties, ReplayAfterRebind) {
  Graph g;
  const Var x = g.input(Tensor::scalar(2.0));
  const Var y = ad::exp(x) * x;
  const double first = y.value().item();
  g.set_leaf(x, Tensor::scalar(3.0));
  g.forward();
  EXPECT_DOUBLE_EQ(y.value().item(), std::exp(3.0) * 3.0);
  g.forward({{x.id(), Tensor::scalar(2.0)}});
  EXPECT_EQ(y.value().item(), first);
}

TEST(Properties, GradientIsLinear) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor xv = random_tensor({2, 3}, rng);
    const double a = 1.3, b = -0.6;
    Graph g;
    const Var x = g.parameter(xv);
    const Var f = ad::sum(ad::tanh(x) * x);
    const Var h = ad::sum(ad::exp(ad::square(x) * 0.1));
    const Var combined = g.gradient(a * f + b * h, x);
    const Var gf = g.gradient(f, x);
    const Var gh = g.gradient(h, x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      EXPECT_NEAR(combined.value()[i], a * gf.value()[i] + b * gh.value()[i], 1e-12);
    }
  }
}

}  // namespace
}  // namespace advdiff
