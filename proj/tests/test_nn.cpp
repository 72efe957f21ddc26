#include <doctest.h>

#include <cmath>
#include <random>

#include "rowlab/nn.hpp"

using namespace rowlab::nn;

namespace {

double act(Activation a, double v) {
  switch (a) {
    case Activation::kElu:
      return v > 0 ? v : std::exp(v) - 1.0;
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kIdentity:
      return v;
  }
  return v;
}

// Straight loops over the flat parameter layout: per layer, column-major W then b.
std::vector<double> naive_forward(const Mlp<double>& net, const std::vector<double>& x) {
  const auto& p = net.parameters();
  std::vector<double> cur = x;
  Eigen::Index off = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.layer_sizes()[l], out = net.layer_sizes()[l + 1];
    std::vector<double> next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double s = p[off + in * out + o];
      for (int i = 0; i < in; ++i) s += p[off + i * out + o] * cur[i];
      next[o] = act(l + 1 == net.layer_count() ? net.output_activation() : net.hidden_activation(), s);
    }
    off += in * out + out;
    cur = next;
  }
  return cur;
}

void randomize(Mlp<double>& net, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  auto& p = net.mutable_parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = n(rng);
}

// Central differences of <g, f(x)> with respect to every parameter.
Eigen::VectorXd numeric_gradient(Mlp<double>& net, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& g, double h = 1e-6) {
  Eigen::VectorXd grad(net.parameter_count());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double keep = net.parameters()[i];
    net.mutable_parameters()[i] = keep + h;
    const double up = (net.forward(x).array() * g.array()).sum();
    net.mutable_parameters()[i] = keep - h;
    const double down = (net.forward(x).array() * g.array()).sum();
    net.mutable_parameters()[i] = keep;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

}  // namespace

TEST_CASE("worked forward examples") {
  Mlp<double> net({2, 2}, Activation::kIdentity);
  net.mutable_weight(0) = Eigen::Matrix2d::Identity();
  CHECK(net.forward_one(Eigen::Vector2d(3, -4)) == Eigen::Vector2d(3, -4));

  Mlp<float> zero({5, 4, 3}, Activation::kElu);
  const Eigen::MatrixXf out = zero.forward(Eigen::MatrixXf::Random(5, 7));
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 7);
  CHECK(out.isZero(0.0f));

  Mlp<double> biased({1, 1}, Activation::kIdentity, Activation::kTanh);
  biased.mutable_bias(0)[0] = 0.5;
  CHECK(biased.forward_one(Eigen::VectorXd::Zero(1))[0] == doctest::Approx(std::tanh(0.5)));

  CHECK_THROWS_AS(Mlp<double>({3}, Activation::kElu), std::invalid_argument);
  CHECK_THROWS_AS(Mlp<double>({3, 0, 1}, Activation::kElu), std::invalid_argument);
  CHECK(parse_activation("tanh") == Activation::kTanh);
  CHECK(to_string(Activation::kElu) == "elu");
  CHECK_THROWS_AS(parse_activation("relu"), std::invalid_argument);
}

TEST_CASE("forward matches a loop-based oracle") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Activation a : {Activation::kElu, Activation::kTanh, Activation::kIdentity}) {
    Mlp<double> net({6, 9, 5, 2}, a, a);
    randomize(net, rng);
    CHECK(net.parameter_count() == 6 * 9 + 9 + 9 * 5 + 5 + 5 * 2 + 2);
    Eigen::MatrixXd x(6, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    const Eigen::MatrixXd y = net.forward(x);
    for (int c = 0; c < 10; ++c) {
      const std::vector<double> col(x.col(c).data(), x.col(c).data() + 6);
      const auto expected = naive_forward(net, col);
      for (int r = 0; r < 2; ++r) CHECK(std::abs(y(r, c) - expected[r]) < 1e-12);
    }
  }
}

TEST_CASE("backward matches finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::vector<std::vector<int>> shapes{{4, 3}, {4, 7, 3}, {3, 6, 5, 2}};
  for (const auto& shape : shapes) {
    for (Activation a : {Activation::kElu, Activation::kTanh, Activation::kIdentity}) {
      Mlp<double> net(shape, a, a == Activation::kIdentity ? Activation::kTanh : Activation::kIdentity);
      randomize(net, rng);
      Eigen::MatrixXd x(shape.front(), 5), g(shape.back(), 5);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
      for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
      Mlp<double>::Cache cache;
      net.forward(x, &cache);
      Eigen::MatrixXd input_grad;
      const Eigen::VectorXd analytic = net.backward(cache, g, &input_grad);
      const Eigen::VectorXd numeric = numeric_gradient(net, x, g);
      CHECK((analytic - numeric).norm() <= 1e-6 * std::max(1.0, numeric.norm()));

      // Input gradient, one coordinate at a time.
      REQUIRE(input_grad.rows() == x.rows());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::MatrixXd xp = x, xm = x;
        xp.data()[i] += 1e-6;
        xm.data()[i] -= 1e-6;
        const double fd = ((net.forward(xp) - net.forward(xm)).array() * g.array()).sum() / 2e-6;
        CHECK(std::abs(input_grad.data()[i] - fd) < 1e-6);
      }
    }
  }
}

TEST_CASE("gradient check on the full-size observation network") {
  std::mt19937_64 rng(3);
  Mlp<double> net({2700, 16, 1}, Activation::kElu);
  net.init_orthogonal(rng, std::sqrt(2.0), 1.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2700, 2);
  std::bernoulli_distribution occupied(0.05);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = occupied(rng) ? 0.25 : 0.0;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, 2);
  Mlp<double>::Cache cache;
  net.forward(x, &cache);
  const Eigen::VectorXd analytic = net.backward(cache, g);
  // Spot-check a sample of parameters, including the output layer.
  std::uniform_int_distribution<Eigen::Index> pick(0, net.parameter_count() - 1);
  for (int k = 0; k < 300; ++k) {
    const Eigen::Index i = k < 17 ? net.parameter_count() - 1 - k : pick(rng);
    const double keep = net.parameters()[i];
    net.mutable_parameters()[i] = keep + 1e-6;
    const double up = net.forward(x).sum();
    net.mutable_parameters()[i] = keep - 1e-6;
    const double down = net.forward(x).sum();
    net.mutable_parameters()[i] = keep;
    CHECK(std::abs(analytic[i] - (up - down) / 2e-6) < 1e-6);
  }
}

TEST_CASE("backward edge cases") {
  Mlp<float> net({3, 4, 2}, Activation::kTanh);
  std::mt19937_64 rng(4);
  net.init_orthogonal(rng, 1.0, 1.0);
  Mlp<float>::Cache cache;
  net.forward(Eigen::MatrixXf::Random(3, 6), &cache);
  CHECK(net.backward(cache, Eigen::MatrixXf::Zero(2, 6)).isZero(0.0f));
  CHECK_THROWS_AS(net.backward(cache, Eigen::MatrixXf::Zero(3, 6)), std::invalid_argument);
  net.mutable_parameters()[0] += 1.0f;
  CHECK_THROWS_AS(net.backward(cache, Eigen::MatrixXf::Zero(2, 6)), std::logic_error);
}

TEST_CASE("orthogonal initialisation") {
  std::mt19937_64 rng(5);
  Mlp<double> net({8, 8, 3}, Activation::kElu);
  net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  const Eigen::MatrixXd w0 = net.weight(0);
  CHECK((w0.transpose() * w0 - 2.0 * Eigen::MatrixXd::Identity(8, 8)).norm() < 1e-10);
  const Eigen::MatrixXd w1 = net.weight(1);
  CHECK((w1 * w1.transpose() - 1e-4 * Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK(net.bias(0).isZero(0.0));
  CHECK(net.bias(1).isZero(0.0));
}

TEST_CASE("adam worked examples") {
  AdamState<double> state(2, 0.1);
  Eigen::VectorXd p(2);
  p << 1.0, -1.0;
  Eigen::VectorXd g(2);
  g << 3.0, -0.5;
  adam_step(state, p, g);
  // The first bias-corrected step moves each coordinate by lr * sign(g).
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-7));
  CHECK(state.step == 1);

  g << std::nan(""), 1.0;
  const Eigen::VectorXd before = p;
  CHECK_THROWS_AS(adam_step(state, p, g), NonFiniteError);
  CHECK(p == before);
  CHECK(state.step == 1);
  CHECK_THROWS_AS(adam_step(state, p, Eigen::VectorXd::Zero(3)), std::invalid_argument);

  AdamState<float> fs(1, 0.01);
  Eigen::VectorXf fp = Eigen::VectorXf::Constant(1, 2.0f);
  adam_step(fs, fp, Eigen::VectorXf::Zero(1));
  CHECK(fp[0] == 2.0f);
}

TEST_CASE("adam minimises a quadratic") {
  AdamState<double> state(1, 0.05);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const Eigen::VectorXd g = 2.0 * x;
    adam_step(state, x, g);
  }
  CHECK(std::abs(x[0]) < 1e-2);
}

TEST_CASE("a small network fits a smooth function") {
  std::mt19937_64 rng(6);
  Mlp<float> net({1, 16, 1}, Activation::kTanh);
  net.init_orthogonal(rng, 1.0, 1.0);
  AdamState<float> state(net.parameter_count(), 0.01);
  Eigen::MatrixXf x(1, 64);
  for (int i = 0; i < 64; ++i) x(0, i) = -1.0f + 2.0f * i / 63.0f;
  const Eigen::MatrixXf y = x.array().square().matrix();
  float loss = 0.0f, first = -1.0f;
  for (int it = 0; it < 3000; ++it) {
    Mlp<float>::Cache cache;
    const Eigen::MatrixXf out = net.forward(x, &cache);
    const Eigen::MatrixXf diff = out - y;
    loss = diff.squaredNorm() / 64.0f;
    if (first < 0) first = loss;
    const Eigen::VectorXf g = net.backward(cache, 2.0f * diff / 64.0f);
    adam_step(state, net.mutable_parameters(), g);
  }
  CHECK(loss < 1e-3f);
  CHECK(loss < 0.05f * first);
}
