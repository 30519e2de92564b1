#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "sfw/mlp.hpp"

using namespace sfw;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace fixture;

TEST_CASE("forward examples") {
  const MLPSpec sig = make_spec({3, 1, 1}, Activation::Sigmoid, Loss::MSE, {}, {}, false);
  MLPParams p = MLPParams::zeros(sig);
  p.weights[1](0, 0) = 1.0;
  CHECK(forward(sig, p, MatrixXd::Random(3, 4)).isApproxToConstant(0.5));

  const MLPSpec relu = make_spec({2, 1, 1}, Activation::ReLU, Loss::MSE, {}, {}, false);
  MLPParams r = MLPParams::zeros(relu);
  r.weights[0] << 1, -1;
  r.weights[1] << 1;
  MatrixXd in(2, 1);
  in << 2, 3;
  CHECK(forward(relu, r, in)(0, 0) == 0.0);

  const MLPSpec lin = make_spec({2, 2}, Activation::Sigmoid, Loss::MSE, {}, {}, false);
  MLPParams id = MLPParams::zeros(lin);
  id.weights[0].setIdentity();
  const MatrixXd x = MatrixXd::Random(2, 5);
  CHECK(forward(lin, id, x) == x);
}

TEST_CASE("forward rejects shape mismatch") {
  const MLPSpec s = make_spec({3, 2}, Activation::Sigmoid, Loss::MSE, {}, {}, false);
  CHECK_THROWS_AS(forward(s, MLPParams::zeros(s), MatrixXd::Zero(2, 1)), InputError);
}

TEST_CASE("gradient closed forms") {
  const MLPSpec lin = make_spec({3, 1}, Activation::Sigmoid, Loss::MSE, {}, {}, false);
  MLPParams p = MLPParams::zeros(lin);
  p.weights[0] << 0.5, -1.0, 2.0;
  VectorXd x(3);
  x << 1.0, 2.0, 3.0;
  VectorXd t(1);
  t << 1.0;
  const double yhat = 0.5 - 2.0 + 6.0;
  const auto [g, loss] = per_sample_gradient(lin, p, x, t);
  CHECK(loss == doctest::Approx((yhat - 1.0) * (yhat - 1.0)));
  for (Index j = 0; j < 3; ++j) CHECK(g.weights[0](0, j) == doctest::Approx(2.0 * (yhat - 1.0) * x[j]));

  VectorXd exact(1);
  exact << yhat;
  const auto [z, zl] = per_sample_gradient(lin, p, x, exact);
  CHECK(zl == 0.0);
  CHECK(z.weights[0].isZero(0));
}

TEST_CASE("gradients match finite differences") {
  Rng rng(5);
  const std::vector<std::vector<Index>> shapes{{3, 2}, {4, 3, 2}, {10, 10, 5, 2}};
  for (const auto& sizes : shapes) {
    for (Loss loss : {Loss::MSE, Loss::SoftmaxCrossEntropy}) {
      for (bool bias : {false, true}) {
        std::vector<Index> fw{0};
        std::vector<double> deltas{3.0};
        const MLPSpec spec = make_spec(sizes, Activation::Sigmoid, loss, fw, deltas, bias);
        const NetProblem prob(spec, net_data(spec, 6, rng));
        const auto [x, y] = prob.layout().pack(random_params(spec, rng, 0.7));
        CHECK(finite_difference_check(prob, x, y, 1e-5) < 1e-5);
      }
    }
  }
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  Rng rng(6);
  const MLPSpec spec = make_spec({4, 3, 2}, Activation::Sigmoid, Loss::MSE, {0}, {2.0}, true);
  const auto data = net_data(spec, 5, rng);
  const NetProblem prob(spec, data);
  const MLPParams params = random_params(spec, rng);
  const auto [x, y] = prob.layout().pack(params);
  const std::vector<Index> idx{3, 0, 3, 1};
  const GradientEstimate e = prob.gradient_at(x, y, idx);
  MLPParams acc = MLPParams::zeros(spec);
  for (Index i : idx) acc += per_sample_gradient(spec, params, data->features.col(i), data->targets.col(i)).first;
  const auto [ax, ay] = prob.layout().pack(acc);
  for (std::size_t b = 0; b < ax.size(); ++b) CHECK(e.grad.x_blocks[b] == ax[b] / 4.0);
  CHECK(e.grad.y == ay / 4.0);
}

TEST_CASE("relu derivative is zero at the kink") {
  const MLPSpec spec = make_spec({1, 1, 1}, Activation::ReLU, Loss::MSE, {}, {}, false);
  MLPParams p = MLPParams::zeros(spec);
  p.weights[0] << 1.0;
  p.weights[1] << 1.0;
  const auto [g, loss] = per_sample_gradient(spec, p, VectorXd::Zero(1), VectorXd::Ones(1));
  CHECK(loss == 1.0);
  CHECK(g.weights[0](0, 0) == 0.0);
}

TEST_CASE("pack and unpack are inverse") {
  Rng rng(7);
  const MLPSpec spec = make_spec({5, 4, 3, 2}, Activation::Sigmoid, Loss::MSE, {2, 0}, {1.0, 2.0}, true);
  const ParamLayout layout(spec);
  CHECK(layout.blocks().size() == 4 + 2);
  CHECK(layout.blocks().front().layer == 0);
  CHECK(layout.y_dim() == 3 * 4 + 4 + 3 + 2);
  for (int t = 0; t < 100; ++t) {
    const MLPParams p = random_params(spec, rng);
    const auto [x, y] = layout.pack(p);
    const MLPParams q = layout.unpack(x, y);
    for (std::size_t i = 0; i < p.weights.size(); ++i) REQUIRE(q.weights[i] == p.weights[i]);
    for (std::size_t i = 0; i < p.biases.size(); ++i) REQUIRE(q.biases[i] == p.biases[i]);
  }
  const auto balls = layout.balls();
  CHECK(balls[0].radius() == 2.0);
  CHECK(balls.back().radius() == 1.0);
}

TEST_CASE("nnz metric examples") {
  MLPParams p;
  MatrixXd w(2, 2);
  w << 0.5, 0.0005, 0.002, 0.0;
  p.weights.push_back(w);
  const std::vector<Index> layers{0};
  CHECK(nnz_metrics(p, layers)[0] == 50.0);
  p.weights[0].setZero();
  CHECK(nnz_metrics(p, layers)[0] == 0.0);
  p.weights[0].setOnes();
  CHECK(nnz_metrics(p, layers)[0] == 100.0);
}

TEST_CASE("hard threshold examples") {
  MLPParams p;
  MatrixXd w(1, 4);
  w << 0.5, -0.3, 0.1, 0.05;
  p.weights.push_back(w);
  p.weights.push_back(MatrixXd::Constant(1, 1, 1e-6));
  const std::vector<Index> layers{0};
  MatrixXd expect(1, 4);
  expect << 0.5, -0.3, 0, 0;
  const MLPParams half = hard_threshold(p, layers, 50.0);
  CHECK(half.weights[0] == expect);
  CHECK(half.weights[1] == p.weights[1]);
  CHECK(hard_threshold(p, layers, 100.0).weights[0] == w);
  CHECK_THROWS_AS(hard_threshold(p, layers, 0.0), InputError);
  CHECK_THROWS_AS(hard_threshold(p, layers, 101.0), InputError);

  MLPParams tie;
  MatrixXd t(2, 2);
  t << 0.2, -0.2, 0.2, 0.1;
  tie.weights.push_back(t);
  MatrixXd kept(2, 2);
  kept << 0.2, -0.2, 0, 0;
  CHECK(hard_threshold(tie, layers, 50.0).weights[0] == kept);
}

TEST_CASE("thresholding everything keeps the nnz metric") {
  Rng rng(8);
  const MLPSpec spec = make_spec({6, 5, 4, 1}, Activation::Sigmoid, Loss::MSE, {0, 1}, {1.0, 1.0}, false);
  const std::vector<Index> layers{0, 1};
  for (int t = 0; t < 20; ++t) {
    MLPParams p = random_params(spec, rng, 0.01);
    CHECK(nnz_metrics(hard_threshold(p, layers, 100.0), layers) == nnz_metrics(p, layers));
  }
}

TEST_CASE("init_params invariants") {
  const MLPSpec spec = make_spec({8, 6, 5, 1}, Activation::Sigmoid, Loss::MSE, {0, 1}, {4.0, 10.0}, true);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MLPParams p = init_params(spec, seed);
    for (std::size_t i = 0; i < spec.fw_layers.size(); ++i) {
      const MatrixXd& w = p.weights[static_cast<std::size_t>(spec.fw_layers[i])];
      for (Index r = 0; r < w.rows(); ++r) {
        REQUIRE(w.row(r).lpNorm<1>() == doctest::Approx(spec.delta_per_layer[i] / 2.0));
        REQUIRE(count_nonzeros(w.row(r).transpose(), 0.0) >= 1);
      }
    }
    // Every hidden node feeding the second fw layer has an outgoing edge.
    for (Index c = 0; c < p.weights[1].cols(); ++c) REQUIRE_FALSE(p.weights[1].col(c).isZero(0));
    const double bound = 1.0 / std::sqrt(5.0);
    REQUIRE(p.weights[2].cwiseAbs().maxCoeff() <= bound);
  }
  const MLPParams a = init_params(spec, 3), b = init_params(spec, 3);
  CHECK(a.weights[0] == b.weights[0]);
  CHECK(a.biases[2] == b.biases[2]);
}

TEST_CASE("synthetic teacher has m signed edges per node") {
  SynthSpec s;
  s.layer_sizes = {50, 50, 50, 1};
  s.m = 5;
  s.n_train = 200;
  s.n_val = 10;
  s.n_test = 10;
  s.seed = 4;
  const SynthData d = generate_synthetic(s);
  for (Index t = 0; t < 2; ++t) {
    const MatrixXd& w = d.true_params.weights[static_cast<std::size_t>(t)];
    for (Index r = 0; r < w.rows(); ++r) {
      REQUIRE(count_nonzeros(w.row(r).transpose(), 0.0) == 5);
      for (Index c = 0; c < w.cols(); ++c) REQUIRE((w(r, c) == 0.0 || std::abs(w(r, c)) == 1.0));
    }
  }
  CHECK(d.true_params.weights[2].cwiseAbs().isOnes());
  CHECK(d.train.size() == 200);
  CHECK(d.val.size() == 10);
  CHECK(d.test.size() == 10);

  const SynthData e = generate_synthetic(s);
  CHECK(e.train.features == d.train.features);
  CHECK(e.test.targets == d.test.targets);

  s.m = 51;
  CHECK_THROWS_AS(generate_synthetic(s), InputError);
}

TEST_CASE("synthetic noise follows the requested snr") {
  SynthSpec s;
  s.layer_sizes = {20, 20, 20, 1};
  s.m = 5;
  s.snr = 1.0;
  s.n_train = 40000;
  s.n_val = 0;
  s.n_test = 0;
  s.seed = 9;
  const SynthData d = generate_synthetic(s);
  const MatrixXd f = forward(d.true_spec, d.true_params, d.train.features);
  const MatrixXd eps = d.train.targets - f;
  const double var_f = (f.array() - f.mean()).square().mean();
  const double var_e = (eps.array() - eps.mean()).square().mean();
  CHECK(var_f / var_e == doctest::Approx(1.0).epsilon(0.05));
}
