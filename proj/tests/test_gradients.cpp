#include "doctest.h"

#include "gradient_fixture.hpp"

using namespace imvc;
using testing::fd_check;
using testing::random_matrix;
using testing::random_stochastic;
using testing::sample_context;
using testing::ModelFixture;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("model gradients of every loss") {
  ModelFixture f;
  for (const auto& l : testing::model_losses(f)) {
    CAPTURE(l.name);
    CHECK(f.check(l.parts, l.loss) < kTol);
  }
}

TEST_CASE("input gradients of each loss on 4 samples, width 8, 3 classes") {
  Rng rng(5);
  const std::size_t n = 4, d = 8, k = 3;
  std::vector<Matrix> hs = {random_matrix(n, d, rng), random_matrix(n, d, rng)};
  Matrix hu = random_matrix(n, d, rng);
  Matrix g = random_matrix(n, n, rng, 0.0, 0.9);
  std::vector<Matrix> pv = {random_stochastic(n, k, rng), random_stochastic(n, k, rng)};
  Matrix p = random_stochastic(n, k, rng);
  const RebalanceContext ctx = sample_context(n, k, rng);

  SUBCASE("feature contrast") {
    std::vector<Matrix> dh;
    Matrix du;
    structure_contrastive_loss(hs, hu, g, 0.5, &dh, &du);
    auto f = [&] { return structure_contrastive_loss(hs, hu, g, 0.5).value; };
    CHECK(fd_check(hs[0], dh[0], f) < kTol);
    CHECK(fd_check(hs[1], dh[1], f) < kTol);
    CHECK(fd_check(hu, du, f) < kTol);
  }
  SUBCASE("class-column contrast") {
    std::vector<Matrix> dpv;
    Matrix dp;
    semantic_alignment_loss(pv, p, 1.0, &dpv, &dp);
    auto f = [&] { return semantic_alignment_loss(pv, p, 1.0).value; };
    CHECK(fd_check(pv[0], dpv[0], f) < kTol);
    CHECK(fd_check(p, dp, f) < kTol);
  }
  SUBCASE("cross-entropy") {
    Matrix t = ctx.targets;
    Matrix dp;
    self_label_ce(p, t, &dp);
    CHECK(fd_check(p, dp, [&] { return self_label_ce(p, t).value; }) < kTol);
  }
  SUBCASE("rebalanced feature contrast") {
    std::vector<Matrix> dh;
    Matrix du;
    rebalanced_feature_loss(hs, hu, ctx, &dh, &du);
    auto f = [&] { return rebalanced_feature_loss(hs, hu, ctx).value; };
    CHECK(fd_check(hs[1], dh[1], f) < kTol);
    CHECK(fd_check(hu, du, f) < kTol);
  }
  SUBCASE("rebalanced class alignment") {
    std::vector<Matrix> dpv;
    Matrix dp;
    rebalanced_class_loss(pv, p, ctx, &dpv, &dp);
    auto f = [&] { return rebalanced_class_loss(pv, p, ctx).value; };
    CHECK(fd_check(pv[0], dpv[0], f) < kTol);
    CHECK(fd_check(p, dp, f) < kTol);
  }
  SUBCASE("reconstruction") {
    std::vector<Matrix> xs = {random_matrix(n, d, rng)};
    std::vector<Matrix> xh = {random_matrix(n, d, rng)};
    std::vector<Matrix> dx;
    reconstruction_loss(xs, xh, &dx);
    CHECK(fd_check(xh[0], dx[0], [&] { return reconstruction_loss(xs, xh).value; }) < 1e-6);
  }
}

TEST_CASE("quadratic toy loss through one dense layer") {
  Rng rng(3);
  Mlp mlp;
  mlp.layers.push_back({random_matrix(3, 2, rng), random_matrix(1, 2, rng)});
  const Matrix x = random_matrix(5, 3, rng);
  auto loss = [&] {
    const Matrix y = mlp_forward(mlp, x);
    double s = 0.0;
    for (double v : y.values()) s += 0.5 * v * v;
    return s;
  };
  MlpCache cache;
  const Matrix y = mlp_forward(mlp, x, &cache);
  Mlp grad;
  grad.layers.push_back({Matrix(3, 2), Matrix(1, 2)});
  mlp_backward(mlp, cache, y, grad);
  CHECK(fd_check(mlp.layers[0].weight, grad.layers[0].weight, loss, 1e-4) < 1e-6);
  CHECK(fd_check(mlp.layers[0].bias, grad.layers[0].bias, loss, 1e-4) < 1e-6);
}

TEST_CASE("backward rejects a stale cache") {
  ModelFixture f;
  const ForwardCache cache = forward(f.params, f.cfg, f.xs, ForwardParts::Reconstruction);
  ModelParams grads = f.params.zeros_like();
  AdamState adam = AdamState::for_params(f.params);
  adam_step(f.params, grads, adam, 1e-3);
  OutputGrads out;
  CHECK_THROWS_AS(backward(f.params, cache, out, grads), Error);
}
