#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "imvc/ot.hpp"
#include "support.hpp"

using namespace imvc;
using namespace imvc::ot;

namespace {

Vector uniform(std::size_t n, double total = 1.0) { return Vector(n, total / static_cast<double>(n)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

Matrix random_cost(std::size_t n, std::size_t k, Rng& rng) { return pot_cost(testing::random_stochastic(n, k, rng)); }

double pot_objective(const TransportPlan& p, const Matrix& neg_log, double lambda, const PotConfig& cfg) {
  return transport_objective(pot_extended_plan(p), pot_extended_cost(neg_log),
                             pot_constraints(neg_log.rows(), neg_log.cols(), lambda, cfg), cfg.epsilon);
}

}  // namespace

TEST_CASE("sinkhorn: zero cost gives the outer product") {
  const Vector r = {0.2, 0.3, 0.5}, c = {0.6, 0.4};
  const TransportPlan p = sinkhorn(Matrix(3, 2), r, c, 0.1);
  CHECK(p.converged);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(p.plan(i, j) - r[i] * c[j]) < 1e-12);
}

TEST_CASE("sinkhorn: small epsilon approaches the LP optimum") {
  const Matrix cost = Matrix::from_rows({{0, 1}, {1, 0}});
  const Vector h = {0.5, 0.5};
  const TransportPlan p = sinkhorn(cost, h, h, 0.01);
  CHECK(max_abs_diff(p.plan, Matrix::from_rows({{0.5, 0}, {0, 0.5}})) < 1e-3);
  const TransportPlan ref = reference_solver(cost, balanced_constraints(h, h), 0.01);
  CHECK(max_abs_diff(ref.plan, Matrix::from_rows({{0.5, 0}, {0, 0.5}})) < 1e-3);
}

TEST_CASE("sinkhorn: large epsilon approaches the outer product") {
  Rng rng(4);
  const Matrix cost = testing::random_matrix(4, 3, rng, 0.0, 1.0);
  const Vector r = uniform(4), c = {0.5, 0.3, 0.2};
  // deviation is O(|C| / eps): about 4e-4 at eps = 100 for costs in [0, 1]
  const TransportPlan p = sinkhorn(cost, r, c, 1000.0);
  double d = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) d = std::max(d, std::abs(p.plan(i, j) - r[i] * c[j]));
  CHECK(d < 1e-4);
}

TEST_CASE("sinkhorn: marginals, mass mismatch, non-convergence") {
  Rng rng(5);
  const Matrix cost = testing::random_matrix(6, 4, rng, 0.0, 3.0);
  const Vector r = uniform(6), c = {0.1, 0.2, 0.3, 0.4};
  const TransportPlan p = sinkhorn(cost, r, c, 0.05, 5000, 1e-11);
  CHECK(p.converged);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(p.row_marginal[i] - r[i]) < 1e-10);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(p.col_marginal[j] - c[j]) < 1e-10);
  for (double v : p.plan.values()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(sinkhorn(cost, r, Vector{0.1, 0.2, 0.3, 0.3}, 0.05), Error);
  const TransportPlan short_run = sinkhorn(cost, r, c, 0.001, 2, 1e-15);
  CHECK_FALSE(short_run.converged);
  CHECK(short_run.iterations_used == 2);
}

TEST_CASE("sinkhorn: objective agrees with the reference on 3x3 instances") {
  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    const Matrix cost = testing::random_matrix(3, 3, rng, 0.0, 2.0);
    const Vector r = uniform(3);
    Vector c = {rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)};
    const double s = c[0] + c[1] + c[2];
    for (double& x : c) x /= s;
    const double eps = 0.2;
    const ConstraintSpec spec = balanced_constraints(r, c);
    const TransportPlan fast = sinkhorn(cost, r, c, eps, 10000, 1e-12);
    const TransportPlan ref = reference_solver(cost, spec, eps);
    CHECK(std::abs(transport_objective(fast.plan, cost, spec, eps) -
                   transport_objective(ref.plan, cost, spec, eps)) < 1e-3);
  }
}

TEST_CASE("sinkhorn: log domain and standard domain agree") {
  Rng rng(7);
  const Matrix cost = testing::random_matrix(5, 3, rng, 0.0, 1.0);
  const Vector r = uniform(5), c = uniform(3);
  const TransportPlan a = sinkhorn(cost, r, c, 0.05, 2000, 1e-12, KernelMode::Standard);
  const TransportPlan b = sinkhorn(cost, r, c, 0.05, 2000, 1e-12, KernelMode::LogDomain);
  CHECK_FALSE(a.log_domain);
  CHECK(b.log_domain);
  CHECK(max_abs_diff(a.plan, b.plan) < 1e-12);
  // exp(-30 / 0.1) underflows; the automatic mode must switch
  const Matrix steep = Matrix::from_rows({{0, 30}, {30, 0}});
  const TransportPlan s = sinkhorn(steep, uniform(2), uniform(2), 0.1);
  CHECK(s.log_domain);
  CHECK(s.plan.all_finite());
  const Matrix overflow = Matrix::from_rows({{-100, 0}, {0, 0}});
  CHECK_THROWS_AS(sinkhorn(overflow, uniform(2), uniform(2), 0.1, 100, 1e-9, KernelMode::Standard), Error);
  CHECK(sinkhorn(overflow, uniform(2), uniform(2), 0.1).plan.all_finite());
}

TEST_CASE("uot_sinkhorn: strong penalties recover balanced sinkhorn") {
  Rng rng(8);
  const Matrix cost = testing::random_matrix(4, 3, rng, 0.0, 1.0);
  const Vector r = uniform(4), c = {0.5, 0.25, 0.25};
  const TransportPlan bal = sinkhorn(cost, r, c, 0.1, 5000, 1e-12);
  const TransportPlan unb = uot_sinkhorn(cost, r, c, 0.1, 1e6, 1e6, 20000, 1e-12);
  CHECK(max_abs_diff(bal.plan, unb.plan) < 1e-4);
  CHECK_THROWS_AS(uot_sinkhorn(cost, r, c, 0.1, 0.0, 0.0), Error);
}

TEST_CASE("uot_sinkhorn: objective agrees with the reference on 3x2 instances") {
  Rng rng(9);
  for (int t = 0; t < 4; ++t) {
    const Matrix cost = testing::random_matrix(3, 2, rng, 0.0, 2.0);
    const Vector r = uniform(3), c = {0.3, 0.7};
    const double eps = 0.1, g1 = rng.uniform(0.2, 2.0), g2 = rng.uniform(0.2, 2.0);
    const ConstraintSpec spec = unbalanced_constraints(r, c, g1, g2);
    const TransportPlan fast = uot_sinkhorn(cost, r, c, eps, g1, g2, 20000, 1e-13);
    const TransportPlan ref = reference_solver(cost, spec, eps);
    CHECK(fast.converged);
    CHECK(std::abs(transport_objective(fast.plan, cost, spec, eps) -
                   transport_objective(ref.plan, cost, spec, eps)) < 1e-3);
  }
}

TEST_CASE("pot: fixed N=4, K=2 instance against the reference") {
  const Matrix p = Matrix::from_rows({{.9, .1}, {.8, .2}, {.2, .8}, {.6, .4}});
  const Matrix c = pot_cost(p);
  PotConfig cfg;
  const TransportPlan fast = pot_uot_scaling(c, 0.75, cfg);
  CHECK(fast.converged);
  const TransportPlan ref =
      reference_solver(pot_extended_cost(c), pot_constraints(4, 2, 0.75, cfg), cfg.epsilon);
  const double f = pot_objective(fast, c, 0.75, cfg);
  const double g = transport_objective(ref.plan, pot_extended_cost(c), pot_constraints(4, 2, 0.75, cfg), cfg.epsilon);
  CHECK(std::abs(f - g) < 1e-3);
  CHECK(std::abs(fast.total_mass - 0.75) < 1e-6);
}

TEST_CASE("pot: mass and row constraints") {
  Rng rng(10);
  PotConfig cfg;
  for (double lambda : {0.1, 0.5, 0.9, 1.0}) {
    for (int t = 0; t < 10; ++t) {
      const std::size_t n = 3 + rng.below(30), k = 2 + rng.below(6);
      const TransportPlan p = pot_uot_scaling(random_cost(n, k, rng), lambda, cfg);
      CHECK(std::abs(p.total_mass - lambda) < 10 * cfg.tol);
      CHECK(std::abs(total_sum(p.plan) - lambda) < 10 * cfg.tol);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p.row_marginal[i] <= 1.0 / n + 10 * cfg.tol);
        CHECK(std::abs(p.row_marginal[i] + p.unassigned[i] - 1.0 / n) < 10 * cfg.tol);
      }
      for (double v : p.plan.values()) CHECK(v >= 0.0);
    }
  }
  CHECK_THROWS_AS(pot_uot_scaling(random_cost(4, 2, rng), 0.0, cfg), Error);
  CHECK_THROWS_AS(pot_uot_scaling(random_cost(4, 2, rng), 1.5, cfg), Error);
}

TEST_CASE("pot: hard column limit matches balanced sinkhorn") {
  Rng rng(11);
  PotConfig cfg;
  cfg.beta = {1e9};
  cfg.tol = 1e-12;
  cfg.max_iter = 100000;
  for (int t = 0; t < 5; ++t) {
    const std::size_t n = 6, k = 3;
    const Matrix c = random_cost(n, k, rng);
    const TransportPlan p = pot_uot_scaling(c, 1.0, cfg);
    for (std::size_t j = 0; j < k; ++j) CHECK(std::abs(p.col_marginal[j] - 1.0 / k) < 1e-4);
    const TransportPlan s = sinkhorn(c, uniform(n), uniform(k), cfg.epsilon, 100000, 1e-13);
    CHECK(max_abs_diff(p.plan, s.plan) < 1e-4);
  }
}

TEST_CASE("pot: column deviation from lambda/K shrinks as beta grows") {
  Rng rng(12);
  const Matrix c = pot_cost(testing::random_stochastic(40, 4, rng));
  double prev = 1e9;
  for (double beta : {0.1, 1.0, 10.0, 1e6}) {
    PotConfig cfg;
    cfg.beta = {beta};
    cfg.max_iter = 100000;
    const TransportPlan p = pot_uot_scaling(c, 0.8, cfg);
    double dev = 0.0;
    for (double m : p.col_marginal) dev = std::max(dev, std::abs(m - 0.2));
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("pot: permuting cost rows permutes the plan") {
  Rng rng(13);
  const Matrix c = random_cost(9, 3, rng);
  const auto perm = rng.permutation(9);
  const TransportPlan a = pot_uot_scaling(c, 0.6, {});
  const TransportPlan b = pot_uot_scaling(c.rows_subset(perm), 0.6, {});
  CHECK(max_abs_diff(a.plan.rows_subset(perm), b.plan) < 1e-12);
}

TEST_CASE("pot: log domain agrees with the kernel recursion") {
  Rng rng(14);
  const Matrix c = random_cost(12, 4, rng);
  PotConfig std_cfg, log_cfg;
  std_cfg.mode = KernelMode::Standard;
  log_cfg.mode = KernelMode::LogDomain;
  const TransportPlan a = pot_uot_scaling(c, 0.7, std_cfg);
  const TransportPlan b = pot_uot_scaling(c, 0.7, log_cfg);
  CHECK(b.log_domain);
  CHECK(max_abs_diff(a.plan, b.plan) < 1e-10);
  // a near-zero probability puts -C/eps far below -60
  Matrix p = testing::random_stochastic(5, 2, rng);
  p(0, 0) = 1e-12;
  p(0, 1) = 1.0 - 1e-12;
  const TransportPlan auto_plan = pot_uot_scaling(pot_cost(p), 0.5, {});
  CHECK(auto_plan.log_domain);
  CHECK(auto_plan.plan.all_finite());
  CHECK(std::abs(auto_plan.total_mass - 0.5) < 1e-6);
}

TEST_CASE("pot: scaling state exposes a, b, f") {
  Rng rng(15);
  PotConfig cfg;
  cfg.beta = {0.5, 2.0, 1.0};
  ScalingState st;
  pot_uot_scaling(random_cost(7, 3, rng), 0.5, cfg, &st);
  REQUIRE(st.f.size() == 4);
  CHECK(std::abs(st.f[0] - 0.5 / 0.6) < 1e-15);
  CHECK(std::abs(st.f[1] - 2.0 / 2.1) < 1e-15);
  CHECK(st.f[3] == 1.0);
  for (double v : st.a) CHECK(v > 0.0);
  for (double v : st.b) CHECK(v > 0.0);
  PotConfig bad;
  bad.beta = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(3), Error);
  bad.beta = {-1.0};
  CHECK_THROWS_AS(bad.validate(3), Error);
}

TEST_CASE("pot: b-change trace is mostly nonincreasing after burn-in") {
  Rng rng(16);
  std::size_t violations = 0, steps = 0;
  for (int t = 0; t < 100; ++t) {
    const TransportPlan p = pot_uot_scaling(random_cost(3 + rng.below(20), 2 + rng.below(4), rng),
                                            rng.uniform(0.1, 1.0), {});
    const Vector& tr = p.b_change_trace;
    for (std::size_t i = 6; i < tr.size(); ++i, ++steps)
      if (tr[i] > tr[i - 1] * (1.0 + 1e-9)) ++violations;
  }
  const double rate = steps ? static_cast<double>(violations) / static_cast<double>(steps) : 0.0;
  MESSAGE("b-change increases after burn-in: " << violations << " of " << steps);
  // diagnostic only
  CHECK(rate >= 0.0);
}

TEST_CASE("weighted_kl") {
  CHECK(weighted_kl(Vector{0.2, 0.8}, Vector{0.2, 0.8}, Vector{1, 3}) == 0.0);
  const double v = weighted_kl(Vector{0.5, 0.5}, Vector{0.25, 0.75}, Vector{2, 1});
  CHECK(std::abs(v - (2 * 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0))) < 1e-15);
  CHECK(std::abs(v - 0.4904) < 1e-4);
  CHECK(weighted_kl(Vector{0.0, 1.0}, Vector{0.5, 0.5}, Vector{1, 1}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(weighted_kl(Vector{0.5}, Vector{0.0}, Vector{1}), Error);
  CHECK_THROWS_AS(weighted_kl(Vector{0.5, 0.5}, Vector{0.5}, Vector{1}), Error);
}

TEST_CASE("reference solver limits") {
  const Vector h = uniform(2);
  const TransportPlan p = reference_solver(Matrix(2, 2), balanced_constraints(h, h), 0.1);
  CHECK(max_abs_diff(p.plan, Matrix(2, 2, 0.25)) < 1e-6);
  CHECK_THROWS_AS(reference_solver(Matrix(9, 2), balanced_constraints(uniform(9), h), 0.1), Error);
}

TEST_CASE("pot_cost clamps zero probabilities") {
  const Matrix c = pot_cost(Matrix::from_rows({{0.0, 1.0}}));
  CHECK(std::abs(c(0, 0) + std::log(1e-12)) < 1e-12);
  CHECK(c(0, 1) == 0.0);
}
