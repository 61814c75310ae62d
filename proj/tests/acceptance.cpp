// Acceptance suite: one PASS/FAIL line per criterion; exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_fixture.hpp"
#include "imvc/metrics.hpp"
#include "imvc/ot.hpp"
#include "imvc/pipeline.hpp"
#include "imvc/self_labeling.hpp"
#include "oracles.hpp"

using namespace imvc;
using namespace imvc::ot;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3f", v[i]);
  return s + "]";
}

Matrix random_cost(std::size_t n, std::size_t k, Rng& rng) { return pot_cost(testing::random_stochastic(n, k, rng)); }

Outcome solver_vs_reference() {
  Rng rng(101);
  PotConfig cfg;
  double worst = 0.0, pot_time = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(5), k = 2 + rng.below(2);
    const double lambda = rng.uniform(0.1, 1.0);
    const Matrix c = random_cost(n, k, rng);
    const auto t0 = Clock::now();
    const TransportPlan fast = pot_uot_scaling(c, lambda, cfg);
    pot_time += seconds_since(t0);
    const ConstraintSpec spec = pot_constraints(n, k, lambda, cfg);
    const Matrix ext = pot_extended_cost(c);
    const TransportPlan ref = reference_solver(ext, spec, cfg.epsilon);
    const double gap = std::abs(transport_objective(pot_extended_plan(fast), ext, spec, cfg.epsilon) -
                                transport_objective(ref.plan, ext, spec, cfg.epsilon));
    worst = std::max(worst, gap);
  }
  return {worst < 1e-3 && pot_time < 5.0, fmt("max objective gap %.2e, solver time %.3f s", worst, pot_time)};
}

Outcome constraints_hold() {
  Rng rng(102);
  PotConfig cfg;
  double mass_err = 0.0, row_excess = -1.0;
  for (double lambda : {0.1, 0.5, 0.9, 1.0}) {
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + rng.below(199), k = 2 + rng.below(9);
      const TransportPlan p = pot_uot_scaling(random_cost(n, k, rng), lambda, cfg);
      double mass = 0.0;
      for (double x : p.plan.values()) mass += x;
      mass_err = std::max(mass_err, std::abs(mass - lambda));
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (double x : p.plan.row(i)) row += x;
        row_excess = std::max(row_excess, row - 1.0 / static_cast<double>(n));
      }
    }
  }
  return {mass_err <= 1e-6 && row_excess <= 1e-7,
          fmt("max |mass - lambda| %.2e, max row - 1/N %.2e", mass_err, row_excess)};
}

Outcome balanced_limit() {
  Rng rng(103);
  PotConfig cfg;
  cfg.beta = {1e9};
  double col_err = 0.0, plan_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + rng.below(60), k = 2 + rng.below(6);
    const Matrix c = random_cost(n, k, rng);
    const TransportPlan p = pot_uot_scaling(c, 1.0, cfg);
    const Vector r(n, 1.0 / static_cast<double>(n)), q(k, 1.0 / static_cast<double>(k));
    const TransportPlan s = sinkhorn(c, r, q, cfg.epsilon);
    for (std::size_t j = 0; j < k; ++j) col_err = std::max(col_err, std::abs(p.col_marginal[j] - q[j]));
    for (std::size_t i = 0; i < p.plan.size(); ++i)
      plan_err = std::max(plan_err, std::abs(p.plan.values()[i] - s.plan.values()[i]));
  }
  return {col_err <= 1e-4 && plan_err <= 1e-4, fmt("max column error %.2e, max plan difference %.2e", col_err, plan_err)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& name, double e) {
    if (e >= worst) worst = e, worst_name = name;
  };
  testing::ModelFixture f;
  for (const auto& l : testing::model_losses(f)) note(l.name, f.check(l.parts, l.loss));

  // direct input gradients at latent width 8
  Rng rng(104);
  const std::size_t n = 4, d = 8, k = 3;
  std::vector<Matrix> hs = {testing::random_matrix(n, d, rng), testing::random_matrix(n, d, rng)};
  Matrix hu = testing::random_matrix(n, d, rng);
  const Matrix g = testing::random_matrix(n, n, rng, 0.0, 0.9);
  std::vector<Matrix> pv = {testing::random_stochastic(n, k, rng), testing::random_stochastic(n, k, rng)};
  Matrix p = testing::random_stochastic(n, k, rng);
  const RebalanceContext ctx = testing::sample_context(n, k, rng);
  {
    std::vector<Matrix> dh;
    Matrix du;
    structure_contrastive_loss(hs, hu, g, 0.5, &dh, &du);
    auto fn = [&] { return structure_contrastive_loss(hs, hu, g, 0.5).value; };
    note("structure contrast (inputs)", std::max(testing::fd_check(hs[0], dh[0], fn), testing::fd_check(hu, du, fn)));
  }
  {
    std::vector<Matrix> dp;
    Matrix dc;
    semantic_alignment_loss(pv, p, 1.0, &dp, &dc);
    auto fn = [&] { return semantic_alignment_loss(pv, p, 1.0).value; };
    note("class-column contrast (inputs)", std::max(testing::fd_check(pv[0], dp[0], fn), testing::fd_check(p, dc, fn)));
  }
  {
    std::vector<Matrix> dh;
    Matrix du;
    rebalanced_feature_loss(hs, hu, ctx, &dh, &du);
    auto fn = [&] { return rebalanced_feature_loss(hs, hu, ctx).value; };
    note("rebalanced feature (inputs)", std::max(testing::fd_check(hs[1], dh[1], fn), testing::fd_check(hu, du, fn)));
  }
  {
    std::vector<Matrix> dp;
    Matrix dc;
    rebalanced_class_loss(pv, p, ctx, &dp, &dc);
    auto fn = [&] { return rebalanced_class_loss(pv, p, ctx).value; };
    note("rebalanced class (inputs)", std::max(testing::fd_check(pv[1], dp[1], fn), testing::fd_check(p, dc, fn)));
  }
  {
    Matrix dp;
    self_label_ce(p, ctx.targets, &dp);
    note("cross-entropy (inputs)", testing::fd_check(p, dp, [&] { return self_label_ce(p, ctx.targets).value; }));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          fmt("max relative error %.2e (%s), %.2f s", worst, worst_name.c_str(), secs)};
}

Outcome schedule_endpoints() {
  const MassSchedule s{0.1, 1.0, 100};
  const double end = lambda_at(s, 100), start = lambda_at(s, 0);
  const double want = 0.1 + 0.9 * std::exp(-5.0);
  bool mono = true;
  for (std::size_t t = 1; t <= 100; ++t) mono = mono && lambda_at(s, t) >= lambda_at(s, t - 1);
  const bool ok = end == 1.0 && std::abs(start - want) <= 4 * std::numeric_limits<double>::epsilon() && mono;
  return {ok, fmt("lambda(1) = %.17g, lambda(0) - expected = %.1e, monotone %s", end, start - want,
                  mono ? "yes" : "no")};
}

Outcome metric_oracles() {
  std::size_t pairs = 0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) {
    testing::for_each_labeling(n, 3, [&](std::span<const int> truth) {
      testing::for_each_labeling(n, 3, [&](std::span<const int> pred) {
        ++pairs;
        worst = std::max({worst, std::abs(accuracy(pred, truth) - testing::brute_accuracy(pred, truth)),
                          std::abs(purity(pred, truth) - testing::brute_purity(pred, truth)),
                          std::abs(nmi(pred, truth) - testing::direct_nmi(pred, truth))});
      });
    });
  }
  Rng rng(106);
  std::size_t hung_bad = 0, hung = 0;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (int t = 0; t < 100; ++t) {
      Matrix c(k, k);
      for (double& x : c.values()) x = t % 2 ? rng.uniform(-5, 5) : static_cast<double>(rng.below(3));
      const auto got = hungarian(c), want = testing::brute_assignment(c);
      ++hung;
      if (std::abs(testing::assignment_cost(c, got) - testing::assignment_cost(c, want)) > 1e-9) ++hung_bad;
    }
  }
  return {worst < 1e-12 && hung_bad == 0,
          fmt("%zu labeling pairs, max metric error %.1e; hungarian %zu/%zu optimal", pairs, worst, hung - hung_bad,
              hung)};
}

struct Experiments {
  // [ratio index][seed]
  std::vector<std::vector<double>> acc_full, acc_base, tail_full, tail_base;
  std::vector<double> ablation_base, ablation_ce;
  double seconds = 0.0;
};

const std::vector<double> kRatios = {0.1, 0.5, 0.9};
constexpr std::uint64_t kSeeds = 5;

ClusterMetrics run_one(ExperimentConfig cfg) {
  const MultiViewDataset data = load_or_generate(cfg);
  const ExperimentReport r = run_experiment(cfg, data);
  if (r.status != "ok") throw Error("training failed: " + r.failure);
  return *r.metrics;
}

Experiments run_experiments() {
  Experiments e;
  const auto t0 = Clock::now();
  for (double ratio : kRatios) {
    std::vector<double> af, ab, tf, tb;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      ExperimentConfig cfg;
      cfg.ratio = ratio;
      cfg.seed = seed;
      const ClusterMetrics full = run_one(cfg);
      cfg.balanced_labels = true;
      const ClusterMetrics base = run_one(cfg);
      af.push_back(full.acc);
      ab.push_back(base.acc);
      tf.push_back(full.group_acc.tail.value_or(0.0));
      tb.push_back(base.group_acc.tail.value_or(0.0));
    }
    e.acc_full.push_back(af);
    e.acc_base.push_back(ab);
    e.tail_full.push_back(tf);
    e.tail_base.push_back(tb);
  }
  e.seconds = seconds_since(t0);
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    ExperimentConfig cfg;
    cfg.ratio = 0.1;
    cfg.seed = seed;
    cfg.epochs_stage3 = 0;
    e.ablation_base.push_back(run_one(cfg).acc);
    cfg = {};
    cfg.ratio = 0.1;
    cfg.seed = seed;
    cfg.im_weight = 0.0;
    e.ablation_ce.push_back(run_one(cfg).acc);
  }
  return e;
}

Outcome imbalance_advantage(const Experiments& e) {
  std::vector<double> gaps;
  std::string detail;
  bool ok = e.seconds < 600.0;
  for (std::size_t r = 0; r < kRatios.size(); ++r) {
    std::vector<double> g;
    for (std::size_t s = 0; s < kSeeds; ++s) g.push_back(e.acc_full[r][s] - e.acc_base[r][s]);
    gaps.push_back(median(g));
    ok = ok && gaps.back() >= 0.0;
    detail += fmt("R=%.1f full %s balanced %s median gap %+.3f; ", kRatios[r], list(e.acc_full[r]).c_str(),
                  list(e.acc_base[r]).c_str(), gaps.back());
  }
  ok = ok && gaps.front() >= gaps.back();
  return {ok, detail + fmt("%.0f s", e.seconds)};
}

Outcome tail_effect(const Experiments& e) {
  const double f = median(e.tail_full[0]), b = median(e.tail_base[0]);
  return {f > b, fmt("median tail accuracy %.3f vs %.3f (full %s, balanced %s)", f, b, list(e.tail_full[0]).c_str(),
                     list(e.tail_base[0]).c_str())};
}

Outcome ablation(const Experiments& e) {
  const double a = median(e.ablation_base), b = median(e.ablation_ce), c = median(e.acc_full[0]);
  return {a <= b && b <= c, fmt("median ACC base %.3f <= CE only %.3f <= full %.3f (base %s, CE %s)", a, b, c,
                                list(e.ablation_base).c_str(), list(e.ablation_ce).c_str())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "imvc_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> reports;
  // same config down to the output directory; read each report before the next run
  const std::string cmd = std::string(IMVC_CLI) + " train --seed 7 --ratio 0.1 --out " + (root / "run").string() +
                          " > " + root.string() + ".log 2>&1";
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(root);
    if (std::system(cmd.c_str()) != 0) return {false, "train exited with an error"};
    reports.push_back(slurp(root / "run" / "report.json"));
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  fs::remove_all(root);
  return {same, fmt("report.json %s (%zu bytes)", same ? "byte-identical" : "differs", reports[0].size())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  };
  report(1, solver_vs_reference);
  report(2, constraints_hold);
  report(3, balanced_limit);
  report(4, gradient_suite);
  report(5, schedule_endpoints);
  report(6, metric_oracles);
  std::optional<Experiments> ex;
  std::string ex_error;
  try {
    ex = run_experiments();
  } catch (const std::exception& e) {
    ex_error = e.what();
  }
  auto needs = [&](Outcome (*fn)(const Experiments&)) {
    return [&, fn] { return ex ? fn(*ex) : Outcome{false, "experiments failed: " + ex_error}; };
  };
  report(7, needs(imbalance_advantage));
  report(8, needs(tail_effect));
  report(9, determinism);
  report(10, needs(ablation));
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures;
}
