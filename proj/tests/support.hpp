#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "imvc/matrix.hpp"
#include "imvc/networks.hpp"
#include "imvc/rng.hpp"

namespace testing {

using imvc::Matrix;

inline Matrix random_matrix(std::size_t r, std::size_t c, imvc::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

inline Matrix random_stochastic(std::size_t r, std::size_t c, imvc::Rng& rng) {
  Matrix m = random_matrix(r, c, rng, 0.05, 1.0);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double x : m.row(i)) s += x;
    for (double& x : m.row(i)) x /= s;
  }
  return m;
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Largest relative error between `analytic` and central differences of `f`
/// with respect to every entry of `x`.
inline double fd_check(Matrix& x, const Matrix& analytic, const std::function<double()>& f, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.values()[i];
    x.values()[i] = keep + h;
    const double up = f();
    x.values()[i] = keep - h;
    const double down = f();
    x.values()[i] = keep;
    worst = std::max(worst, rel_err(analytic.values()[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

/// Same, for every tensor of a model.
inline double fd_check_params(imvc::ModelParams& params, const imvc::ModelParams& grads,
                              const std::function<double()>& f, double h = 1e-5) {
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  params.for_each([&](const std::string&, Matrix& m) { p.push_back(&m); });
  grads.for_each([&](const std::string&, const Matrix& m) { g.push_back(&m); });
  double worst = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) worst = std::max(worst, fd_check(*p[t], *g[t], f, h));
  return worst;
}

/// Small model used by the gradient checks: latent width 8, three classes.
inline imvc::ModelConfig tiny_config() {
  imvc::ModelConfig c;
  c.view_dims = {6, 5};
  c.encoder_hidden = {7};
  c.latent_dim = 8;
  c.projection_hidden = 6;
  c.projection_dim = 5;
  c.attention_dim = 4;
  c.num_classes = 3;
  return c;
}

}  // namespace testing
