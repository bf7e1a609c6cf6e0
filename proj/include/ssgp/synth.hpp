#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "ssgp/dataset.hpp"
#include "ssgp/likelihoods.hpp"

namespace ssgp {

// Latent used for the simulated classification task:
//   f(t) = 6 sinc(t/10) + 1, with sinc(x) = sin(pi x)/(pi x).
inline double bernoulli_latent(double t) {
  const double x = std::numbers::pi * t / 10.0;
  const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
  return 6.0 * sinc + 1.0;
}

// Probit draws from the latent above on a uniform grid over [-25, 25].
inline Dataset make_bernoulli_task(Eigen::Index n, unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset d;
  d.t.resize(n);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.t[i] = -25.0 + 50.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    const double p = 0.5 * std::erfc(-bernoulli_latent(d.t[i]) / std::numbers::sqrt2);
    d.y[i] = unif(rng) < p ? 1.0 : 0.0;
  }
  d.source = "synthetic-bernoulli";
  return d;
}

// Gaussian regression draws from a smooth latent, for self-consistency fits.
inline Dataset make_gaussian_task(Eigen::Index n, double noise_sd,
                                  unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sd);
  Dataset d;
  d.t.resize(n);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.t[i] = 20.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    d.y[i] = std::sin(d.t[i]) + 0.5 * std::cos(0.4 * d.t[i]) + noise(rng);
  }
  d.source = "synthetic-gaussian";
  return d;
}

}  // namespace ssgp
