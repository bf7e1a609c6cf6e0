#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ssgp/quadrature.hpp"

namespace ssgp {

inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double gaussian_log_density(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

// log Phi(x). erfc is accurate until it underflows, so the asymptotic
// expansion of the Mills ratio only takes over deep in the tail, where its
// truncation error is negligible.
inline double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  const double r = 1.0 / (x * x);
  const double series =
      1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - r * 945.0))));
  return -0.5 * x * x - 0.5 * kLog2Pi - std::log(-x) + std::log(series);
}

struct Likelihood {
  enum class Type { Gaussian, Poisson, Bernoulli };
  Type type = Type::Gaussian;
  double noise_variance = 1.0;  // Gaussian
  double binsize = 1.0;         // Poisson, rate scaling

  static Likelihood gaussian(double noise_var) {
    if (noise_var <= 0.0) throw std::invalid_argument("gaussian: noise_variance must be > 0");
    Likelihood l;
    l.type = Type::Gaussian;
    l.noise_variance = noise_var;
    return l;
  }
  static Likelihood poisson(double binsize = 1.0) {
    if (binsize <= 0.0) throw std::invalid_argument("poisson: binsize must be > 0");
    Likelihood l;
    l.type = Type::Poisson;
    l.binsize = binsize;
    return l;
  }
  static Likelihood bernoulli() {
    Likelihood l;
    l.type = Type::Bernoulli;
    return l;
  }
};

inline double log_density(const Likelihood& lik, double y, double f) {
  switch (lik.type) {
    case Likelihood::Type::Gaussian:
      return gaussian_log_density(y, f, lik.noise_variance);
    case Likelihood::Type::Poisson: {
      if (y < 0.0 || std::floor(y) != y)
        throw std::domain_error("poisson: observation must be a non-negative integer");
      return y * (f + std::log(lik.binsize)) - lik.binsize * std::exp(f) -
             std::lgamma(y + 1.0);
    }
    case Likelihood::Type::Bernoulli: {
      if (y != 0.0 && y != 1.0)
        throw std::domain_error("bernoulli: observation must be 0 or 1");
      return log_normal_cdf((2.0 * y - 1.0) * f);
    }
  }
  throw std::logic_error("log_density: unreachable");
}

// Expected log likelihood J = E_{N(f|m,v)}[log p(y|f)] with derivatives in
// (m, v). Derivatives come from quadrature of the differentiated Gaussian
// weight (Bonnet/Stein identities), not finite differences.
struct VariationalExpectation {
  double value = 0.0;
  double d_m = 0.0;
  double d_v = 0.0;
};

inline VariationalExpectation variational_expectation(const Likelihood& lik,
                                                      double y, double m,
                                                      double v,
                                                      const QuadratureRule& rule) {
  if (v <= 0.0) throw std::invalid_argument("variational_expectation: v must be > 0");
  VariationalExpectation out;
  if (lik.type == Likelihood::Type::Gaussian) {
    const double s2 = lik.noise_variance;
    const double r = y - m;
    out.value = -0.5 * (kLog2Pi + std::log(s2)) - (r * r + v) / (2.0 * s2);
    out.d_m = r / s2;
    out.d_v = -0.5 / s2;
    return out;
  }
  const double scale = std::sqrt(2.0 * v);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int k = 0; k < rule.order; ++k) {
    const double f = m + scale * rule.nodes[k];
    const double w = rule.weights[k] * inv_sqrt_pi;
    const double lp = log_density(lik, y, f);
    const double z = f - m;
    out.value += w * lp;
    out.d_m += w * (z / v) * lp;
    out.d_v += w * 0.5 * (z * z / (v * v) - 1.0 / v) * lp;
  }
  if (!std::isfinite(out.value) || !std::isfinite(out.d_m) || !std::isfinite(out.d_v))
    throw std::runtime_error("variational_expectation: quadrature overflow");
  return out;
}

// Log partition Z = log E_{N(f|m,v)}[p(y|f)] with derivatives, evaluated in
// log space (log-sum-exp) so extreme cavities do not underflow.
struct LogPartition {
  double value = 0.0;
  double d_m = 0.0;
  double d_v = 0.0;
};

inline LogPartition log_partition(const Likelihood& lik, double y, double m,
                                  double v, const QuadratureRule& rule) {
  if (v <= 0.0) throw std::invalid_argument("log_partition: v must be > 0");
  LogPartition out;
  if (lik.type == Likelihood::Type::Gaussian) {
    const double s = v + lik.noise_variance;
    const double r = y - m;
    out.value = gaussian_log_density(y, m, s);
    out.d_m = r / s;
    out.d_v = 0.5 * (r * r / (s * s) - 1.0 / s);
    return out;
  }
  const double scale = std::sqrt(2.0 * v);
  const double log_inv_sqrt_pi = -0.5 * std::log(std::numbers::pi);
  Eigen::VectorXd logterm(rule.order), z(rule.order);
  double maxlog = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < rule.order; ++k) {
    z[k] = scale * rule.nodes[k];
    logterm[k] = std::log(rule.weights[k]) + log_inv_sqrt_pi +
                 log_density(lik, y, m + z[k]);
    maxlog = std::max(maxlog, logterm[k]);
  }
  double total = 0.0, sum_m = 0.0, sum_v = 0.0;
  for (int k = 0; k < rule.order; ++k) {
    const double e = std::exp(logterm[k] - maxlog);
    total += e;
    sum_m += e * z[k] / v;
    sum_v += e * 0.5 * (z[k] * z[k] / (v * v) - 1.0 / v);
  }
  out.value = maxlog + std::log(total);
  out.d_m = sum_m / total;
  out.d_v = sum_v / total;
  if (!std::isfinite(out.value) || !std::isfinite(out.d_m) || !std::isfinite(out.d_v))
    throw std::runtime_error("log_partition: quadrature overflow");
  return out;
}

}  // namespace ssgp
