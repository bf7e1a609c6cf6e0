#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "ssgp/kalman.hpp"
#include "ssgp/likelihoods.hpp"
#include "ssgp/sites.hpp"

namespace ssgp {

struct ObjectiveReport {
  double value = 0.0;
  double varexp_sum = 0.0;       // sum_i E_q[log p(y_i | f_i)]
  double log_z = 0.0;            // Gaussian log marginal of the pseudo model
  double site_correction = 0.0;  // sum_i E_q[log N(y~_i | f_i, s~_i^2)]
  Eigen::VectorXd gradient;      // optional, empty unless requested
};

// ELBO = sum_i J_i + log Z(GP) - sum_i E_q[log N(y~_i | f_i, s~_i^2)].
// Uninformative sites contribute only their J_i term.
inline ObjectiveReport elbo(const PosteriorMarginals& marginals,
                            const SiteParams& sites, double filter_log_z,
                            const Likelihood& lik, const Eigen::VectorXd& y,
                            const QuadratureRule& rule) {
  ObjectiveReport rep;
  rep.log_z = filter_log_z;
  const Eigen::Index n = y.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = marginals.m[i];
    const double v = marginals.v[i];
    rep.varexp_sum += variational_expectation(lik, y[i], m, v, rule).value;
    if (sites.informative(i)) {
      const double yt = sites.pseudo_obs(i);
      const double s2 = sites.pseudo_var(i);
      rep.site_correction += gaussian_log_density(yt, m, s2) - v / (2.0 * s2);
    }
  }
  rep.value = rep.varexp_sum + rep.log_z - rep.site_correction;
  if (!std::isfinite(rep.value))
    throw std::runtime_error(
        "elbo: non-finite value (varexp_sum=" + std::to_string(rep.varexp_sum) +
        ", log_z=" + std::to_string(rep.log_z) +
        ", site_correction=" + std::to_string(rep.site_correction) + ")");
  return rep;
}

}  // namespace ssgp
