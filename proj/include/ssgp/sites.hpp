#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace ssgp {

// lambda2 values closer to zero than this are clamped to keep the pseudo
// variance finite; exactly zero encodes an uninformative site.
inline constexpr double kSiteEps = 1e-8;

// Natural parameters of the per-datapoint Gaussian likelihood approximations
// N(y~_i | f_i, s~_i^2), with y~ = lambda1 / (-2 lambda2), s~^2 = -1/(2 lambda2).
struct SiteParams {
  Eigen::VectorXd lambda1;
  Eigen::VectorXd lambda2;  // each <= -kSiteEps, or exactly 0 (uninformative)

  static SiteParams uninformative(Eigen::Index n) {
    SiteParams s;
    s.lambda1 = Eigen::VectorXd::Zero(n);
    s.lambda2 = Eigen::VectorXd::Zero(n);
    return s;
  }

  Eigen::Index size() const { return lambda1.size(); }
  bool informative(Eigen::Index i) const { return lambda2[i] < 0.0; }

  double pseudo_obs(Eigen::Index i) const {
    return lambda1[i] / (-2.0 * lambda2[i]);
  }
  double pseudo_var(Eigen::Index i) const { return -1.0 / (2.0 * lambda2[i]); }
};

}  // namespace ssgp
