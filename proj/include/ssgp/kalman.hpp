#pragma once

#include <Eigen/Dense>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgp/kernels.hpp"
#include "ssgp/sites.hpp"

namespace ssgp {

// Scalar marginals of f(t_i) under the current posterior.
struct PosteriorMarginals {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

// Covariances are stored as d x (d*n) blocks to keep one contiguous buffer
// for long series.
struct FilterResult {
  Eigen::MatrixXd means;       // d x n, filtered
  Eigen::MatrixXd covs;        // d x d*n
  Eigen::MatrixXd pred_means;  // d x n, one-step predictive
  Eigen::MatrixXd pred_covs;   // d x d*n
  double log_z = 0.0;          // accumulated Gaussian log marginal likelihood

  Eigen::Index n() const { return means.cols(); }
  Eigen::Index d() const { return means.rows(); }
  auto cov(Eigen::Index i) { return covs.block(0, i * d(), d(), d()); }
  auto cov(Eigen::Index i) const { return covs.block(0, i * d(), d(), d()); }
  auto pred_cov(Eigen::Index i) { return pred_covs.block(0, i * d(), d(), d()); }
  auto pred_cov(Eigen::Index i) const { return pred_covs.block(0, i * d(), d(), d()); }
};

struct SmootherResult {
  Eigen::MatrixXd means;  // d x n
  Eigen::MatrixXd covs;   // d x d*n
  PosteriorMarginals marginals;

  Eigen::Index n() const { return means.cols(); }
  Eigen::Index d() const { return means.rows(); }
  auto cov(Eigen::Index i) { return covs.block(0, i * d(), d(), d()); }
  auto cov(Eigen::Index i) const { return covs.block(0, i * d(), d(), d()); }
};

inline FilterResult kalman_filter(const std::vector<DiscreteTransition>& transitions,
                                  const Eigen::VectorXd& h,
                                  const Eigen::MatrixXd& Pinf,
                                  const SiteParams& sites) {
  const Eigen::Index n = static_cast<Eigen::Index>(transitions.size());
  const Eigen::Index d = h.size();
  if (sites.size() != n)
    throw std::invalid_argument("kalman_filter: site count does not match transitions");

  FilterResult res;
  res.means.resize(d, n);
  res.covs.resize(d, d * n);
  res.pred_means.resize(d, n);
  res.pred_covs.resize(d, d * n);

  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd P = Pinf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[static_cast<size_t>(i)];
    Eigen::VectorXd mp = tr.A * m;
    Eigen::MatrixXd Pp = tr.A * P * tr.A.transpose() + tr.Q;
    Pp = 0.5 * (Pp + Pp.transpose()).eval();
    res.pred_means.col(i) = mp;
    res.pred_cov(i) = Pp;

    if (sites.informative(i)) {
      const double y = sites.pseudo_obs(i);
      const double s2 = sites.pseudo_var(i);
      const double eta = y - h.dot(mp);
      const double s = h.dot(Pp * h) + s2;
      if (s <= 0.0)
        throw std::runtime_error("kalman_filter: non-positive innovation variance at step " +
                                 std::to_string(i));
      const Eigen::VectorXd k = (Pp * h) / s;
      m = mp + k * eta;
      P = Pp - k * (h.transpose() * Pp);
      P = 0.5 * (P + P.transpose()).eval();
      res.log_z += -0.5 * (std::log(2.0 * std::numbers::pi * s) + eta * eta / s);
    } else {
      m = mp;
      P = Pp;
    }
    if (!m.allFinite() || !P.allFinite())
      throw std::runtime_error("kalman_filter: non-finite state at step " + std::to_string(i));
    res.means.col(i) = m;
    res.cov(i) = P;
  }
  return res;
}

inline SmootherResult rts_smoother(const FilterResult& filter,
                                   const std::vector<DiscreteTransition>& transitions) {
  const Eigen::Index n = filter.n();
  const Eigen::Index d = filter.d();
  SmootherResult res;
  res.means.resize(d, n);
  res.covs.resize(d, d * n);
  res.marginals.m.resize(n);
  res.marginals.v.resize(n);
  if (n == 0) return res;

  res.means.col(n - 1) = filter.means.col(n - 1);
  res.cov(n - 1) = filter.cov(n - 1);
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    const auto& tr = transitions[static_cast<size_t>(i + 1)];
    const Eigen::MatrixXd Pf = filter.cov(i);
    Eigen::MatrixXd Pp = filter.pred_cov(i + 1);
    // G = Pf A' inv(Pp), via a solve against Pp with one jittered retry
    Eigen::MatrixXd APf = tr.A * Pf;  // = (Pf A')'
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Pp);
    Eigen::MatrixXd G;
    if (ldlt.info() == Eigen::Success) {
      G = ldlt.solve(APf).transpose();
    } else {
      Pp.diagonal().array() += 1e-10 * Pp.trace() / static_cast<double>(d);
      Eigen::LDLT<Eigen::MatrixXd> retry(Pp);
      if (retry.info() != Eigen::Success)
        throw std::runtime_error("rts_smoother: singular predictive covariance at step " +
                                 std::to_string(i + 1));
      G = retry.solve(APf).transpose();
    }
    res.means.col(i) = filter.means.col(i) +
                       G * (res.means.col(i + 1) - filter.pred_means.col(i + 1));
    Eigen::MatrixXd Ps =
        Pf + G * (Eigen::MatrixXd(res.cov(i + 1)) - filter.pred_cov(i + 1)) * G.transpose();
    res.cov(i) = 0.5 * (Ps + Ps.transpose());
  }
  return res;
}

inline void extract_marginals(SmootherResult& res, const Eigen::VectorXd& h) {
  for (Eigen::Index i = 0; i < res.n(); ++i) {
    res.marginals.m[i] = h.dot(res.means.col(i));
    const double v = h.dot(Eigen::MatrixXd(res.cov(i)) * h);
    if (v <= 0.0)
      throw std::runtime_error("rts_smoother: non-positive marginal variance at step " +
                               std::to_string(i));
    res.marginals.v[i] = v;
  }
}

}  // namespace ssgp
