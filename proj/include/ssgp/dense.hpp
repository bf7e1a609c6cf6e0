#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssgp/elbo.hpp"
#include "ssgp/inference.hpp"
#include "ssgp/kernels.hpp"
#include "ssgp/likelihoods.hpp"
#include "ssgp/sites.hpp"

namespace ssgp {

struct DenseGram {
  Eigen::MatrixXd K;
  double jitter = 0.0;
};

inline DenseGram build_gram(const Kernel& kernel, const Eigen::VectorXd& t) {
  const Eigen::Index n = t.size();
  DenseGram g;
  g.K.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_eval(kernel, t[i] - t[j]);
      g.K(i, j) = v;
      g.K(j, i) = v;
    }
  return g;
}

struct DenseRegressionResult {
  PosteriorMarginals marginals;
  double log_z = 0.0;
};

// Exact Gaussian conditioning on the informative pseudo-observations.
// Uninformative sites are treated as prediction-only rows.
inline DenseRegressionResult dense_regression(const DenseGram& gram,
                                              const SiteParams& sites) {
  const Eigen::Index n = gram.K.rows();
  if (sites.size() != n)
    throw std::invalid_argument("dense_regression: site count mismatch");

  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < n; ++i)
    if (sites.informative(i)) obs.push_back(i);
  const Eigen::Index m = static_cast<Eigen::Index>(obs.size());

  DenseRegressionResult res;
  res.marginals.m = Eigen::VectorXd::Zero(n);
  res.marginals.v = gram.K.diagonal();
  if (m == 0) return res;

  Eigen::VectorXd yt(m), st(m);
  Eigen::MatrixXd Ky(m, m), Kxo(n, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    yt[a] = sites.pseudo_obs(obs[a]);
    st[a] = sites.pseudo_var(obs[a]);
    Kxo.col(a) = gram.K.col(obs[a]);
    for (Eigen::Index b = 0; b < m; ++b) Ky(a, b) = gram.K(obs[a], obs[b]);
  }
  Ky.diagonal() += st;

  const double diag_mean = Ky.diagonal().mean();
  double jitter = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(Ky);
  while (llt.info() != Eigen::Success) {
    jitter = jitter == 0.0 ? 1e-10 * diag_mean : 10.0 * jitter;
    if (jitter > 1e-6 * diag_mean)
      throw std::runtime_error("dense_regression: Cholesky failed after max jitter");
    llt.compute(Ky + jitter * Eigen::MatrixXd::Identity(m, m));
  }

  const Eigen::VectorXd alpha = llt.solve(yt);
  const Eigen::MatrixXd X = llt.solve(Kxo.transpose());  // m x n
  res.marginals.m = Kxo * alpha;
  for (Eigen::Index j = 0; j < n; ++j)
    res.marginals.v[j] = gram.K(j, j) - Kxo.row(j).dot(X.col(j));

  double logdet = 0.0;
  for (Eigen::Index a = 0; a < m; ++a)
    logdet += 2.0 * std::log(llt.matrixL()(a, a));
  res.log_z = -0.5 * yt.dot(alpha) - 0.5 * logdet -
              0.5 * static_cast<double>(m) * kLog2Pi;
  return res;
}

// Same CVI iteration as the sequential engine, with dense_regression as the
// conjugate solver; intended as the O(n^3) ground truth at small n.
inline InferenceResult dense_cvi(const Kernel& kernel, const Likelihood& lik,
                                 const Eigen::VectorXd& t,
                                 const Eigen::VectorXd& y,
                                 const InferenceConfig& cfg,
                                 Eigen::Index cap = 2000) {
  if (t.size() != y.size())
    throw std::invalid_argument("dense_cvi: t and y must have equal length");
  if (t.size() > cap)
    throw std::invalid_argument("dense_cvi: n exceeds cap " + std::to_string(cap) +
                                "; use the sequential engine");
  if (cfg.mode != InferenceMode::CVI)
    throw std::invalid_argument("dense_cvi: only CVI mode is supported");

  const DenseGram gram = build_gram(kernel, t);
  const QuadratureRule rule = gh_rule(cfg.quad_order);
  const Eigen::Index n = y.size();

  InferenceResult res;
  if (cfg.init == InitMode::Filter) {
    const StateSpaceModel model = to_state_space(kernel);
    const auto transitions = build_transitions(model, t);
    res.sites = filter_init(transitions, model.h, model.Pinf, lik, y, rule);
  } else {
    res.sites = SiteParams::uninformative(n);
  }

  DenseRegressionResult reg = dense_regression(gram, res.sites);
  for (int k = 0; k < cfg.iters; ++k) {
    const double rho = k == 0 ? cfg.rho_first : cfg.rho;
    res.sites = cvi_site_update(res.sites, reg.marginals, lik, y, rho, rule);
    reg = dense_regression(gram, res.sites);
    res.trace.push_back(elbo(reg.marginals, res.sites, reg.log_z, lik, y, rule).value);
  }
  res.filter_log_z = reg.log_z;
  res.smoother.marginals = reg.marginals;
  return res;
}

}  // namespace ssgp
