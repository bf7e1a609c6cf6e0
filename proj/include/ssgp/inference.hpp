#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgp/elbo.hpp"
#include "ssgp/kalman.hpp"
#include "ssgp/kernels.hpp"
#include "ssgp/likelihoods.hpp"
#include "ssgp/sites.hpp"

namespace ssgp {

// Natural-gradient site update from derivatives of the expected log
// likelihood at the posterior marginals, damped by rho.
inline SiteParams cvi_site_update(const SiteParams& sites,
                                  const PosteriorMarginals& marginals,
                                  const Likelihood& lik,
                                  const Eigen::VectorXd& y, double rho,
                                  const QuadratureRule& rule) {
  if (rho <= 0.0 || rho > 1.0)
    throw std::invalid_argument("cvi_site_update: rho must be in (0, 1]");
  SiteParams out = sites;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const auto ve = variational_expectation(lik, y[i], marginals.m[i], marginals.v[i], rule);
    const double g1 = ve.d_m - 2.0 * ve.d_v * marginals.m[i];
    const double g2 = ve.d_v;
    if (!std::isfinite(g1) || !std::isfinite(g2))
      throw std::runtime_error("cvi_site_update: non-finite derivative at index " +
                               std::to_string(i));
    out.lambda1[i] = (1.0 - rho) * sites.lambda1[i] + rho * g1;
    out.lambda2[i] = std::min((1.0 - rho) * sites.lambda2[i] + rho * g2, -kSiteEps);
  }
  return out;
}

// Damped moment-matching EP update on the cavity distribution. Updates whose
// cavity or matched variance is non-positive are skipped and counted.
struct EpUpdateResult {
  SiteParams sites;
  int skipped = 0;
};

inline EpUpdateResult ep_site_update(const SiteParams& sites,
                                     const SmootherResult& smoother,
                                     const Likelihood& lik,
                                     const Eigen::VectorXd& y, double rho,
                                     const QuadratureRule& rule) {
  if (rho <= 0.0 || rho > 1.0)
    throw std::invalid_argument("ep_site_update: rho must be in (0, 1]");
  EpUpdateResult res;
  res.sites = sites;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v_post = smoother.marginals.v[i];
    const double m_post = smoother.marginals.m[i];
    const double post_prec = 1.0 / v_post;
    const double cav_prec = post_prec + 2.0 * sites.lambda2[i];  // lambda2 <= 0
    if (cav_prec <= 0.0) {
      ++res.skipped;
      continue;
    }
    const double v_c = 1.0 / cav_prec;
    const double m_c = v_c * (post_prec * m_post - sites.lambda1[i]);
    const auto lz = log_partition(lik, y[i], m_c, v_c, rule);
    // matched moments; d2logZ/dm2 = 2 d_v - d_m^2 for Gaussian-convolved Z
    const double mean_new = m_c + v_c * lz.d_m;
    const double var_new = v_c + v_c * v_c * (2.0 * lz.d_v - lz.d_m * lz.d_m);
    if (var_new <= 0.0) {
      ++res.skipped;
      continue;
    }
    const double lam2_full = -0.5 * (1.0 / var_new - cav_prec);
    const double lam1_full = mean_new / var_new - m_c * cav_prec;
    res.sites.lambda1[i] = (1.0 - rho) * sites.lambda1[i] + rho * lam1_full;
    res.sites.lambda2[i] =
        std::min((1.0 - rho) * sites.lambda2[i] + rho * lam2_full, -kSiteEps);
  }
  return res;
}

// Single forward pass that sets each site from the filter-predictive
// marginal with rho = 1, then applies the Kalman update with the fresh
// pseudo-observation before moving on.
inline SiteParams filter_init(const std::vector<DiscreteTransition>& transitions,
                              const Eigen::VectorXd& h,
                              const Eigen::MatrixXd& Pinf,
                              const Likelihood& lik, const Eigen::VectorXd& y,
                              const QuadratureRule& rule) {
  const Eigen::Index n = y.size();
  SiteParams sites = SiteParams::uninformative(n);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(h.size());
  Eigen::MatrixXd P = Pinf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[static_cast<size_t>(i)];
    Eigen::VectorXd mp = tr.A * m;
    Eigen::MatrixXd Pp = tr.A * P * tr.A.transpose() + tr.Q;
    Pp = 0.5 * (Pp + Pp.transpose()).eval();

    const double mi = h.dot(mp);
    const double vi = h.dot(Pp * h);
    const auto ve = variational_expectation(lik, y[i], mi, vi, rule);
    sites.lambda1[i] = ve.d_m - 2.0 * ve.d_v * mi;
    sites.lambda2[i] = std::min(ve.d_v, -kSiteEps);

    const double eta = sites.pseudo_obs(i) - mi;
    const double s = vi + sites.pseudo_var(i);
    if (s <= 0.0)
      throw std::runtime_error("filter_init: non-positive innovation variance at step " +
                               std::to_string(i));
    const Eigen::VectorXd k = (Pp * h) / s;
    m = mp + k * eta;
    P = Pp - k * (h.transpose() * Pp);
    P = 0.5 * (P + P.transpose()).eval();
    if (!m.allFinite() || !P.allFinite())
      throw std::runtime_error("filter_init: non-finite state at step " + std::to_string(i));
  }
  return sites;
}

enum class InferenceMode { CVI, EP };
enum class InitMode { Zero, Filter };

struct InferenceConfig {
  InferenceMode mode = InferenceMode::CVI;
  InitMode init = InitMode::Zero;
  int iters = 20;
  double rho = 0.5;        // damping after the first iteration
  double rho_first = 1.0;  // full step right after initialization
  int quad_order = 20;
};

struct InferenceResult {
  SmootherResult smoother;
  SiteParams sites;
  double filter_log_z = 0.0;
  std::vector<double> trace;  // per-iteration ELBO (CVI) or filter log Z (EP)
  int ep_skipped = 0;
};

// One conjugate pass: filter + smoother + marginal extraction.
inline std::pair<FilterResult, SmootherResult> conjugate_pass(
    const std::vector<DiscreteTransition>& transitions, const Eigen::VectorXd& h,
    const Eigen::MatrixXd& Pinf, const SiteParams& sites) {
  FilterResult f = kalman_filter(transitions, h, Pinf, sites);
  SmootherResult s = rts_smoother(f, transitions);
  extract_marginals(s, h);
  return {std::move(f), std::move(s)};
}

inline InferenceResult run_inference(const Kernel& kernel, const Likelihood& lik,
                                     const Eigen::VectorXd& t,
                                     const Eigen::VectorXd& y,
                                     const InferenceConfig& cfg) {
  if (t.size() != y.size())
    throw std::invalid_argument("run_inference: t and y must have equal length");
  const StateSpaceModel model = to_state_space(kernel);
  const auto transitions = build_transitions(model, t);
  const QuadratureRule rule = gh_rule(cfg.quad_order);

  InferenceResult res;
  res.sites = cfg.init == InitMode::Filter
                  ? filter_init(transitions, model.h, model.Pinf, lik, y, rule)
                  : SiteParams::uninformative(y.size());

  auto [f, s] = conjugate_pass(transitions, model.h, model.Pinf, res.sites);
  for (int k = 0; k < cfg.iters; ++k) {
    const double rho = k == 0 ? cfg.rho_first : cfg.rho;
    try {
      if (cfg.mode == InferenceMode::CVI) {
        res.sites = cvi_site_update(res.sites, s.marginals, lik, y, rho, rule);
      } else {
        auto ep = ep_site_update(res.sites, s, lik, y, rho, rule);
        res.sites = std::move(ep.sites);
        res.ep_skipped += ep.skipped;
      }
      std::tie(f, s) = conjugate_pass(transitions, model.h, model.Pinf, res.sites);
      res.trace.push_back(cfg.mode == InferenceMode::CVI
                              ? elbo(s.marginals, res.sites, f.log_z, lik, y, rule).value
                              : f.log_z);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_inference: iteration " + std::to_string(k) +
                               ": " + e.what());
    }
  }
  res.filter_log_z = f.log_z;
  res.smoother = std::move(s);
  return res;
}

}  // namespace ssgp
