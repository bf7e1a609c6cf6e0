#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgp/dense.hpp"
#include "ssgp/elbo.hpp"
#include "ssgp/inference.hpp"
#include "ssgp/kernels.hpp"
#include "ssgp/likelihoods.hpp"

namespace ssgp {

// Unconstrained (log-space) view of all positive kernel and likelihood
// parameters, with a stable name -> index layout.
struct HyperParams {
  std::vector<std::string> names;
  Eigen::VectorXd values;  // log-transformed

  Eigen::Index size() const { return values.size(); }
};

namespace detail {

inline void collect_params(Kernel& k, const std::string& prefix,
                           std::vector<std::string>& names,
                           std::vector<double*>& ptrs) {
  if (k.is_leaf()) {
    names.push_back(prefix + ".variance");
    ptrs.push_back(&k.variance);
    if (k.type == Kernel::Type::Cosine) {
      names.push_back(prefix + ".frequency");
      ptrs.push_back(&k.frequency);
    } else {
      names.push_back(prefix + ".lengthscale");
      ptrs.push_back(&k.lengthscale);
    }
    return;
  }
  for (size_t i = 0; i < k.children.size(); ++i)
    collect_params(k.children[i], prefix + "." + std::to_string(i), names, ptrs);
}

inline void collect_params(Kernel& kernel, Likelihood& lik,
                           std::vector<std::string>& names,
                           std::vector<double*>& ptrs) {
  collect_params(kernel, "kernel", names, ptrs);
  if (lik.type == Likelihood::Type::Gaussian) {
    names.push_back("likelihood.noise_variance");
    ptrs.push_back(&lik.noise_variance);
  }
}

}  // namespace detail

inline HyperParams pack_hyperparams(const Kernel& kernel, const Likelihood& lik) {
  Kernel k = kernel;
  Likelihood l = lik;
  std::vector<std::string> names;
  std::vector<double*> ptrs;
  detail::collect_params(k, l, names, ptrs);
  HyperParams hp;
  hp.names = std::move(names);
  hp.values.resize(static_cast<Eigen::Index>(ptrs.size()));
  for (size_t i = 0; i < ptrs.size(); ++i) hp.values[static_cast<Eigen::Index>(i)] = std::log(*ptrs[i]);
  return hp;
}

inline void apply_hyperparams(Kernel& kernel, Likelihood& lik,
                              const Eigen::VectorXd& values) {
  std::vector<std::string> names;
  std::vector<double*> ptrs;
  detail::collect_params(kernel, lik, names, ptrs);
  if (static_cast<Eigen::Index>(ptrs.size()) != values.size())
    throw std::invalid_argument("apply_hyperparams: layout size mismatch");
  for (size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = std::exp(values[static_cast<Eigen::Index>(i)]);
}

// Filter-factorized evidence  sum_i log p(y_i | y_1:i-1): the state is
// propagated with the current pseudo-observations while each conditional
// term integrates the true likelihood against the filter-predictive marginal.
inline double direct_marginal_likelihood(const std::vector<DiscreteTransition>& transitions,
                                         const Eigen::VectorXd& h,
                                         const Eigen::MatrixXd& Pinf,
                                         const SiteParams& sites,
                                         const Likelihood& lik,
                                         const Eigen::VectorXd& y,
                                         const QuadratureRule& rule) {
  const Eigen::Index n = y.size();
  double total = 0.0;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(h.size());
  Eigen::MatrixXd P = Pinf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[static_cast<size_t>(i)];
    Eigen::VectorXd mp = tr.A * m;
    Eigen::MatrixXd Pp = tr.A * P * tr.A.transpose() + tr.Q;
    Pp = 0.5 * (Pp + Pp.transpose()).eval();

    const double mi = h.dot(mp);
    const double vi = h.dot(Pp * h);
    try {
      total += log_partition(lik, y[i], mi, vi, rule).value;
    } catch (const std::exception& e) {
      throw std::runtime_error("direct_marginal_likelihood: index " +
                               std::to_string(i) + ": " + e.what());
    }

    if (sites.informative(i)) {
      const double eta = sites.pseudo_obs(i) - mi;
      const double s = vi + sites.pseudo_var(i);
      const Eigen::VectorXd k = (Pp * h) / s;
      m = mp + k * eta;
      P = Pp - k * (h.transpose() * Pp);
      P = 0.5 * (P + P.transpose()).eval();
    } else {
      m = mp;
      P = Pp;
    }
  }
  return total;
}

// Central finite differences with per-coordinate relative step; the required
// baseline gradient any analytic implementation must match.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& theta) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
    Eigen::VectorXd th = theta;
    th[j] = theta[j] + step;
    const double fp = f(th);
    th[j] = theta[j] - step;
    const double fm = f(th);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("fd_gradient: non-finite objective at coordinate " +
                               std::to_string(j));
    g[j] = (fp - fm) / (2.0 * step);
  }
  return g;
}

struct Adam {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m, v;
  long t = 0;

  // ascent step
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    if (m.size() == 0) {
      m = Eigen::VectorXd::Zero(theta.size());
      v = Eigen::VectorXd::Zero(theta.size());
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad).eval();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] += lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

enum class ObjectiveKind { Elbo, DirectML };
enum class Engine { Sequential, Dense };

// Objective at hyperparameters theta with the sites held fixed (the
// CVI E-step/M-step split).
inline double objective_value(ObjectiveKind kind, Engine engine,
                              const Kernel& kernel, const Likelihood& lik,
                              const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                              const SiteParams& sites, const QuadratureRule& rule) {
  if (engine == Engine::Dense) {
    if (kind == ObjectiveKind::DirectML)
      throw std::invalid_argument("direct_ml objective requires the sequential engine");
    const DenseGram gram = build_gram(kernel, t);
    const auto reg = dense_regression(gram, sites);
    return elbo(reg.marginals, sites, reg.log_z, lik, y, rule).value;
  }
  const StateSpaceModel model = to_state_space(kernel);
  const auto transitions = build_transitions(model, t);
  if (kind == ObjectiveKind::DirectML)
    return direct_marginal_likelihood(transitions, model.h, model.Pinf, sites, lik, y, rule);
  auto [f, s] = conjugate_pass(transitions, model.h, model.Pinf, sites);
  return elbo(s.marginals, sites, f.log_z, lik, y, rule).value;
}

struct FitConfig {
  ObjectiveKind objective = ObjectiveKind::Elbo;
  Engine engine = Engine::Sequential;
  InferenceConfig inference;
  int outer_iters = 100;
  int inner_iters = 1;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  Eigen::Index dense_cap = 2000;
};

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double elapsed_s = 0.0;
};

struct FitResult {
  Kernel kernel;
  Likelihood lik;
  HyperParams theta;
  PosteriorMarginals marginals;
  SiteParams sites;
  std::vector<TraceRow> trace;
  double final_objective = 0.0;
};

// Alternates inner site updates at fixed theta with one Adam step on theta.
inline FitResult fit(Kernel kernel, Likelihood lik, const Eigen::VectorXd& t,
                     const Eigen::VectorXd& y, const FitConfig& cfg) {
  if (t.size() != y.size())
    throw std::invalid_argument("fit: t and y must have equal length");
  if (cfg.engine == Engine::Dense && t.size() > cfg.dense_cap)
    throw std::invalid_argument("fit: n exceeds dense cap; use the sequential engine");

  const QuadratureRule rule = gh_rule(cfg.inference.quad_order);
  const auto t0 = std::chrono::steady_clock::now();

  auto marginals_at = [&](const Kernel& k, const SiteParams& s) -> PosteriorMarginals {
    if (cfg.engine == Engine::Dense)
      return dense_regression(build_gram(k, t), s).marginals;
    const StateSpaceModel model = to_state_space(k);
    const auto transitions = build_transitions(model, t);
    auto [f, sm] = conjugate_pass(transitions, model.h, model.Pinf, s);
    return sm.marginals;
  };

  SiteParams sites = SiteParams::uninformative(y.size());
  if (cfg.inference.init == InitMode::Filter) {
    const StateSpaceModel model = to_state_space(kernel);
    const auto transitions = build_transitions(model, t);
    sites = filter_init(transitions, model.h, model.Pinf, lik, y, rule);
  }

  HyperParams theta = pack_hyperparams(kernel, lik);
  Adam adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;

  FitResult res;
  bool first_update = true;
  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    try {
      for (int j = 0; j < cfg.inner_iters; ++j) {
        const PosteriorMarginals marg = marginals_at(kernel, sites);
        const double rho = first_update ? cfg.inference.rho_first : cfg.inference.rho;
        if (cfg.inference.mode == InferenceMode::CVI) {
          sites = cvi_site_update(sites, marg, lik, y, rho, rule);
        } else {
          const StateSpaceModel model = to_state_space(kernel);
          const auto transitions = build_transitions(model, t);
          auto [f, sm] = conjugate_pass(transitions, model.h, model.Pinf, sites);
          sites = ep_site_update(sites, sm, lik, y, rho, rule).sites;
        }
        first_update = false;
      }

      auto objective_at = [&](const Eigen::VectorXd& th) {
        Kernel k = kernel;
        Likelihood l = lik;
        apply_hyperparams(k, l, th);
        return objective_value(cfg.objective, cfg.engine, k, l, t, y, sites, rule);
      };
      const double obj = objective_at(theta.values);
      const Eigen::VectorXd grad = fd_gradient(objective_at, theta.values);
      adam.step(theta.values, grad);
      apply_hyperparams(kernel, lik, theta.values);

      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.trace.push_back({outer, obj, grad.norm(), elapsed});
    } catch (const std::exception& e) {
      throw std::runtime_error("fit: outer iteration " + std::to_string(outer) +
                               ": " + e.what());
    }
  }

  res.kernel = kernel;
  res.lik = lik;
  res.theta = theta;
  res.sites = sites;
  res.marginals = marginals_at(kernel, sites);
  res.final_objective =
      objective_value(cfg.objective, cfg.engine, kernel, lik, t, y, sites, rule);
  return res;
}

}  // namespace ssgp
