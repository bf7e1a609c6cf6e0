#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssgp/linalg.hpp"

namespace ssgp {

// Covariance function over a 1D input, as a small expression tree.
struct Kernel {
  enum class Type { Matern12, Matern32, Matern52, Cosine, Sum, Product };

  Type type = Type::Matern12;
  double variance = 1.0;     // signal variance, leaf kernels
  double lengthscale = 1.0;  // Matern only
  double frequency = 1.0;    // Cosine only, radians per time unit
  std::vector<Kernel> children;

  static Kernel matern12(double var, double len) { return leaf(Type::Matern12, var, len); }
  static Kernel matern32(double var, double len) { return leaf(Type::Matern32, var, len); }
  static Kernel matern52(double var, double len) { return leaf(Type::Matern52, var, len); }

  static Kernel cosine(double var, double omega) {
    if (var <= 0.0) throw std::invalid_argument("cosine: variance must be > 0");
    if (omega <= 0.0) throw std::invalid_argument("cosine: frequency must be > 0");
    Kernel k;
    k.type = Type::Cosine;
    k.variance = var;
    k.frequency = omega;
    return k;
  }

  static Kernel sum(std::vector<Kernel> kids) {
    if (kids.size() < 2) throw std::invalid_argument("sum: needs >= 2 children");
    Kernel k;
    k.type = Type::Sum;
    k.children = std::move(kids);
    return k;
  }

  static Kernel product(std::vector<Kernel> kids) {
    if (kids.size() < 2) throw std::invalid_argument("prod: needs >= 2 children");
    Kernel k;
    k.type = Type::Product;
    k.children = std::move(kids);
    return k;
  }

  bool is_leaf() const { return children.empty(); }

 private:
  static Kernel leaf(Type t, double var, double len) {
    if (var <= 0.0) throw std::invalid_argument("kernel: variance must be > 0");
    if (len <= 0.0) throw std::invalid_argument("kernel: lengthscale must be > 0");
    Kernel k;
    k.type = t;
    k.variance = var;
    k.lengthscale = len;
    return k;
  }
};

inline double kernel_eval(const Kernel& k, double tau) {
  const double r = std::abs(tau);
  switch (k.type) {
    case Kernel::Type::Matern12:
      return k.variance * std::exp(-r / k.lengthscale);
    case Kernel::Type::Matern32: {
      const double z = std::numbers::sqrt3 * r / k.lengthscale;
      return k.variance * (1.0 + z) * std::exp(-z);
    }
    case Kernel::Type::Matern52: {
      const double z = std::sqrt(5.0) * r / k.lengthscale;
      return k.variance * (1.0 + z + z * z / 3.0) * std::exp(-z);
    }
    case Kernel::Type::Cosine:
      return k.variance * std::cos(k.frequency * tau);
    case Kernel::Type::Sum: {
      double s = 0.0;
      for (const auto& c : k.children) s += kernel_eval(c, tau);
      return s;
    }
    case Kernel::Type::Product: {
      double p = 1.0;
      for (const auto& c : k.children) p *= kernel_eval(c, tau);
      return p;
    }
  }
  throw std::logic_error("kernel_eval: unreachable");
}

// Continuous-time LTI SDE representation of a kernel:
//   df = F f dt + L dB,  with diffusion Qc, measurement f(t) = h'f,
//   stationary covariance Pinf solving F Pinf + Pinf F' + L Qc L' = 0.
struct StateSpaceModel {
  Eigen::MatrixXd F;     // d x d
  Eigen::MatrixXd L;     // d x s
  Eigen::MatrixXd Qc;    // s x s
  Eigen::VectorXd h;     // d
  Eigen::MatrixXd Pinf;  // d x d
  Eigen::Index d = 0;
  Eigen::Index s = 0;
};

struct DiscreteTransition {
  Eigen::MatrixXd A;  // expm(F dt)
  Eigen::MatrixXd Q;  // Pinf - A Pinf A', clamped PSD
  double dt = 0.0;
};

inline Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& F,
                                             const Eigen::MatrixXd& L,
                                             const Eigen::MatrixXd& Qc,
                                             const std::string& context = "") {
  if (Qc.norm() == 0.0)
    throw std::invalid_argument(
        "stationary_covariance: zero-diffusion block has no Lyapunov solution; "
        "Pinf must be supplied directly" +
        (context.empty() ? "" : " (" + context + ")"));
  Eigen::MatrixXd W = L * Qc * L.transpose();
  return solve_lyapunov(F, W, context);
}

namespace detail {

// Companion-form Matern SDE: lambda = sqrt(2 nu)/len, state dim p+1 with
// nu = p + 1/2, spectral density q = var * (2 lambda)^(2p+1) (p!)^2 / (2p)!
inline StateSpaceModel matern_ssm(int p, double var, double len) {
  const double nu = p + 0.5;
  const double lambda = std::sqrt(2.0 * nu) / len;
  const Eigen::Index d = p + 1;

  StateSpaceModel m;
  m.d = d;
  m.s = 1;
  m.F = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; ++i) m.F(i, i + 1) = 1.0;
  // last row: -binom(d, k) lambda^(d-k)
  double binom = 1.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    if (k > 0) binom = binom * (d - k + 1) / k;
    m.F(d - 1, k) = -binom * std::pow(lambda, static_cast<double>(d - k));
  }
  m.L = Eigen::MatrixXd::Zero(d, 1);
  m.L(d - 1, 0) = 1.0;

  double fact_p = 1.0, fact_2p = 1.0;
  for (int i = 2; i <= p; ++i) fact_p *= i;
  for (int i = 2; i <= 2 * p; ++i) fact_2p *= i;
  const double q = var * std::pow(2.0 * lambda, 2.0 * p + 1.0) * fact_p * fact_p / fact_2p;
  m.Qc = (Eigen::MatrixXd(1, 1) << q).finished();

  m.h = Eigen::VectorXd::Zero(d);
  m.h(0) = 1.0;
  m.Pinf = stationary_covariance(m.F, m.L, m.Qc, "matern block");
  return m;
}

inline StateSpaceModel cosine_ssm(double var, double omega) {
  StateSpaceModel m;
  m.d = 2;
  m.s = 1;
  m.F = (Eigen::MatrixXd(2, 2) << 0.0, -omega, omega, 0.0).finished();
  m.L = Eigen::MatrixXd::Zero(2, 1);
  m.Qc = Eigen::MatrixXd::Zero(1, 1);
  m.h = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  m.Pinf = var * Eigen::MatrixXd::Identity(2, 2);
  return m;
}

}  // namespace detail

inline StateSpaceModel to_state_space(const Kernel& k) {
  using T = Kernel::Type;
  switch (k.type) {
    case T::Matern12: return detail::matern_ssm(0, k.variance, k.lengthscale);
    case T::Matern32: return detail::matern_ssm(1, k.variance, k.lengthscale);
    case T::Matern52: return detail::matern_ssm(2, k.variance, k.lengthscale);
    case T::Cosine:   return detail::cosine_ssm(k.variance, k.frequency);
    case T::Sum: {
      std::vector<StateSpaceModel> parts;
      Eigen::Index d = 0, s = 0;
      for (const auto& c : k.children) {
        parts.push_back(to_state_space(c));
        d += parts.back().d;
        s += parts.back().s;
      }
      StateSpaceModel m;
      m.d = d;
      m.s = s;
      m.F = Eigen::MatrixXd::Zero(d, d);
      m.L = Eigen::MatrixXd::Zero(d, s);
      m.Qc = Eigen::MatrixXd::Zero(s, s);
      m.h = Eigen::VectorXd::Zero(d);
      m.Pinf = Eigen::MatrixXd::Zero(d, d);
      Eigen::Index od = 0, os = 0;
      for (const auto& p : parts) {
        m.F.block(od, od, p.d, p.d) = p.F;
        m.L.block(od, os, p.d, p.s) = p.L;
        m.Qc.block(os, os, p.s, p.s) = p.Qc;
        m.h.segment(od, p.d) = p.h;
        m.Pinf.block(od, od, p.d, p.d) = p.Pinf;
        od += p.d;
        os += p.s;
      }
      return m;
    }
    case T::Product: {
      // Only the quasi-periodic form Product(Cosine, Matern) is supported.
      if (k.children.size() != 2)
        throw std::invalid_argument("unsupported kernel algebra: product arity != 2");
      const Kernel* cosk = nullptr;
      const Kernel* matk = nullptr;
      for (const auto& c : k.children) {
        if (c.type == T::Cosine) cosk = &c;
        else if (c.type == T::Matern12 || c.type == T::Matern32 || c.type == T::Matern52)
          matk = &c;
      }
      if (!cosk || !matk)
        throw std::invalid_argument(
            "unsupported kernel algebra: product must pair a cosine with a matern");
      StateSpaceModel mc = to_state_space(*cosk);
      StateSpaceModel mm = to_state_space(*matk);
      StateSpaceModel m;
      m.d = mc.d * mm.d;
      m.s = mc.d * mm.s;
      const Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(mc.d, mc.d);
      const Eigen::MatrixXd Im = Eigen::MatrixXd::Identity(mm.d, mm.d);
      m.F = kron(mc.F, Im) + kron(I2, mm.F);
      m.L = kron(I2, mm.L);
      m.Qc = cosk->variance * kron(Eigen::MatrixXd::Identity(mc.d, mc.d), mm.Qc);
      m.h = Eigen::VectorXd(kron(mc.h, mm.h));
      m.Pinf = kron(mc.Pinf, mm.Pinf);
      return m;
    }
  }
  throw std::logic_error("to_state_space: unreachable");
}

inline DiscreteTransition discretize(const StateSpaceModel& model, double dt) {
  if (dt < 0.0) throw std::invalid_argument("discretize: dt must be >= 0");
  DiscreteTransition tr;
  tr.dt = dt;
  if (dt == 0.0) {
    tr.A = Eigen::MatrixXd::Identity(model.d, model.d);
    tr.Q = Eigen::MatrixXd::Zero(model.d, model.d);
    return tr;
  }
  tr.A = expm(model.F * dt);
  Eigen::MatrixXd Q = model.Pinf - tr.A * model.Pinf * tr.A.transpose();
  Q = 0.5 * (Q + Q.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  const double floor_eig = -1e-12 * std::max(1.0, model.Pinf.norm());
  if (es.eigenvalues().minCoeff() < floor_eig)
    throw std::runtime_error("discretize: process noise indefinite beyond roundoff");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  tr.Q = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  tr.Q = 0.5 * (tr.Q + tr.Q.transpose()).eval();
  return tr;
}

// Per-step transitions for a measurement grid; step 0 has dt = 0 so the
// filter prediction from the stationary prior reproduces the prior exactly.
inline std::vector<DiscreteTransition> build_transitions(
    const StateSpaceModel& model, const Eigen::VectorXd& t) {
  const Eigen::Index n = t.size();
  std::vector<DiscreteTransition> out;
  out.reserve(n);
  double last_dt = -1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dt = i == 0 ? 0.0 : t[i] - t[i - 1];
    if (i > 0 && dt <= 0.0)
      throw std::invalid_argument("build_transitions: time grid not strictly increasing at index " +
                                  std::to_string(i));
    if (dt == last_dt)
      out.push_back(out.back());  // uniform grids share one discretization
    else
      out.push_back(discretize(model, dt));
    last_dt = dt;
  }
  return out;
}

}  // namespace ssgp
