#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ssgp {

// Gauss-Hermite rule in physicists' convention:
//   integral exp(-x^2) g(x) dx  ~=  sum_k w_k g(x_k),  sum w_k = sqrt(pi).
struct QuadratureRule {
  int order = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix with
// off-diagonals sqrt(k/2); weights from the first eigenvector components.
inline QuadratureRule gh_rule(int order) {
  if (order < 1 || order > 100)
    throw std::invalid_argument("gh_rule: order must be in [1, 100]");
  QuadratureRule rule;
  rule.order = order;
  if (order == 1) {
    rule.nodes = Eigen::VectorXd::Zero(1);
    rule.weights = (Eigen::VectorXd(1) << std::sqrt(std::numbers::pi)).finished();
    return rule;
  }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  rule.nodes = es.eigenvalues();
  rule.weights.resize(order);
  const double mu0 = std::sqrt(std::numbers::pi);
  for (int k = 0; k < order; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    rule.weights[k] = mu0 * v0 * v0;
  }
  // enforce exact symmetry about 0
  for (int k = 0; k < order / 2; ++k) {
    const int j = order - 1 - k;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[k]);
    rule.nodes[k] = -x;
    rule.nodes[j] = x;
    const double w = 0.5 * (rule.weights[k] + rule.weights[j]);
    rule.weights[k] = w;
    rule.weights[j] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

}  // namespace ssgp
