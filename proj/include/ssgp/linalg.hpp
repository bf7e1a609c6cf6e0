#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ssgp {

// Matrix exponential by scaling-and-squaring with a 13th-order Pade
// approximant (Higham 2005 coefficients).
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& M) {
  const Eigen::Index d = M.rows();
  if (M.cols() != d) throw std::invalid_argument("expm: matrix must be square");
  if (d == 0) return Eigen::MatrixXd(0, 0);
  if (d == 1) return (Eigen::MatrixXd(1, 1) << std::exp(M(0, 0))).finished();

  static const double b[] = {64764752532480000.0, 32382376266240000.0,
                             7771770303897600.0,  1187353796428800.0,
                             129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,
                             1323241920.0,        40840800.0,
                             960960.0,            16380.0,
                             182.0,               1.0};
  const double theta13 = 5.371920351148152;

  double nrm = M.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
  int squarings = 0;
  Eigen::MatrixXd A = M;
  if (nrm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
    A /= std::pow(2.0, squarings);
  }

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd A2 = A * A;
  const Eigen::MatrixXd A4 = A2 * A2;
  const Eigen::MatrixXd A6 = A2 * A4;
  Eigen::MatrixXd U =
      A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 +
           b[3] * A2 + b[1] * I);
  Eigen::MatrixXd V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 +
                      b[4] * A4 + b[2] * A2 + b[0] * I;

  Eigen::MatrixXd R = (V - U).fullPivLu().solve(V + U);
  for (int i = 0; i < squarings; ++i) R = R * R;
  return R;
}

// Solves the continuous Lyapunov equation F*P + P*F' + W = 0 for symmetric P
// via Kronecker vectorization; fine for the small state dimensions used here.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& F,
                                      const Eigen::MatrixXd& W,
                                      const std::string& context = "") {
  const Eigen::Index d = F.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd A(d * d, d * d);
  // vec(F*P + P*F') = (I (x) F + F (x) I) vec(P), column-major vec
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      A.block(i * d, j * d, d, d) = F(i, j) * I;
  for (Eigen::Index i = 0; i < d; ++i)
    A.block(i * d, i * d, d, d) += F;

  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(W.data(), d * d);
  Eigen::VectorXd p = A.fullPivLu().solve(-w);
  Eigen::MatrixXd P = Eigen::Map<Eigen::MatrixXd>(p.data(), d, d);
  P = 0.5 * (P + P.transpose()).eval();

  double resid = (F * P + P * F.transpose() + W).norm();
  double scale = std::max(1.0, P.norm());
  if (!P.allFinite() || resid > 1e-10 * scale)
    throw std::runtime_error("Lyapunov solve failed" +
                             (context.empty() ? "" : " for " + context));
  return P;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

}  // namespace ssgp
