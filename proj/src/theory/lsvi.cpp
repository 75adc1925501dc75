#include "rorl/theory/lsvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "rorl/errors.hpp"

namespace rorl::theory {

SymmetricEigen symmetric_eigen(const MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ShapeError("symmetric_eigen: need a nonempty square matrix");
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw SingularMatrixError("eigendecomposition failed", 0.0);
  return {solver.eigenvalues(), solver.eigenvectors()};
}

double pd_threshold(const MatrixXd& a) {
  return std::max(kPdRelativeTolerance * a.trace() / static_cast<double>(a.rows()),
                  std::numeric_limits<double>::min());
}

MatrixXd pd_solve(const MatrixXd& a, const MatrixXd& b, const char* what) {
  const SymmetricEigen eig = symmetric_eigen(a);
  if (!(eig.min() > pd_threshold(a)))
    throw SingularMatrixError(std::string(what) + " is not positive definite", eig.min());
  return eig.vectors * (eig.values.cwiseInverse().asDiagonal() * (eig.vectors.transpose() * b));
}

CovarianceDecomposition build_covariances(const LsviData& data) {
  const Eigen::Index d = data.phi.rows();
  CovarianceDecomposition cov;
  cov.lambda_in = data.phi * data.phi.transpose();
  cov.lambda_ood = MatrixXd::Zero(d, d);
  if (data.phi_ood.cols() > 0) {
    if (data.phi_ood.rows() != d) throw ShapeError("build_covariances: OOD feature size differs");
    cov.lambda_ood = data.phi_ood * data.phi_ood.transpose();
  }
  cov.lambda_ood_diff = MatrixXd::Zero(d, d);
  for (const MatrixXd& z : data.diffs) {
    if (z.cols() == 0) continue;
    if (z.rows() != d) throw ShapeError("build_covariances: difference vector size differs");
    cov.lambda_ood_diff += (z * z.transpose()) / static_cast<double>(z.cols());
  }
  cov.lambda_tilde = (cov.lambda_in + cov.lambda_ood) + cov.lambda_ood_diff;
  cov.min_eigenvalue = symmetric_eigen(cov.lambda_tilde).min();
  return cov;
}

VectorXd lsvi_solve_plain(const MatrixXd& phi, const VectorXd& y, std::optional<double> ridge) {
  if (phi.cols() != y.size()) throw ShapeError("lsvi_solve_plain: feature and target counts differ");
  MatrixXd lambda = phi * phi.transpose();
  if (ridge) {
    if (!(*ridge > 0.0)) throw ContractError("lsvi_solve_plain: ridge must be positive");
    lambda.diagonal().array() += *ridge;
  }
  return pd_solve(lambda, phi * y, "Lambda");
}

VectorXd lsvi_solve_rorl(const LsviData& data, const CovarianceDecomposition& cov) {
  if (data.phi.cols() != data.y.size() || data.phi_ood.cols() != data.y_ood.size())
    throw ShapeError("lsvi_solve_rorl: feature and target counts differ");
  VectorXd rhs = data.phi * data.y;
  if (data.phi_ood.cols() > 0) rhs += data.phi_ood * data.y_ood;
  return pd_solve(cov.lambda_tilde, rhs, "Lambda_tilde");
}

VectorXd lsvi_solve_rorl(const LsviData& data) {
  return lsvi_solve_rorl(data, build_covariances(data));
}

double lsvi_rorl_objective(const LsviData& data, const VectorXd& w) {
  double total = (data.y - data.phi.transpose() * w).squaredNorm();
  if (data.phi_ood.cols() > 0) total += (data.y_ood - data.phi_ood.transpose() * w).squaredNorm();
  for (const MatrixXd& z : data.diffs)
    if (z.cols() > 0) total += (z.transpose() * w).squaredNorm() / static_cast<double>(z.cols());
  return total;
}

DefinitenessResult check_definiteness(const MatrixXd& lambda_ood_diff) {
  DefinitenessResult r;
  r.min_eig = symmetric_eigen(lambda_ood_diff).min();
  r.threshold = pd_threshold(lambda_ood_diff);
  r.is_pd = r.min_eig > r.threshold;
  return r;
}

DefinitenessResult check_definiteness(const LsviData& data) {
  return check_definiteness(build_covariances(data).lambda_ood_diff);
}

double lcb_penalty(const VectorXd& phi, const MatrixXd& covariance, double beta) {
  if (beta < 0) throw ContractError("lcb_penalty: beta must be >= 0");
  const double quad = phi.dot(pd_solve(covariance, phi, "covariance").col(0));
  return beta * std::sqrt(std::max(quad, 0.0));
}

LcbComparison compare_lcb(const VectorXd& phi, const MatrixXd& cov_pbrl, const MatrixXd& cov_rorl,
                          double beta) {
  const MatrixXd increment = cov_rorl - cov_pbrl;
  const double slack = kPdRelativeTolerance * cov_rorl.trace() / static_cast<double>(cov_rorl.rows());
  if (symmetric_eigen(increment).min() < -slack)
    throw ContractError("compare_lcb: cov_rorl - cov_pbrl is not positive semidefinite");
  LcbComparison c;
  c.gamma_rorl = lcb_penalty(phi, cov_rorl, beta);
  c.gamma_pbrl = lcb_penalty(phi, cov_pbrl, beta);
  c.strict_less = c.gamma_rorl < c.gamma_pbrl;
  return c;
}

double bilipschitz_penalty(const nn::MlpD& feature_net, const VectorXd& x, double c1, double c2) {
  if (!(c1 > 0.0 && c1 < c2)) throw ContractError("bilipschitz_penalty: need 0 < c1 < c2");
  if (x.size() != feature_net.input_size()) throw ShapeError("bilipschitz_penalty: input size mismatch");
  const int out = feature_net.output_size();
  nn::MlpD::Cache cache;
  feature_net.forward(x.replicate(1, out), cache);
  // Column j holds d phi_j / d x, so row k is the k-th Jacobian column.
  const MatrixXd grads = feature_net.input_gradient(cache, MatrixXd::Identity(out, out));
  double total = 0.0;
  for (Eigen::Index k = 0; k < grads.rows(); ++k) {
    const double g = grads.row(k).norm();
    const double low = std::min(g - c1, 0.0);
    const double high = std::max(g - c2, 0.0);
    total += low * low + high * high;
  }
  return total / static_cast<double>(grads.rows());
}

}  // namespace rorl::theory
