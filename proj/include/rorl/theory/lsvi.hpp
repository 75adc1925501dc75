#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rorl/nn/mlp.hpp"

namespace rorl::theory {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A symmetric matrix counts as positive definite when its smallest
/// eigenvalue exceeds this fraction of trace / dimension.
inline constexpr double kPdRelativeTolerance = 1e-10;

struct SymmetricEigen {
  VectorXd values;   // ascending
  MatrixXd vectors;  // columns
  double min() const { return values(0); }
  double max() const { return values(values.size() - 1); }
};

SymmetricEigen symmetric_eigen(const MatrixXd& a);

/// kPdRelativeTolerance * trace(a) / dim(a), floored at the smallest normal double.
double pd_threshold(const MatrixXd& a);

/// a^{-1} b through the eigendecomposition of a. Throws SingularMatrixError
/// carrying the smallest eigenvalue when a is not positive definite.
MatrixXd pd_solve(const MatrixXd& a, const MatrixXd& b, const char* what);

/// Regression inputs for one step of least-squares value iteration. Features
/// are columns.
struct LsviData {
  MatrixXd phi;                 // d x m, in-distribution phi(s_i, a_i)
  VectorXd y;                   // m targets
  MatrixXd phi_ood;             // d x m_ood, phi(s_hat, a_hat)
  VectorXd y_ood;               // m_ood pseudo-targets
  std::vector<MatrixXd> diffs;  // anchor i: d x N_i columns phi(s_hat_ij, a_i) - phi(s_i, a_i)

  int dim() const { return static_cast<int>(phi.rows()); }
};

struct CovarianceDecomposition {
  MatrixXd lambda_in;
  MatrixXd lambda_ood;
  MatrixXd lambda_ood_diff;
  MatrixXd lambda_tilde;  // (lambda_in + lambda_ood) + lambda_ood_diff, in that order
  double min_eigenvalue = 0.0;  // of lambda_tilde
};

CovarianceDecomposition build_covariances(const LsviData& data);

/// argmin_w sum_i (y_i - phi_i^T w)^2, plus ridge * |w|^2 when given.
VectorXd lsvi_solve_plain(const MatrixXd& phi, const VectorXd& y,
                          std::optional<double> ridge = std::nullopt);

/// Minimizer of the three-term objective (see lsvi_rorl_objective).
VectorXd lsvi_solve_rorl(const LsviData& data);
VectorXd lsvi_solve_rorl(const LsviData& data, const CovarianceDecomposition& cov);

/// sum (y - phi^T w)^2 + sum_i 1/N_i sum_j (diff_ij^T w)^2 + sum (y_ood - phi_ood^T w)^2.
double lsvi_rorl_objective(const LsviData& data, const VectorXd& w);

struct DefinitenessResult {
  bool is_pd = false;
  double min_eig = 0.0;
  double threshold = 0.0;
};

/// Positive-definiteness of the smoothing covariance.
DefinitenessResult check_definiteness(const MatrixXd& lambda_ood_diff);
DefinitenessResult check_definiteness(const LsviData& data);

/// beta * sqrt(phi^T covariance^{-1} phi).
double lcb_penalty(const VectorXd& phi, const MatrixXd& covariance, double beta);

struct LcbComparison {
  double gamma_rorl = 0.0;
  double gamma_pbrl = 0.0;
  bool strict_less = false;
};

/// Throws ContractError unless cov_rorl - cov_pbrl is positive semidefinite.
LcbComparison compare_lcb(const VectorXd& phi, const MatrixXd& cov_pbrl, const MatrixXd& cov_rorl,
                          double beta);

/// Mean over input coordinates k of (min(g_k - c1, 0))^2 + (max(g_k - c2, 0))^2
/// where g_k is the norm of the k-th Jacobian column of `feature_net` at x.
double bilipschitz_penalty(const nn::MlpD& feature_net, const VectorXd& x, double c1, double c2);

}  // namespace rorl::theory
