#pragma once

#include <functional>

#include <Eigen/Dense>

namespace rorl::test {

/// Central differences of f around x, one coordinate at a time.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

/// |a - b| / max(|b|, floor), on whole vectors.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                             double floor = 1e-8) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

}  // namespace rorl::test
