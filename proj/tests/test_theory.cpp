#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rorl/errors.hpp"
#include "rorl/nn/mlp.hpp"
#include "rorl/theory/linear_mdp.hpp"
#include "rorl/theory/lsvi.hpp"
#include "test_support.hpp"

using namespace rorl;
using namespace rorl::theory;

TEST_CASE("closed-form solution matches two independent minimizers") {
  Rng rng = make_stream(1, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + trial % 6;
    const LsviData data = test::random_lsvi_data(rng, d, 3 + 4 * trial, 1 + trial % 7, 5);
    const VectorXd w = lsvi_solve_rorl(data);
    CHECK(test::relative_error(w, test::stacked_least_squares(data)) < 1e-9);
    CHECK(test::relative_error(w, test::minimize_rorl_objective(data)) < 1e-6);
    // Optimality: the objective gradient vanishes and the value is below
    // nearby points.
    CHECK(test::rorl_objective_gradient(data, w).norm() < 1e-8 * (1 + data.y.norm()));
    const double f = lsvi_rorl_objective(data, w);
    CHECK(f <= lsvi_rorl_objective(data, w + 1e-3 * VectorXd::Ones(d)));
  }
}

TEST_CASE("covariance parts match explicit outer-product sums") {
  Rng rng = make_stream(2, 0);
  const LsviData data = test::random_lsvi_data(rng, 5, 12, 4, 7);
  const auto cov = build_covariances(data);
  CHECK((cov.lambda_in - test::outer_sum(data.phi)).norm() < 1e-12);
  CHECK((cov.lambda_ood - test::outer_sum(data.phi_ood)).norm() < 1e-12);
  MatrixXd diff = MatrixXd::Zero(5, 5);
  for (const auto& z : data.diffs) diff += test::outer_sum(z, 1.0 / z.cols());
  CHECK((cov.lambda_ood_diff - diff).norm() < 1e-12);
  CHECK(cov.lambda_tilde == (cov.lambda_in + cov.lambda_ood) + cov.lambda_ood_diff);
  CHECK(cov.min_eigenvalue == doctest::Approx(cov.lambda_tilde.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff()));
}

TEST_CASE("plain ridge regression") {
  Rng rng = make_stream(3, 0);
  const MatrixXd phi = normal_matrix<double>(3, 10, rng);
  const VectorXd y = normal_matrix<double>(10, 1, rng);
  const VectorXd w = lsvi_solve_plain(phi, y, 1.0);
  const MatrixXd a = phi * phi.transpose() + MatrixXd::Identity(3, 3);
  CHECK((a * w - phi * y).norm() < 1e-12);
  CHECK_THROWS_AS(lsvi_solve_plain(phi, y, 0.0), ContractError);
  CHECK_THROWS_AS(lsvi_solve_plain(MatrixXd::Zero(3, 10), y), SingularMatrixError);
}

TEST_CASE("smoothing covariance is definite exactly when differences span") {
  Rng rng = make_stream(4, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 5;
    LsviData spanning;
    spanning.diffs = {normal_matrix<double>(d, d + 2, rng)};
    spanning.phi = MatrixXd::Zero(d, 0);
    CHECK(check_definiteness(spanning).is_pd);

    LsviData flat = spanning;
    const MatrixXd basis = normal_matrix<double>(d, d - 1, rng);
    flat.diffs = {basis * normal_matrix<double>(d - 1, 10, rng)};
    const auto r = check_definiteness(flat);
    CHECK_FALSE(r.is_pd);
    CHECK(r.min_eig <= r.threshold);
  }
}

TEST_CASE("uniform l-inf perturbations give eigenvalues near eps^2 / 3") {
  Rng rng = make_stream(5, 0);
  const double eps = 0.2;
  LsviData data;
  data.phi = MatrixXd::Zero(3, 1);
  data.diffs = {uniform_matrix<double>(3, 10000, -eps, eps, rng)};
  const auto eig = symmetric_eigen(build_covariances(data).lambda_ood_diff);
  CHECK(eig.min() > 0.8 * eps * eps / 3);
  CHECK(eig.max() < 1.2 * eps * eps / 3);
}

TEST_CASE("symmetric_eigen and pd_solve") {
  MatrixXd a(2, 2);
  a << 2, 1, 1, 2;
  const auto e = symmetric_eigen(a);
  CHECK(e.min() == doctest::Approx(1.0));
  CHECK(e.max() == doctest::Approx(3.0));
  const VectorXd x = pd_solve(a, (VectorXd(2) << 3, 3).finished(), "a");
  CHECK(x.isApprox(VectorXd::Ones(2)));
  MatrixXd singular(2, 2);
  singular << 1, 1, 1, 1;
  try {
    pd_solve(singular, VectorXd::Ones(2), "singular");
    FAIL("expected SingularMatrixError");
  } catch (const SingularMatrixError& err) {
    CHECK(std::abs(err.min_eigenvalue()) < 1e-12);
  }
}

TEST_CASE("LCB penalty and the ordering of the two covariances") {
  Rng rng = make_stream(6, 0);
  const MatrixXd g = normal_matrix<double>(4, 4, rng);
  const MatrixXd base = g * g.transpose() + 0.1 * MatrixXd::Identity(4, 4);
  const VectorXd phi = normal_matrix<double>(4, 1, rng);
  CHECK(lcb_penalty(phi, base, 2.0) ==
        doctest::Approx(2.0 * std::sqrt(phi.dot(base.inverse() * phi))).epsilon(1e-12));
  const MatrixXd h = normal_matrix<double>(4, 4, rng);
  const auto cmp = compare_lcb(phi, base, base + h * h.transpose() + 0.01 * MatrixXd::Identity(4, 4), 1.0);
  CHECK(cmp.strict_less);
  CHECK(cmp.gamma_rorl < cmp.gamma_pbrl);
  CHECK(compare_lcb(VectorXd::Zero(4), base, base + MatrixXd::Identity(4, 4), 1.0).gamma_rorl == 0.0);
  CHECK_THROWS_AS(compare_lcb(phi, base, base - 0.05 * MatrixXd::Identity(4, 4), 1.0), ContractError);
}

TEST_CASE("bi-Lipschitz penalty uses Jacobian column norms") {
  Rng rng = make_stream(7, 0);
  const nn::MlpD net = nn::MlpD::random({3, 6, 4}, rng);
  const VectorXd x = normal_matrix<double>(3, 1, rng);
  MatrixXd jac(4, 3);
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < 4; ++r) {
      const auto fr = [&](const VectorXd& v) { return net.forward(v)(r, 0); };
      jac(r, k) = test::finite_difference(fr, x)(k);
    }
  }
  const double c1 = 0.5, c2 = 0.9;
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double gk = jac.col(k).norm();
    expected += std::pow(std::min(gk - c1, 0.0), 2) + std::pow(std::max(gk - c2, 0.0), 2);
  }
  expected /= 3;
  CHECK(bilipschitz_penalty(net, x, c1, c2) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(bilipschitz_penalty(net, x, 1e-9, 1e9) == 0.0);
  CHECK_THROWS_AS(bilipschitz_penalty(net, x, 0.9, 0.5), ContractError);
}

TEST_CASE("linear MDP features, rewards and transitions are well formed") {
  Rng rng = make_stream(8, 0);
  const LinearMdpSpec mdp = random_linear_mdp(4, 3, 9, 3, rng);
  for (int s = 0; s < 9; ++s)
    for (int a = 0; a < 3; ++a) {
      const VectorXd phi = mdp.grid_features(s, a);
      CHECK((phi.array() > 0).all());
      CHECK(phi.sum() == doctest::Approx(1.0));
      const VectorXd p = mdp.transition(mdp.coords.col(s), a);
      CHECK(p.sum() == doctest::Approx(1.0));
      CHECK((p.array() >= 0).all());
      CHECK(mdp.reward(mdp.coords.col(s), a) >= 0.0);
      CHECK(mdp.reward(mdp.coords.col(s), a) <= 1.0);
      const VectorXd v = VectorXd::LinSpaced(9, 0, 2);
      CHECK(mdp.bellman(mdp.coords.col(s), a, v) ==
            doctest::Approx(mdp.reward(mdp.coords.col(s), a) + p.dot(v)));
    }
  // Off-grid points still give valid distributions.
  const VectorXd off = (VectorXd(2) << 0.37, 0.81).finished();
  CHECK(mdp.transition(off, 1).sum() == doctest::Approx(1.0));
}

TEST_CASE("optimal policy and policy evaluation agree with brute force") {
  Rng rng = make_stream(9, 0);
  const LinearMdpSpec mdp = random_linear_mdp(3, 3, 3, 2, rng);
  const auto star = optimal_policy(mdp);
  CHECK(star.values[0](mdp.initial_state) ==
        doctest::Approx(test::brute_force_optimal_value(mdp)).epsilon(1e-12));
  CHECK(evaluate_policy(mdp, star.policy)[0](mdp.initial_state) ==
        doctest::Approx(test::policy_value(mdp, star.policy)).epsilon(1e-12));
  GridPolicy zeros(3, std::vector<int>(3, 0));
  const double sub = suboptimality(mdp, star.policy, zeros);
  CHECK(sub >= 0.0);
  CHECK(sub == doctest::Approx(test::brute_force_optimal_value(mdp) - test::policy_value(mdp, zeros)));
  for (const auto& occ : state_occupancy(mdp, zeros)) CHECK(occ.sum() == doctest::Approx(1.0));
}

TEST_CASE("pessimistic value iteration clips, and a large beta removes violations") {
  Rng rng = make_stream(10, 0);
  const LinearMdpSpec mdp = random_linear_mdp(4, 4, 9, 3, rng);
  Rng data_rng = make_stream(10, 1);
  const auto data = sample_offline_dataset(mdp, 100, 5, 0.1, data_rng);
  CHECK(data.steps.size() == 4u);
  CHECK(data.steps[0].perturbed.cols() == 500);
  CHECK((data.steps[0].perturbed.array() >= -0.1).all());

  const PeviResult res = pessimistic_value_iteration(mdp, data, 1.0);
  for (int t = 0; t < 4; ++t) {
    CHECK((res.values[t].array() >= 0).all());
    CHECK((res.values[t].array() <= 4 - t).all());
    CHECK(symmetric_eigen(res.lambda_tilde[t] - res.lambda_pbrl[t]).min() >= -1e-12);
  }
  CHECK(res.values[4].isZero());
  CHECK(check_xi_quantifier(mdp, data, 50.0) <= 0.0);
  CHECK(check_xi_quantifier(mdp, data, 0.0) > 0.0);
  CHECK(res.xi_violation == doctest::Approx(check_xi_quantifier(mdp, data, 1.0)));
}

TEST_CASE("calibrated beta passes on the calibration draws") {
  Rng rng = make_stream(11, 0);
  const LinearMdpSpec mdp = random_linear_mdp(4, 3, 9, 3, rng);
  CalibrationOptions opts;
  opts.draws = 4;
  opts.bisection_steps = 12;
  opts.m = 100;
  const double beta = calibrate_beta(mdp, opts, 11);
  CHECK(beta > 0.0);
  for (int j = 0; j < 4; ++j) {
    Rng draw = make_stream(11, 1000 + j);
    const auto data = sample_offline_dataset(mdp, opts.m, opts.n_perturb, opts.epsilon, draw);
    CHECK(check_xi_quantifier(mdp, data, beta) <= 0.0);
  }
}
