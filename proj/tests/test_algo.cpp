#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rorl/algo/agent.hpp"
#include "rorl/algo/critic.hpp"
#include "rorl/algo/hyperparams.hpp"
#include "rorl/algo/losses.hpp"
#include "rorl/errors.hpp"
#include "test_support.hpp"

using namespace rorl;
using namespace rorl::algo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RorlHyperparams small_hp() {
  RorlHyperparams hp;
  hp.ensemble_size = 3;
  hp.batch_size = 6;
  hp.hidden = {16, 16};
  hp.n_perturb = 5;
  hp.alpha = 0.7;
  hp.alpha2 = 0.9;
  hp.beta = 0.4;
  hp.eps_q = 0.2;
  hp.eps_p = 0.2;
  hp.eps_ood = 0.3;
  return hp;
}

Batch random_batch(int sd, int ad, int size, Rng& rng) {
  Batch b;
  b.states = normal_matrix<double>(sd, size, rng);
  b.actions = uniform_matrix<double>(ad, size, -0.9, 0.9, rng);
  b.rewards = normal_matrix<double>(size, 1, rng);
  b.next_states = normal_matrix<double>(sd, size, rng);
  b.dones = VectorXd::Zero(size);
  b.dones(1) = 1.0;
  return b;
}

envs::Dataset random_dataset(int sd, int ad, int size, Rng& rng) {
  const Batch b = random_batch(sd, ad, size, rng);
  envs::Dataset ds;
  ds.env_name = "point_mass";
  ds.states = b.states;
  ds.actions = b.actions;
  ds.rewards = b.rewards;
  ds.next_states = b.next_states;
  ds.dones = b.dones.array() > 0.5;
  ds.norm_mean = VectorXd::Zero(sd);
  ds.norm_std = VectorXd::Ones(sd);
  return ds;
}

}  // namespace

TEST_CASE("asymmetric penalty, uncertainty and lambda schedule arithmetic") {
  CHECK(asymmetric_penalty(2.0, 0.2) == doctest::Approx(3.2).epsilon(1e-15));
  CHECK(asymmetric_penalty(-2.0, 0.2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(asymmetric_penalty(0.0, 0.2) == 0.0);

  MatrixXd q(3, 1);
  q << 1, 2, 3;
  CHECK(std::abs(ensemble_uncertainty(q)(0) - std::sqrt(2.0 / 3.0)) < 1e-12);

  RorlHyperparams hp;
  hp.lambda_start = 1.0;
  hp.lambda_end = 0.1;
  hp.lambda_decay_pace = 1e-6;
  CHECK(std::abs(decay_lambda(hp, 0) - 1.0) < 1e-12);
  CHECK(std::abs(decay_lambda(hp, 450000) - 0.55) < 1e-12);
  CHECK(std::abs(decay_lambda(hp, 5000000) - 0.1) < 1e-12);
}

TEST_CASE("scalar soft Q target") {
  CHECK(soft_q_target(1.0, false, 2.0, -0.5, 0.9, 0.2) == doctest::Approx(1.0 + 0.9 * 2.1));
  CHECK(soft_q_target(1.0, true, 2.0, -0.5, 0.9, 0.2) == 1.0);
}

TEST_CASE("perturbation sampling stays in the ball and radius 0 leaves rng alone") {
  Rng rng = make_stream(1, 0);
  const VectorXd c = (VectorXd(3) << 0.5, -1.0, 2.0).finished();
  const MatrixXd draws = sample_perturbations(PerturbationBall{c, 0.1}, 200, rng);
  CHECK((draws.colwise() - c).cwiseAbs().maxCoeff() <= 0.1);

  Rng a = make_stream(2, 0), b = make_stream(2, 0);
  const MatrixXd same = sample_perturbations(PerturbationBall{c, 0.0}, 4, a);
  CHECK((same.colwise() - c).isZero(0.0));
  CHECK(a() == b());

  // Batched draws equal per-center draws in order.
  const MatrixXd centers = normal_matrix<double>(3, 4, rng);
  Rng r1 = make_stream(3, 0), r2 = make_stream(3, 0);
  const MatrixXd batched = sample_perturbations(centers, 0.05, 6, r1);
  for (int j = 0; j < 4; ++j)
    CHECK(batched.middleCols(j * 6, 6) ==
          sample_perturbations(PerturbationBall{centers.col(j), 0.05}, 6, r2));
}

TEST_CASE("batched soft Q target equals a hand computation with the same draws") {
  Rng rng = make_stream(4, 0);
  const auto hp = small_hp();
  const PolicyD policy = PolicyD::random(4, 2, hp.hidden, rng);
  const EnsembleCritic critic = EnsembleCritic::random(4, 2, 3, hp.hidden, rng);
  const Batch batch = random_batch(4, 2, 6, rng);
  Rng r1 = make_stream(5, 0), r2 = make_stream(5, 0);
  const VectorXd y = soft_q_target(critic, policy, batch, 0.97, 0.3, r1);

  const auto draw = policy.sample(batch.next_states, r2);
  for (int b = 0; b < 6; ++b) {
    double min_q = INFINITY;
    for (int k = 0; k < 3; ++k)
      min_q = std::min(min_q, critic.targets[k].forward(critic_input(batch.next_states.col(b),
                                                                     draw.action.col(b)))(0, 0));
    const double expected = soft_q_target(batch.rewards(b), batch.dones(b) > 0.5, min_q,
                                          draw.log_prob(b), 0.97, 0.3);
    CHECK(y(b) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("smoothing argmax matches exhaustive enumeration") {
  Rng rng = make_stream(6, 0);
  auto hp = small_hp();
  hp.n_perturb = 7;
  const EnsembleCritic critic = EnsembleCritic::random(4, 2, 1, {16, 16}, rng);
  const Batch batch = random_batch(4, 2, 5, rng);
  SmoothingTrace trace;
  Rng draw_rng = make_stream(7, 0);
  const double loss = smoothing_loss(critic.members[0], batch.states, batch.actions, hp, draw_rng,
                                     nullptr, &trace);
  double total = 0.0;
  for (int b = 0; b < 5; ++b) {
    const double q0 = critic.members[0].forward(critic_input(batch.states.col(b), batch.actions.col(b)))(0, 0);
    int best = -1;
    double best_pen = -INFINITY;
    for (int j = 0; j < 7; ++j) {
      const VectorXd s_hat = trace.candidates.col(b * 7 + j);
      CHECK((s_hat - batch.states.col(b)).cwiseAbs().maxCoeff() <= hp.eps_q);
      const double q = critic.members[0].forward(critic_input(s_hat, batch.actions.col(b)))(0, 0);
      const double pen = asymmetric_penalty(q - q0, hp.tau_asym);
      if (pen > best_pen) {
        best_pen = pen;
        best = j;
      }
    }
    CHECK(trace.chosen[b] == best);
    total += best_pen;
  }
  CHECK(loss == doctest::Approx(total / 5).epsilon(1e-12));
}

TEST_CASE("critic loss gradient matches finite differences") {
  Rng rng = make_stream(8, 0);
  const auto hp = small_hp();
  const PolicyD policy = PolicyD::random(4, 2, hp.hidden, rng);
  EnsembleCritic critic = EnsembleCritic::random(4, 2, 3, hp.hidden, rng);
  const Batch batch = random_batch(4, 2, 6, rng);
  const VectorXd targets = normal_matrix<double>(6, 1, rng);

  for (auto kind : {OodTarget::minus, OodTarget::min}) {
    auto h = hp;
    h.ood_target = kind;
    Rng ood_rng = make_stream(9, 0);
    const OodSamples ood = sample_ood(critic, policy, batch.states, h, ood_rng);
    const Rng loss_rng = make_stream(10, 0);
    const auto loss_at = [&](const VectorXd& p) {
      EnsembleCritic probe = critic;
      probe.members[1].params() = p;
      Rng r = loss_rng;
      return critic_loss(probe, 1, batch, targets, &ood, h, 0.6, r).total;
    };
    VectorXd grad = VectorXd::Zero(critic.members[1].num_params());
    Rng r = loss_rng;
    const auto terms = critic_loss(critic, 1, batch, targets, &ood, h, 0.6, r, &grad);
    CHECK(terms.smooth > 0.0);
    CHECK(terms.ood > 0.0);
    CHECK(terms.total == doctest::Approx(loss_at(critic.members[1].params())).epsilon(1e-15));
    CHECK(test::relative_error(grad, test::finite_difference(loss_at, critic.members[1].params())) <
          1e-4);
  }
}

TEST_CASE("policy loss gradient matches finite differences") {
  Rng rng = make_stream(11, 0);
  const auto hp = small_hp();
  PolicyD policy = PolicyD::random(4, 2, hp.hidden, rng);
  const EnsembleCritic critic = EnsembleCritic::random(4, 2, 3, hp.hidden, rng);
  const MatrixXd states = normal_matrix<double>(4, 6, rng);
  const Rng loss_rng = make_stream(12, 0);
  const auto loss_at = [&](const VectorXd& p) {
    PolicyD probe = policy;
    probe.trunk().params() = p;
    Rng r = loss_rng;
    return policy_loss(probe, critic, states, hp, 0.25, r).total;
  };
  VectorXd grad = VectorXd::Zero(policy.trunk().num_params());
  Rng r = loss_rng;
  const auto terms = policy_loss(policy, critic, states, hp, 0.25, r, &grad);
  CHECK(terms.divergence > 0.0);
  CHECK(test::relative_error(grad, test::finite_difference(loss_at, policy.trunk().params())) < 1e-4);
}

TEST_CASE("zero robustness weights reproduce the plain ensemble actor-critic losses exactly") {
  Rng rng = make_stream(13, 0);
  auto hp = small_hp();
  hp.alpha = hp.alpha2 = hp.beta = 0.0;
  const PolicyD policy = PolicyD::random(4, 2, hp.hidden, rng);
  const EnsembleCritic critic = EnsembleCritic::random(4, 2, 3, hp.hidden, rng);
  const Batch batch = random_batch(4, 2, 6, rng);
  const VectorXd targets = normal_matrix<double>(6, 1, rng);

  Rng r1 = make_stream(14, 0), r2 = make_stream(14, 0);
  for (int k = 0; k < 3; ++k) {
    const auto terms = critic_loss(critic, k, batch, targets, nullptr, hp, 1.0, r1);
    const VectorXd q = critic.members[k].forward(critic_input(batch.states, batch.actions)).row(0).transpose();
    CHECK(terms.total == (q - targets).squaredNorm() / 6.0);
    CHECK(terms.smooth == 0.0);
    CHECK(terms.ood == 0.0);
  }
  const auto pterms = policy_loss(policy, critic, batch.states, hp, 0.3, r1);
  const auto draw = policy.sample(batch.states, r2);
  const MatrixXd qa = critic.q_values(batch.states, draw.action);
  VectorXd min_q(qa.cols());
  for (Eigen::Index b = 0; b < qa.cols(); ++b) min_q(b) = qa.col(b).minCoeff();
  const double expected = -min_q.mean() + 0.3 * draw.log_prob.mean();
  CHECK(pterms.total == expected);
  // Neither loss consumed extra draws.
  CHECK(r1() == r2());
}

TEST_CASE("smoothing radius is irrelevant when alpha = 0 across whole train steps") {
  RorlHyperparams hp = small_hp();
  hp.alpha = hp.alpha2 = hp.beta = 0.0;
  Rng data_rng = make_stream(15, 0);
  const auto ds = random_dataset(4, 2, 50, data_rng);
  auto run = [&](double eps) {
    auto h = hp;
    h.eps_q = eps;
    h.eps_p = eps;
    Rng init = make_stream(16, 0);
    Agent agent = Agent::create(4, 2, h, init);
    agent.obs_mean = VectorXd::Zero(4);
    agent.obs_std = VectorXd::Ones(4);
    Rng rng = make_stream(16, 1);
    TrainMetrics m;
    for (int i = 0; i < 5; ++i) m = train_step(agent, ds, rng);
    return std::make_pair(m, agent.policy.trunk().params());
  };
  const auto [m1, p1] = run(0.01);
  const auto [m2, p2] = run(0.5);
  CHECK(m1.td_loss == m2.td_loss);
  CHECK(m1.policy_loss == m2.policy_loss);
  CHECK(p1 == p2);
}

TEST_CASE("ood pseudo targets") {
  OodSamples ood;
  ood.member_q.resize(2, 3);
  ood.member_q << 1, 2, 3, 0, 5, 1;
  ood.uncertainty = ensemble_uncertainty(ood.member_q);
  ood.min_q = ood.member_q.colwise().minCoeff().transpose();
  const VectorXd minus = ood_pseudo_target(ood, 0, OodTarget::minus, 0.5);
  CHECK(minus(0) == doctest::Approx(1 - 0.5 * 0.5));
  CHECK(minus(1) == doctest::Approx(2 - 0.5 * 1.5));
  CHECK(ood_pseudo_target(ood, 1, OodTarget::min, 0.5) == (VectorXd(3) << 0, 2, 1).finished());
  OodSamples single;
  single.member_q = MatrixXd::Ones(1, 3);
  CHECK_THROWS_AS(ood_pseudo_target(single, 0, OodTarget::min, 0.5), ConfigError);
}

TEST_CASE("one terminal transition drives Q to its reward") {
  RorlHyperparams hp;
  hp.ensemble_size = 2;
  hp.batch_size = 1;
  hp.hidden = {16};
  hp.alpha = hp.alpha2 = hp.beta = 0.0;
  hp.critic_lr = 3e-3;
  envs::Dataset ds;
  ds.states = (MatrixXd(2, 1) << 0.5, -0.25).finished();
  ds.actions = (MatrixXd(1, 1) << 0.3).finished();
  ds.rewards = (VectorXd(1) << 1.7).finished();
  ds.next_states = (MatrixXd(2, 1) << 0.1, 0.1).finished();
  ds.dones = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(1, true);
  Rng init = make_stream(17, 0);
  Agent agent = Agent::create(2, 1, hp, init);
  Rng rng = make_stream(17, 1);
  for (int i = 0; i < 3000; ++i) train_step(agent, ds, rng);
  const MatrixXd q = agent.critic.q_values(ds.states, ds.actions);
  CHECK((q.array() - 1.7).abs().maxCoeff() < 1e-3);
}

TEST_CASE("training is deterministic and resumes bit-exactly from a checkpoint") {
  const auto hp = small_hp();
  Rng data_rng = make_stream(18, 0);
  const auto ds = random_dataset(4, 2, 64, data_rng);
  Rng init = make_stream(19, 0);
  Agent a = Agent::create(4, 2, hp, init);
  a.env_name = "point_mass";
  a.obs_mean = VectorXd::Zero(4);
  a.obs_std = VectorXd::Ones(4);
  Rng rng = make_stream(19, 1);
  for (int i = 0; i < 3; ++i) train_step(a, ds, rng);

  const auto dir = std::filesystem::temp_directory_path() / "rorl_test_agent";
  std::filesystem::remove_all(dir);
  save_agent(dir, a);
  Agent b = load_agent(dir);
  CHECK(b.step == 3);
  CHECK(b.env_name == "point_mass");
  CHECK(b.hp.alpha == hp.alpha);

  Rng ra = make_stream(20, 0), rb = make_stream(20, 0);
  const auto ma = train_step(a, ds, ra);
  const auto mb = train_step(b, ds, rb);
  CHECK(ma.td_loss == mb.td_loss);
  CHECK(ma.policy_loss == mb.policy_loss);
  CHECK(a.policy.trunk().params() == b.policy.trunk().params());
  for (int k = 0; k < hp.ensemble_size; ++k) {
    CHECK(a.critic.members[k].params() == b.critic.members[k].params());
    CHECK(a.critic.targets[k].params() == b.critic.targets[k].params());
  }
  CHECK(a.log_c == b.log_c);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite losses abort with a snapshot") {
  const auto hp = small_hp();
  Rng data_rng = make_stream(21, 0);
  auto ds = random_dataset(4, 2, 8, data_rng);
  ds.rewards.setConstant(std::nan(""));
  Rng init = make_stream(21, 1);
  Agent agent = Agent::create(4, 2, hp, init);
  const VectorXd before = agent.critic.members[0].params();
  Rng rng = make_stream(21, 2);
  try {
    train_step(agent, ds, rng);
    FAIL("expected NumericAbort");
  } catch (const NumericAbort& e) {
    CHECK_FALSE(e.snapshot().empty());
  }
  CHECK(agent.critic.members[0].params() == before);
}

TEST_CASE("hyperparameters validate and round-trip through text") {
  RorlHyperparams hp = small_hp();
  hp.target_entropy = -1.5;
  hp.ood_target = OodTarget::min;
  RorlHyperparams back;
  for (const auto& [k, v] : hyperparam_entries(hp)) CHECK(set_hyperparam(back, k, v));
  CHECK(hyperparam_entries(back) == hyperparam_entries(hp));
  CHECK_FALSE(set_hyperparam(back, "no_such_key", "1"));
  CHECK_THROWS_AS(set_hyperparam(back, "alpha", "abc"), ConfigError);

  RorlHyperparams bad;
  bad.ensemble_size = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = RorlHyperparams{};
  bad.tau_asym = 1.5;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = RorlHyperparams{};
  bad.eps_q = -0.1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("automatic entropy tuning moves log c against the entropy gap") {
  RorlHyperparams hp = small_hp();
  hp.alpha = hp.alpha2 = hp.beta = 0.0;
  hp.entropy_lr = 0.1;
  Rng data_rng = make_stream(22, 0);
  const auto ds = random_dataset(4, 2, 32, data_rng);
  Rng init = make_stream(22, 1);
  Agent agent = Agent::create(4, 2, hp, init);
  CHECK(agent.target_entropy() == -2.0);
  Rng rng = make_stream(22, 2);
  const double before = agent.log_c;
  const auto m = train_step(agent, ds, rng);
  (void)m;
  // Fresh policies have entropy well above -action_dim, so c shrinks.
  CHECK(agent.log_c < before);
}
