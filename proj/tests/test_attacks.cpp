#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rorl/algo/agent.hpp"
#include "rorl/attacks/attack.hpp"
#include "rorl/attacks/evaluation.hpp"
#include "rorl/errors.hpp"

using namespace rorl;
using namespace rorl::attacks;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

algo::Agent small_agent(std::uint64_t seed) {
  algo::RorlHyperparams hp;
  hp.ensemble_size = 3;
  hp.hidden = {16, 16};
  Rng rng = make_stream(seed, 0);
  algo::Agent agent = algo::Agent::create(4, 2, hp, rng);
  agent.env_name = "point_mass";
  agent.obs_mean = VectorXd::Zero(4);
  agent.obs_std = VectorXd::Constant(4, 2.0);
  return agent;
}

}  // namespace

TEST_CASE("names parse and print") {
  for (auto k : {AttackKind::random, AttackKind::action_diff, AttackKind::min_q})
    CHECK(parse_attack_kind(to_string(k)) == k);
  for (auto o : {OptimizerKind::zero_order, OptimizerKind::mixed_order})
    CHECK(parse_optimizer(to_string(o)) == o);
  CHECK_THROWS_AS(parse_attack_kind("fgsm"), ConfigError);
  CHECK_THROWS_AS(parse_optimizer("adam"), ConfigError);
}

TEST_CASE("zero radius returns the state untouched without drawing") {
  const auto agent = small_agent(1);
  const VectorXd s = VectorXd::LinSpaced(4, -1, 1);
  for (auto kind : {AttackKind::random, AttackKind::action_diff, AttackKind::min_q})
    for (auto opt : {OptimizerKind::zero_order, OptimizerKind::mixed_order}) {
      AttackSpec spec;
      spec.kind = kind;
      spec.optimizer = opt;
      Rng a = make_stream(2, 0), b = make_stream(2, 0);
      CHECK(attack_state(agent, s, spec, a) == s);
      CHECK(a() == b());
    }
}

TEST_CASE("attack scores") {
  const auto agent = small_agent(3);
  const VectorXd s = VectorXd::LinSpaced(4, -1, 1);
  const VectorXd s_hat = s.array() + 0.05;
  AttackSpec spec;
  spec.kind = AttackKind::action_diff;
  CHECK(attack_score(agent.policy, &agent.critic, s, s_hat, spec) ==
        doctest::Approx(nn::jeffrey_divergence(agent.policy, s, s_hat)));
  spec.kind = AttackKind::min_q;
  const MatrixXd a_hat = agent.policy.deterministic_action(s_hat);
  CHECK(attack_score(agent.policy, &agent.critic, s, s_hat, spec) ==
        doctest::Approx(-agent.critic.mean_q(s, a_hat)(0)));
  CHECK_THROWS_AS(attack_score(agent.policy, nullptr, s, s_hat, spec), CapabilityError);
  spec.kind = AttackKind::random;
  CHECK(attack_score(agent.policy, nullptr, s, s_hat, spec) == 0.0);
}

TEST_CASE("zero-order search picks the first best candidate in the ball") {
  const auto agent = small_agent(4);
  const VectorXd s = VectorXd::LinSpaced(4, -1, 1);
  for (auto kind : {AttackKind::action_diff, AttackKind::min_q}) {
    AttackSpec spec;
    spec.kind = kind;
    spec.epsilon = 0.2;
    spec.num_candidates = 40;
    Rng rng = make_stream(5, 0);
    AttackTrace trace;
    const VectorXd s_hat = attack_state(agent, s, spec, rng, &trace);
    REQUIRE(trace.candidates.cols() == 40);
    int best = 0;
    for (int j = 0; j < 40; ++j) {
      const double score = attack_score(agent.policy, &agent.critic, s, trace.candidates.col(j), spec);
      CHECK(trace.scores(j) == doctest::Approx(score).epsilon(1e-12));
      CHECK((trace.candidates.col(j) - s).cwiseAbs().maxCoeff() <= 0.2);
      if (score > attack_score(agent.policy, &agent.critic, s, trace.candidates.col(best), spec)) best = j;
    }
    CHECK(trace.chosen == best);
    CHECK(s_hat == trace.candidates.col(best));
  }
}

TEST_CASE("mixed-order search stays in the ball and returns the best endpoint") {
  const auto agent = small_agent(6);
  const VectorXd s = VectorXd::LinSpaced(4, -1, 1);
  AttackSpec spec;
  spec.kind = AttackKind::action_diff;
  spec.optimizer = OptimizerKind::mixed_order;
  spec.epsilon = 0.1;
  spec.num_inits = 5;
  spec.num_steps = 8;
  Rng rng = make_stream(7, 0);
  AttackTrace trace;
  const VectorXd s_hat = attack_state(agent, s, spec, rng, &trace);
  REQUIRE(trace.iterates.size() == 9u);
  int best = 0;
  for (const MatrixXd& step : trace.iterates) {
    CHECK(step.cols() == 5);
    CHECK((step.colwise() - s).cwiseAbs().maxCoeff() <= 0.1 + 1e-15);
  }
  CHECK(trace.candidates == trace.iterates.back());
  for (int i = 0; i < 5; ++i) {
    const VectorXd end = trace.candidates.col(i);
    CHECK(trace.scores(i) == doctest::Approx(attack_score(agent.policy, &agent.critic, s, end, spec)));
    if (trace.scores(i) > trace.scores(best)) best = i;
  }
  CHECK(trace.chosen == best);
  CHECK(s_hat == trace.candidates.col(best));
  // Gradient steps should not lose to their own starting points on average.
  double gain = 0.0;
  for (int i = 0; i < 5; ++i)
    gain += trace.scores(i) - attack_score(agent.policy, &agent.critic, s, trace.iterates[0].col(i), spec);
  CHECK(gain > 0.0);
}

TEST_CASE("random attack draws one point in the ball") {
  const auto agent = small_agent(8);
  const VectorXd s = VectorXd::Zero(4);
  AttackSpec spec;
  spec.kind = AttackKind::random;
  spec.epsilon = 0.3;
  Rng rng = make_stream(9, 0);
  const VectorXd s_hat = attack_state(agent.policy, nullptr, s, spec, rng);
  CHECK(s_hat != s);
  CHECK(s_hat.cwiseAbs().maxCoeff() <= 0.3);
}

TEST_CASE("min_q needs a critic") {
  const auto agent = small_agent(10);
  AttackSpec spec;
  spec.kind = AttackKind::min_q;
  spec.epsilon = 0.1;
  Rng rng = make_stream(11, 0);
  CHECK_THROWS_AS(attack_state(agent.policy, nullptr, VectorXd::Zero(4), spec, rng), CapabilityError);
}

TEST_CASE("evaluation under a zero-radius attack equals clean evaluation") {
  const auto agent = small_agent(12);
  const auto env = envs::ToyEnv::point_mass();
  AttackSpec spec;
  spec.kind = AttackKind::action_diff;
  const auto attacked = evaluate_under_attack(agent, env, spec, 3, 13);
  const auto clean = evaluate_clean(agent, env, 3, 13);
  CHECK(attacked.returns == clean.returns);
  CHECK(clean.returns.size() == 3u);
  double mean = 0.0, var = 0.0;
  for (double r : clean.returns) mean += r / 3;
  for (double r : clean.returns) var += (r - mean) * (r - mean) / 3;
  CHECK(clean.mean_return == doctest::Approx(mean));
  CHECK(clean.std_return == doctest::Approx(std::sqrt(var)));
}

TEST_CASE("attack sweeps are kind-major and write CSV") {
  const auto agent = small_agent(14);
  const auto env = envs::ToyEnv::point_mass();
  AttackSpec base;
  base.num_candidates = 4;
  const auto rows = attack_sweep(agent, env, {AttackKind::random, AttackKind::min_q}, {0.0, 0.1}, base, 1, 15);
  REQUIRE(rows.size() == 4u);
  CHECK(rows[0].kind == AttackKind::random);
  CHECK(rows[1].epsilon == 0.1);
  CHECK(rows[2].kind == AttackKind::min_q);
  // Radius 0 is the clean return for every kind.
  CHECK(rows[0].mean == rows[2].mean);

  const auto path = std::filesystem::temp_directory_path() / "rorl_sweep.csv";
  write_sweep_csv(path, rows);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "kind,optimizer,epsilon,mean,std");
  CHECK(first.rfind("random,zero_order,0,", 0) == 0);
}
