#include "rorl/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "rorl/errors.hpp"
#include "rorl/nn/checkpoint.hpp"
#include "rorl/util/text.hpp"

namespace rorl::cli {

namespace fs = std::filesystem;
using util::format_real;

namespace {

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

/// Fixed-capacity transition store for online pretraining.
struct ReplayBuffer {
  algo::Batch data;
  Eigen::Index count = 0;

  ReplayBuffer(int state_dim, int action_dim, Eigen::Index capacity) {
    data.states.resize(state_dim, capacity);
    data.actions.resize(action_dim, capacity);
    data.rewards.resize(capacity);
    data.next_states.resize(state_dim, capacity);
    data.dones.resize(capacity);
  }

  void add(const Eigen::VectorXd& s, const Eigen::VectorXd& a, double r, const Eigen::VectorXd& s2,
           bool terminal) {
    const Eigen::Index i = count % data.states.cols();
    data.states.col(i) = s;
    data.actions.col(i) = a;
    data.rewards(i) = r;
    data.next_states.col(i) = s2;
    data.dones(i) = terminal ? 1.0 : 0.0;
    ++count;
  }

  algo::Batch sample(int batch_size, Rng& rng) const {
    const Eigen::Index filled = std::min<Eigen::Index>(count, data.states.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, filled - 1);
    algo::Batch b;
    b.states.resize(data.states.rows(), batch_size);
    b.actions.resize(data.actions.rows(), batch_size);
    b.rewards.resize(batch_size);
    b.next_states.resize(data.states.rows(), batch_size);
    b.dones.resize(batch_size);
    for (int j = 0; j < batch_size; ++j) {
      const Eigen::Index i = pick(rng);
      b.states.col(j) = data.states.col(i);
      b.actions.col(j) = data.actions.col(i);
      b.rewards(j) = data.rewards(i);
      b.next_states.col(j) = data.next_states.col(i);
      b.dones(j) = data.dones(i);
    }
    return b;
  }
};

std::string metrics_row(const algo::TrainMetrics& m, long long step, const std::string& eval) {
  return std::to_string(step) + "," + format_real(m.td_loss) + "," + format_real(m.smooth_loss) +
         "," + format_real(m.ood_loss) + "," + format_real(m.policy_loss) + "," +
         format_real(m.mean_u) + "," + format_real(m.lambda) + "," + eval + "\n";
}

}  // namespace

attacks::AttackSpec attack_template(const ExperimentConfig& config) {
  attacks::AttackSpec spec;
  spec.optimizer = attacks::parse_optimizer(config.attack_optimizer);
  spec.num_candidates = config.attack_candidates;
  spec.num_inits = config.attack_inits;
  spec.num_steps = config.attack_steps;
  return spec;
}

envs::Dataset gen_data(const ExperimentConfig& config) {
  const envs::ToyEnv env = envs::ToyEnv::make(config.env);
  const envs::Behavior behavior = envs::parse_behavior(config.behavior);
  envs::GenerateOptions options;
  if (behavior != envs::Behavior::random) options.behavior_checkpoint = config.behavior_checkpoint;
  options.workers = config.workers;
  options.reference_episodes = config.reference_episodes;
  envs::Dataset ds = envs::generate_dataset(env, behavior, config.dataset_size, config.seed, options);
  ensure_parent(config.dataset);
  envs::save_dataset(config.dataset, ds);
  return ds;
}

PretrainResult pretrain_behavior(const ExperimentConfig& config) {
  const envs::ToyEnv env = envs::ToyEnv::make(config.env);
  algo::RorlHyperparams hp = config.hp;
  hp.alpha = hp.alpha2 = hp.beta = 0.0;
  hp.ensemble_size = config.pretrain_ensemble_size;
  hp.policy_lr = config.pretrain_policy_lr;
  if (hp.ensemble_size < 2 && hp.ood_target == algo::OodTarget::min) hp.ood_target = algo::OodTarget::minus;
  Rng init_rng = make_stream(config.seed, 0);
  algo::Agent agent = algo::Agent::create(env.state_dim, env.action_dim, hp, init_rng);
  agent.env_name = env.name();
  const envs::ReferenceScores refs =
      envs::measure_reference_scores(env, config.reference_episodes, config.seed);

  Rng rng = make_stream(config.seed, 1);
  const envs::ActionFn random_action = envs::uniform_random_actions(env);
  const long long capacity = std::max<long long>(1, std::min<long long>(config.pretrain_max_steps, 1'000'000));
  ReplayBuffer buffer(env.state_dim, env.action_dim, capacity);
  const long long check_every = config.pretrain_check_interval;

  PretrainResult result;
  Eigen::VectorXd s = envs::env_reset(env, rng);
  int t = 0;
  for (long long step = 0; step < config.pretrain_max_steps; ++step) {
    const Eigen::VectorXd a = step < config.pretrain_warmup
                                  ? random_action(s, rng)
                                  : Eigen::VectorXd(agent.policy.sample(s, rng).action.col(0));
    const envs::StepResult out = envs::env_step(env, s, a, t, rng);
    buffer.add(s, a, out.reward, out.s_next, out.terminal);
    s = out.s_next;
    ++t;
    if (out.done) {
      s = envs::env_reset(env, rng);
      t = 0;
    }
    if (step >= config.pretrain_warmup && buffer.count >= hp.batch_size)
      algo::train_step(agent, buffer.sample(hp.batch_size, rng), rng);
    result.steps = step + 1;
    if ((step + 1) % check_every == 0 && step >= config.pretrain_warmup) {
      const double ret = attacks::evaluate_clean(agent, env, config.eval_episodes, config.seed).mean_return;
      result.normalized_score = envs::normalized_score(ret, refs.random_score, refs.expert_score);
      std::cout << "pretrain step " << step + 1 << " normalized score "
                << format_real(result.normalized_score) << std::endl;
      if (result.normalized_score >= config.pretrain_target_score) {
        result.reached_target = true;
        break;
      }
    }
  }
  ensure_parent(config.behavior_checkpoint);
  nn::save_mlp(config.behavior_checkpoint, agent.policy.trunk());
  return result;
}

TrainingResult run_training(const ExperimentConfig& config) {
  const fs::path path = config.dataset;
  if (!fs::exists(path))
    throw ConfigError("dataset '" + config.dataset + "' does not exist; run `rorl gen-data` first");
  return run_training(config, envs::load_dataset(path));
}

TrainingResult run_training(const ExperimentConfig& config, const envs::Dataset& raw) {
  const envs::Dataset dataset = raw.normalized ? raw : envs::normalize_observations(raw);
  const envs::ToyEnv env = envs::ToyEnv::make(dataset.env_name.empty() ? config.env : dataset.env_name);
  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  write_resolved_config(out_dir / "config.resolved", config);
  {
    std::ofstream prov(out_dir / "provenance.txt");
    prov << "version: " << RORL_VERSION << "\nseed: " << config.seed
         << "\ndataset: " << config.dataset << "\nenv: " << env.name() << "\n";
  }

  Rng init_rng = make_stream(config.seed, 0);
  TrainingResult result{algo::Agent::create(dataset.state_dim(), dataset.action_dim(), config.hp, init_rng),
                        {}, 0.0, 0.0};
  algo::Agent& agent = result.agent;
  agent.env_name = env.name();
  agent.obs_mean = dataset.norm_mean;
  agent.obs_std = dataset.norm_std;

  std::ofstream csv(out_dir / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
  csv << "step,td_loss,smooth_loss,ood_loss,policy_loss,mean_u,lambda,eval_return\n";
  algo::save_agent(out_dir / "checkpoint", agent);

  Rng rng = make_stream(config.seed, 1);
  for (long long step = 0; step < config.total_steps; ++step) {
    algo::TrainMetrics m;
    try {
      m = algo::train_step(agent, dataset, rng);
    } catch (const NumericAbort& abort) {
      std::ofstream diag(out_dir / "abort.txt");
      diag << abort.what() << "\n" << abort.snapshot() << "\n";
      algo::save_agent(out_dir / "abort-checkpoint", agent);
      throw;
    }
    const long long done = step + 1;
    const bool evaluate = (config.eval_interval > 0 && done % config.eval_interval == 0) ||
                          done == config.total_steps;
    std::string eval_text;
    if (evaluate) {
      result.final_eval_return =
          attacks::evaluate_clean(agent, env, config.eval_episodes, config.seed).mean_return;
      eval_text = format_real(result.final_eval_return);
    }
    if (evaluate || done % config.log_interval == 0) {
      csv << metrics_row(m, done, eval_text);
      csv.flush();
      result.metrics.push_back(m);
    }
    if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0)
      algo::save_agent(out_dir / ("checkpoint-" + std::to_string(done)), agent);
  }
  if (config.total_steps > 0) {
    algo::save_agent(out_dir / "checkpoint", agent);
    if (dataset.expert_score != dataset.random_score)
      result.final_normalized_score = envs::normalized_score(
          result.final_eval_return, dataset.random_score, dataset.expert_score);
  }
  return result;
}

std::vector<ProbeRow> run_smoothness_probe(const algo::Agent& agent, const envs::Dataset& dataset,
                                           const std::vector<double>& epsilons, int samples,
                                           std::uint64_t seed) {
  if (samples < 1 || dataset.size() == 0) throw ContractError("run_smoothness_probe: need samples and data");
  Rng pick_rng = make_stream(seed, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, dataset.size() - 1);
  Eigen::MatrixXd states(dataset.state_dim(), samples);
  Eigen::MatrixXd actions(dataset.action_dim(), samples);
  for (int i = 0; i < samples; ++i) {
    const Eigen::Index j = pick(pick_rng);
    states.col(i) = dataset.states.col(j);
    actions.col(i) = dataset.actions.col(j);
  }
  const Eigen::VectorXd q_clean = agent.critic.mean_q(states, actions);

  std::vector<ProbeRow> rows;
  for (double eps : epsilons) {
    attacks::AttackSpec spec;
    spec.kind = attacks::AttackKind::action_diff;
    spec.epsilon = eps;
    // The same stream for every radius: candidates are the same unit draws
    // scaled by epsilon, so the sweep compares nested balls.
    Rng attack_rng = make_stream(seed, 1);
    Eigen::MatrixXd perturbed(states.rows(), samples);
    for (int i = 0; i < samples; ++i)
      perturbed.col(i) = attacks::attack_state(agent, states.col(i), spec, attack_rng);
    const Eigen::VectorXd dq = (agent.critic.mean_q(perturbed, actions) - q_clean).cwiseAbs();
    std::vector<double> v(dq.data(), dq.data() + dq.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    rows.push_back({eps, median, v.back()});
  }
  return rows;
}

void write_probe_csv(const fs::path& path, const std::vector<ProbeRow>& rows) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epsilon,median_abs_dq,max_abs_dq\n";
  for (const auto& r : rows)
    out << format_real(r.epsilon) << ',' << format_real(r.median_abs_dq) << ','
        << format_real(r.max_abs_dq) << '\n';
}

std::vector<theory::TheoryRow> run_theory_check(const ExperimentConfig& config) {
  theory::CalibrationOptions options;
  options.draws = config.theory_calibration_draws;
  options.margin = config.theory_calibration_margin;
  options.m = config.theory_m;
  options.n_perturb = config.theory_n_perturb;
  options.epsilon = config.theory_epsilon;
  options.mode.oracle_ood = config.theory_oracle_targets;
  std::vector<theory::TheoryRow> rows;
  for (int i = 0; i < config.theory_seeds; ++i)
    rows.push_back(theory::run_theory_instance(config.seed + static_cast<std::uint64_t>(i), config.theory_d,
                                               config.theory_horizon, config.theory_states,
                                               config.theory_actions, options));
  return rows;
}

void write_theory_csv(const fs::path& path, const std::vector<theory::TheoryRow>& rows) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "seed,ood_targets,beta,min_eig,gamma_rorl,gamma_pbrl,xi_violation,subopt,bound\n";
  for (const auto& r : rows)
    out << r.seed << ',' << (r.oracle_ood ? "oracle" : "algorithmic") << ',' << format_real(r.beta)
        << ',' << format_real(r.min_eig) << ',' << format_real(r.gamma_rorl) << ','
        << format_real(r.gamma_pbrl) << ',' << format_real(r.xi_violation) << ','
        << format_real(r.subopt) << ',' << format_real(r.bound) << '\n';
}

}  // namespace rorl::cli
