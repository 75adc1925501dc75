#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rorl/algo/agent.hpp"
#include "rorl/attacks/evaluation.hpp"
#include "rorl/cli/config.hpp"
#include "rorl/cli/experiments.hpp"
#include "rorl/envs/dataset.hpp"
#include "rorl/errors.hpp"
#include "rorl/util/text.hpp"

namespace {

using namespace rorl;
using rorl::util::format_real;

/// Options shared by every subcommand, plus flag shortcuts that map onto
/// config keys.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> shortcuts;
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("-c,--config", common.config_path, "config file (flat `key: value` lines)");
  sub->add_option("--set", common.sets, "override one key, as key=value (repeatable)");
}

/// Registers `--flag` as a shortcut for config key `key`.
void shortcut(CLI::App* sub, Common& common, const std::string& flag, const std::string& key,
              const std::string& help) {
  sub->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.shortcuts.emplace_back(key, v); }, help);
}

cli::ExperimentConfig resolve(const Common& common) {
  cli::ExperimentConfig config;
  if (!common.config_path.empty()) {
    std::ifstream in(common.config_path);
    if (!in) throw ConfigError("cannot read config file " + common.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    config = cli::parse_config(buf.str(), common.config_path);
  }
  cli::apply_env_overrides(config);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cli::set_config_value(config, util::trim(kv.substr(0, eq)), util::trim(kv.substr(eq + 1)));
  }
  for (const auto& [key, value] : common.shortcuts) cli::set_config_value(config, key, value);
  cli::validate(config);
  return config;
}

envs::Dataset load_normalized(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("dataset '" + path + "' does not exist; run `rorl gen-data` first");
  envs::Dataset ds = envs::load_dataset(path);
  return ds.normalized ? ds : envs::normalize_observations(ds);
}

/// Re-expresses the dataset in the agent's observation space.
envs::Dataset in_agent_space(const envs::Dataset& raw, const algo::Agent& agent) {
  envs::Dataset ds = raw;
  if (raw.normalized) {
    ds.states = (raw.states.array().colwise() * raw.norm_std.array()).colwise() + raw.norm_mean.array();
    ds.next_states =
        (raw.next_states.array().colwise() * raw.norm_std.array()).colwise() + raw.norm_mean.array();
  }
  ds.states = ((ds.states.colwise() - agent.obs_mean).array().colwise() / agent.obs_std.array()).matrix();
  ds.next_states =
      ((ds.next_states.colwise() - agent.obs_mean).array().colwise() / agent.obs_std.array()).matrix();
  return ds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust offline RL lab: datasets, training, attacks, and linear-MDP checks"};
  app.set_version_flag("--version", std::string(RORL_VERSION));
  app.require_subcommand(1);

  Common gen, pre, train, eval, attack, probe, theory_opts;
  std::string checkpoint, out_csv;
  int episodes = 0;

  auto* gen_cmd = app.add_subcommand("gen-data", "roll out a behavior policy into a dataset file");
  add_common(gen_cmd, gen);
  shortcut(gen_cmd, gen, "--env", "env", "point_mass or spring_pendulum");
  shortcut(gen_cmd, gen, "--behavior", "behavior", "random, medium or mixed");
  shortcut(gen_cmd, gen, "--size", "dataset_size", "number of transitions");
  shortcut(gen_cmd, gen, "--out", "dataset", "dataset path (.rorl-ds)");
  shortcut(gen_cmd, gen, "--seed", "seed", "master seed");
  std::string csv_export;
  gen_cmd->add_option("--csv", csv_export, "also export the dataset as CSV");

  auto* pre_cmd = app.add_subcommand("pretrain-behavior", "train the online agent behind the medium datasets");
  add_common(pre_cmd, pre);
  shortcut(pre_cmd, pre, "--env", "env", "environment");
  shortcut(pre_cmd, pre, "--out", "behavior_checkpoint", "policy checkpoint path");
  shortcut(pre_cmd, pre, "--seed", "seed", "master seed");

  auto* train_cmd = app.add_subcommand("train", "offline training on a dataset");
  add_common(train_cmd, train);
  shortcut(train_cmd, train, "--dataset", "dataset", "dataset path");
  shortcut(train_cmd, train, "--out", "output_dir", "run directory");
  shortcut(train_cmd, train, "--steps", "total_steps", "number of train steps");
  shortcut(train_cmd, train, "--seed", "seed", "master seed");

  auto* eval_cmd = app.add_subcommand("eval", "clean evaluation of a checkpoint");
  add_common(eval_cmd, eval);
  eval_cmd->add_option("--checkpoint", checkpoint, "agent checkpoint directory")->required();
  eval_cmd->add_option("--episodes", episodes, "episodes (default: eval_episodes)");
  shortcut(eval_cmd, eval, "--seed", "seed", "evaluation seed");
  shortcut(eval_cmd, eval, "--dataset", "dataset", "dataset whose reference scores normalize the return");

  auto* attack_cmd = app.add_subcommand("attack", "evaluate a checkpoint under observation attacks");
  add_common(attack_cmd, attack);
  attack_cmd->add_option("--checkpoint", checkpoint, "agent checkpoint directory")->required();
  shortcut(attack_cmd, attack, "--env", "env", "environment");
  shortcut(attack_cmd, attack, "--kinds", "attack_kinds", "comma list of random, action_diff, min_q");
  shortcut(attack_cmd, attack, "--epsilons", "attack_epsilons", "comma list of l-inf radii");
  shortcut(attack_cmd, attack, "--optimizer", "attack_optimizer", "zero_order or mixed_order");
  shortcut(attack_cmd, attack, "--episodes", "attack_episodes", "episodes per cell");
  shortcut(attack_cmd, attack, "--seed", "seed", "evaluation seed");
  attack_cmd->add_option("--out", out_csv, "output CSV")->required();

  auto* probe_cmd = app.add_subcommand("probe-smoothness", "Q change under divergence-maximizing perturbations");
  add_common(probe_cmd, probe);
  probe_cmd->add_option("--checkpoint", checkpoint, "agent checkpoint directory")->required();
  shortcut(probe_cmd, probe, "--dataset", "dataset", "dataset path");
  shortcut(probe_cmd, probe, "--epsilons", "probe_epsilons", "comma list of radii");
  shortcut(probe_cmd, probe, "--samples", "probe_samples", "number of (s, a) pairs");
  shortcut(probe_cmd, probe, "--seed", "seed", "sampling seed");
  probe_cmd->add_option("--out", out_csv, "output CSV")->required();

  auto* theory_cmd = app.add_subcommand("theory-check", "linear-MDP covariance, LCB and PEVI report");
  add_common(theory_cmd, theory_opts);
  shortcut(theory_cmd, theory_opts, "--seeds", "theory_seeds", "number of instances");
  shortcut(theory_cmd, theory_opts, "--seed", "seed", "first instance seed");
  theory_cmd->add_option("--out", out_csv, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      const auto config = resolve(gen);
      const envs::Dataset ds = cli::gen_data(config);
      if (!csv_export.empty()) envs::export_csv(csv_export, ds);
      std::cout << "wrote " << ds.size() << " transitions to " << config.dataset
                << " (random score " << format_real(ds.random_score) << ", expert score "
                << format_real(ds.expert_score) << ")\n";
    } else if (*pre_cmd) {
      const auto config = resolve(pre);
      const auto r = cli::pretrain_behavior(config);
      std::cout << "behavior policy after " << r.steps << " steps: normalized score "
                << format_real(r.normalized_score) << (r.reached_target ? "" : " (target not reached)")
                << "\nsaved to " << config.behavior_checkpoint << "\n";
    } else if (*train_cmd) {
      const auto config = resolve(train);
      const auto r = cli::run_training(config);
      std::cout << "trained " << config.total_steps << " steps; final clean return "
                << format_real(r.final_eval_return) << ", normalized score "
                << format_real(r.final_normalized_score) << "\nrun directory " << config.output_dir << "\n";
    } else if (*eval_cmd) {
      const auto config = resolve(eval);
      const algo::Agent agent = algo::load_agent(checkpoint);
      const envs::ToyEnv env = envs::ToyEnv::make(agent.env_name.empty() ? config.env : agent.env_name);
      const auto r = attacks::evaluate_clean(agent, env, episodes > 0 ? episodes : config.eval_episodes, config.seed);
      std::cout << "mean return " << format_real(r.mean_return) << " std " << format_real(r.std_return);
      if (std::filesystem::exists(config.dataset)) {
        const envs::Dataset ds = envs::load_dataset(config.dataset);
        std::cout << " normalized score "
                  << format_real(envs::normalized_score(r.mean_return, ds.random_score, ds.expert_score));
      }
      std::cout << "\n";
    } else if (*attack_cmd) {
      const auto config = resolve(attack);
      const algo::Agent agent = algo::load_agent(checkpoint);
      const envs::ToyEnv env = envs::ToyEnv::make(agent.env_name.empty() ? config.env : agent.env_name);
      std::vector<attacks::AttackKind> kinds;
      for (const auto& k : config.attack_kinds) kinds.push_back(attacks::parse_attack_kind(k));
      const auto rows = attacks::attack_sweep(agent, env, kinds, config.attack_epsilons,
                                              cli::attack_template(config), config.attack_episodes,
                                              config.seed);
      attacks::write_sweep_csv(out_csv, rows);
      std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
    } else if (*probe_cmd) {
      const auto config = resolve(probe);
      const algo::Agent agent = algo::load_agent(checkpoint);
      const envs::Dataset ds = in_agent_space(load_normalized(config.dataset), agent);
      const auto rows = cli::run_smoothness_probe(agent, ds, config.probe_epsilons,
                                                  config.probe_samples, config.seed);
      cli::write_probe_csv(out_csv, rows);
      std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
    } else if (*theory_cmd) {
      const auto config = resolve(theory_opts);
      const auto rows = cli::run_theory_check(config);
      cli::write_theory_csv(out_csv, rows);
      int bound_held = 0;
      for (const auto& r : rows) bound_held += r.subopt <= r.bound;
      std::cout << "wrote " << rows.size() << " rows to " << out_csv << "; suboptimality bound held on "
                << bound_held << "/" << rows.size() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n" << e.snapshot() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
