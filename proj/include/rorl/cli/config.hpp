#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rorl/algo/hyperparams.hpp"

namespace rorl::cli {

/// Everything a run needs. Config files are flat `key: value` lines; see
/// docs/FORMATS.md for the grammar and the key list.
struct ExperimentConfig {
  // data
  std::string env = "point_mass";
  std::string dataset = "data/point_mass-medium.rorl-ds";
  std::string behavior = "medium";
  long long dataset_size = 100000;
  std::string behavior_checkpoint = "data/point_mass-behavior.mlp";
  int workers = 1;
  int reference_episodes = 20;

  // behavior pretraining (online, plain ensemble actor-critic)
  long long pretrain_max_steps = 60000;
  long long pretrain_warmup = 1000;
  double pretrain_target_score = 50.0;
  int pretrain_ensemble_size = 2;
  long long pretrain_check_interval = 250;
  double pretrain_policy_lr = 3e-4;  // behavior agent only; hp.policy_lr is the offline rate

  // training
  algo::RorlHyperparams hp;
  long long total_steps = 100000;
  long long log_interval = 1000;
  long long eval_interval = 10000;
  int eval_episodes = 5;
  long long checkpoint_interval = 0;  // 0: initial and final only
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  // attack sweeps
  std::vector<std::string> attack_kinds = {"random", "action_diff", "min_q"};
  std::vector<double> attack_epsilons = {0.0, 0.05, 0.1, 0.2};
  std::string attack_optimizer = "zero_order";
  int attack_episodes = 5;
  int attack_candidates = 50;
  int attack_inits = 20;
  int attack_steps = 10;

  // smoothness probe
  std::vector<double> probe_epsilons = {0.0, 0.05, 0.1, 0.2};
  int probe_samples = 1000;

  // theory check
  int theory_seeds = 20;
  int theory_d = 4;
  int theory_horizon = 5;
  int theory_states = 16;
  int theory_actions = 4;
  int theory_m = 200;
  int theory_n_perturb = 5;
  double theory_epsilon = 0.1;
  bool theory_oracle_targets = true;
  int theory_calibration_draws = 16;
  double theory_calibration_margin = 1.5;
};

/// All accepted keys, in echo order.
std::vector<std::string> config_keys();

/// Sets one key. Throws ConfigError for unknown keys (listing the valid
/// ones) and for values that do not parse.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);

/// (key, value text) for every key, in config_keys() order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);

/// Parses `key: value` text. Blank lines and lines starting with '#' are
/// ignored; a repeated key is an error. Missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");

/// Reads and parses a file, applies the RORL_SEED override, and validates.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces config.seed when RORL_SEED is set (ConfigError if malformed).
void apply_env_overrides(ExperimentConfig& config);

/// Range checks for every field; throws ConfigError naming the constraint.
void validate(const ExperimentConfig& config);

/// Resolved config in the same grammar, parseable by parse_config.
std::string render_config(const ExperimentConfig& config);
void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace rorl::cli
