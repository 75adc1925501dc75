#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rorl/algo/agent.hpp"
#include "rorl/attacks/evaluation.hpp"
#include "rorl/cli/config.hpp"
#include "rorl/theory/linear_mdp.hpp"

namespace rorl::cli {

/// Generates config.dataset from config.env / behavior / dataset_size / seed.
envs::Dataset gen_data(const ExperimentConfig& config);

struct PretrainResult {
  long long steps = 0;
  double normalized_score = 0.0;
  bool reached_target = false;
};

/// Online plain actor-critic on raw observations until the clean normalized
/// score reaches pretrain_target_score (checked every
/// pretrain_check_interval steps). Saves the policy trunk to
/// config.behavior_checkpoint.
PretrainResult pretrain_behavior(const ExperimentConfig& config);

struct TrainingResult {
  algo::Agent agent;
  std::vector<algo::TrainMetrics> metrics;  // one per logged step
  double final_eval_return = 0.0;
  double final_normalized_score = 0.0;
};

/// Loads and normalizes config.dataset, trains for total_steps, and writes
/// into output_dir: config.resolved, provenance.txt, metrics.csv, and
/// checkpoints under checkpoint/ (plus checkpoint-<step>/ at the cadence).
TrainingResult run_training(const ExperimentConfig& config);

/// Same loop on an in-memory dataset (already normalized or not).
TrainingResult run_training(const ExperimentConfig& config, const envs::Dataset& dataset);

struct ProbeRow {
  double epsilon = 0.0;
  double median_abs_dq = 0.0;
  double max_abs_dq = 0.0;
};

/// For `samples` dataset pairs (s, a) drawn with `seed`, finds the D_J-
/// maximizing s_hat among 50 zero-order candidates at each epsilon and
/// records |Qbar(s_hat, a) - Qbar(s, a)| with the ensemble mean Qbar. The
/// dataset must be in the agent's observation space.
std::vector<ProbeRow> run_smoothness_probe(const algo::Agent& agent, const envs::Dataset& dataset,
                                           const std::vector<double>& epsilons, int samples,
                                           std::uint64_t seed);
void write_probe_csv(const std::filesystem::path& path, const std::vector<ProbeRow>& rows);

/// Seeds config.seed .. config.seed + theory_seeds - 1.
std::vector<theory::TheoryRow> run_theory_check(const ExperimentConfig& config);
void write_theory_csv(const std::filesystem::path& path, const std::vector<theory::TheoryRow>& rows);

/// Attack spec template from the attack_* keys (kind and epsilon unset).
attacks::AttackSpec attack_template(const ExperimentConfig& config);

}  // namespace rorl::cli
