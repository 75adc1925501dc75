#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rorl/attacks/attack.hpp"
#include "rorl/envs/toy_env.hpp"

namespace rorl::attacks {

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;  // population standard deviation
  std::vector<double> returns;
};

/// The agent acts deterministically on the attacked, normalized observation
/// while the environment advances from the true state. Episode e uses
/// make_stream(seed, e) for the environment and a separate stream for the
/// attacker, so epsilon = 0 reproduces evaluate_clean exactly.
EvalResult evaluate_under_attack(const algo::Agent& agent, const envs::ToyEnv& env,
                                 const AttackSpec& spec, int episodes, std::uint64_t seed);

EvalResult evaluate_clean(const algo::Agent& agent, const envs::ToyEnv& env, int episodes,
                          std::uint64_t seed);

struct SweepRow {
  AttackKind kind;
  OptimizerKind optimizer;
  double epsilon;
  double mean;
  double std;
};

/// Cross product kinds x epsilons, kind-major. `base` supplies optimizer
/// settings; its kind and epsilon are overwritten per cell.
std::vector<SweepRow> attack_sweep(const algo::Agent& agent, const envs::ToyEnv& env,
                                   const std::vector<AttackKind>& kinds,
                                   const std::vector<double>& epsilons, const AttackSpec& base,
                                   int episodes, std::uint64_t seed);

/// Columns: kind, optimizer, epsilon, mean, std.
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace rorl::attacks
