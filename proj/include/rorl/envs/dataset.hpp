#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "rorl/envs/toy_env.hpp"
#include "rorl/nn/random.hpp"

namespace rorl::envs {

inline constexpr double kStdFloor = 1e-3;

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool done = false;  // terminal, not timeout
};

enum class Behavior { random, medium, mixed };

Behavior parse_behavior(const std::string& name);
std::string to_string(Behavior b);

/// Offline transitions stored column-wise (one column per transition).
struct Dataset {
  std::string env_name;
  std::string behavior;
  std::uint64_t seed = 0;
  Eigen::MatrixXd states;       // state_dim x N
  Eigen::MatrixXd actions;      // action_dim x N
  Eigen::VectorXd rewards;      // N
  Eigen::MatrixXd next_states;  // state_dim x N
  Eigen::Array<bool, Eigen::Dynamic, 1> dones;
  /// Statistics used by normalize_observations; identity until then.
  Eigen::VectorXd norm_mean;
  Eigen::VectorXd norm_std;
  bool normalized = false;
  double random_score = 0.0;
  double expert_score = 0.0;

  Eigen::Index size() const { return states.cols(); }
  int state_dim() const { return static_cast<int>(states.rows()); }
  int action_dim() const { return static_cast<int>(actions.rows()); }
  Transition transition(Eigen::Index i) const;

  /// Map a raw environment state into this dataset's observation space.
  Eigen::VectorXd normalize(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& normalized) const;
};

struct GenerateOptions {
  /// Policy checkpoint (an nn file holding a GaussianTanhPolicy trunk) used
  /// for the medium half. Required for medium and mixed.
  std::optional<std::filesystem::path> behavior_checkpoint;
  int workers = 1;
  int reference_episodes = 20;
};

/// Rolls out the behavior policy until exactly `size` transitions exist.
/// Worker w uses stream make_stream(seed, w) and produces a contiguous slab;
/// slabs are concatenated in worker order. Reference scores are measured on
/// their own stream.
Dataset generate_dataset(const ToyEnv& env, Behavior behavior, Eigen::Index size,
                         std::uint64_t seed, const GenerateOptions& options = {});

/// Standardizes states and next-states per dimension with the population
/// statistics of `states`; std is floored at kStdFloor.
Dataset normalize_observations(const Dataset& dataset);

/// 100 * (score - random) / (expert - random).
double normalized_score(double score, double random_score, double expert_score);

/// Container format: see docs/FORMATS.md.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);
void export_csv(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace rorl::envs
