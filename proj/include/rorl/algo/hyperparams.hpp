#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rorl::algo {

/// Pseudo-target for perturbed (OOD) state-action pairs.
/// minus: Q_i - lambda * u.  min: min over ensemble members.
enum class OodTarget { minus, min };

OodTarget parse_ood_target(const std::string& name);
std::string to_string(OodTarget t);

/// Every coefficient of the robust critic/actor objective. The symbols the
/// literature overloads get distinct names here: tau_asym is the asymmetry
/// weight of the smoothing penalty and polyak the target averaging rate;
/// lambda_* is the OOD penalty schedule.
struct RorlHyperparams {
  int ensemble_size = 10;
  int batch_size = 256;
  double gamma = 0.99;
  double polyak = 5e-3;
  double critic_lr = 3e-4;
  double policy_lr = 3e-4;
  double entropy_lr = 3e-4;
  std::vector<int> hidden = {64, 64, 64};

  double alpha = 1e-4;   // critic smoothing weight
  double alpha2 = 1.0;   // policy smoothing weight
  double beta = 0.5;     // OOD loss weight
  double eps_q = 0.03;   // l-inf radius for critic smoothing
  double eps_p = 0.1;    // l-inf radius for policy smoothing
  double eps_ood = 0.05; // l-inf radius for OOD states
  double tau_asym = 0.2;
  int n_perturb = 30;

  bool auto_entropy = true;
  double entropy_c = 1.0;  // fixed coefficient, or the starting value when tuned
  std::optional<double> target_entropy;  // defaults to -action_dim

  double lambda_start = 1.0;
  double lambda_end = 0.1;
  double lambda_decay_pace = 1e-6;
  OodTarget ood_target = OodTarget::minus;

  /// Throws ContractError naming the first violated range constraint.
  void validate() const;
};

/// max(lambda_end, lambda_start - step * lambda_decay_pace).
double decay_lambda(const RorlHyperparams& hp, std::int64_t step);

/// Every field as (config key, value text) in a fixed order. Reals print
/// with 17 significant digits so the text round-trips.
std::vector<std::pair<std::string, std::string>> hyperparam_entries(const RorlHyperparams& hp);

/// Sets the field named `key` from text. Returns false for an unknown key;
/// throws ConfigError when the text does not parse.
bool set_hyperparam(RorlHyperparams& hp, const std::string& key, const std::string& value);

}  // namespace rorl::algo
