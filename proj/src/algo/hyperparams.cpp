#include "rorl/algo/hyperparams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rorl/errors.hpp"
#include "rorl/util/text.hpp"

namespace rorl::algo {

OodTarget parse_ood_target(const std::string& name) {
  if (name == "minus") return OodTarget::minus;
  if (name == "min") return OodTarget::min;
  throw ContractError("ood_target must be 'minus' or 'min', got '" + name + "'");
}

std::string to_string(OodTarget t) { return t == OodTarget::minus ? "minus" : "min"; }

void RorlHyperparams::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError(what);
  };
  require(ensemble_size >= 1, "ensemble_size must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  require(polyak > 0.0 && polyak < 1.0, "polyak must lie in (0, 1)");
  require(critic_lr > 0 && policy_lr > 0 && entropy_lr > 0, "learning rates must be positive");
  require(!hidden.empty(), "hidden must list at least one layer width");
  require(std::all_of(hidden.begin(), hidden.end(), [](int w) { return w > 0; }),
          "hidden widths must be positive");
  require(alpha >= 0 && alpha2 >= 0 && beta >= 0, "alpha, alpha2 and beta must be >= 0");
  require(eps_q >= 0 && eps_p >= 0 && eps_ood >= 0, "perturbation radii must be >= 0");
  require(tau_asym >= 0.0 && tau_asym <= 0.5, "tau_asym must lie in [0, 0.5]");
  require(n_perturb >= 1, "n_perturb must be >= 1");
  require(entropy_c >= 0, "entropy_c must be >= 0");
  require(!auto_entropy || entropy_c > 0, "entropy_c must be > 0 when auto_entropy is on");
  require(lambda_start >= 0 && lambda_end >= 0, "lambda_start and lambda_end must be >= 0");
  require(lambda_end <= lambda_start, "lambda_end must not exceed lambda_start");
  require(lambda_decay_pace >= 0, "lambda_decay_pace must be >= 0");
  require(ood_target != OodTarget::min || ensemble_size >= 2,
          "ood_target 'min' needs ensemble_size >= 2");
  require(beta == 0.0 || ensemble_size >= 2,
          "the OOD loss uses ensemble uncertainty and needs ensemble_size >= 2");
}

double decay_lambda(const RorlHyperparams& hp, std::int64_t step) {
  if (step < 0) throw ContractError("decay_lambda: step must be >= 0");
  return std::max(hp.lambda_end,
                  hp.lambda_start - static_cast<double>(step) * hp.lambda_decay_pace);
}

std::vector<std::pair<std::string, std::string>> hyperparam_entries(const RorlHyperparams& hp) {
  using util::format_real;
  std::string hidden;
  for (std::size_t i = 0; i < hp.hidden.size(); ++i)
    hidden += (i ? "," : "") + std::to_string(hp.hidden[i]);
  return {
      {"ensemble_size", std::to_string(hp.ensemble_size)},
      {"batch_size", std::to_string(hp.batch_size)},
      {"gamma", format_real(hp.gamma)},
      {"polyak", format_real(hp.polyak)},
      {"critic_lr", format_real(hp.critic_lr)},
      {"policy_lr", format_real(hp.policy_lr)},
      {"entropy_lr", format_real(hp.entropy_lr)},
      {"hidden", hidden},
      {"alpha", format_real(hp.alpha)},
      {"alpha2", format_real(hp.alpha2)},
      {"beta", format_real(hp.beta)},
      {"eps_q", format_real(hp.eps_q)},
      {"eps_p", format_real(hp.eps_p)},
      {"eps_ood", format_real(hp.eps_ood)},
      {"tau_asym", format_real(hp.tau_asym)},
      {"n_perturb", std::to_string(hp.n_perturb)},
      {"auto_entropy", hp.auto_entropy ? "true" : "false"},
      {"entropy_c", format_real(hp.entropy_c)},
      {"target_entropy", hp.target_entropy ? format_real(*hp.target_entropy) : "auto"},
      {"lambda_start", format_real(hp.lambda_start)},
      {"lambda_end", format_real(hp.lambda_end)},
      {"lambda_decay_pace", format_real(hp.lambda_decay_pace)},
      {"ood_target", to_string(hp.ood_target)},
  };
}

bool set_hyperparam(RorlHyperparams& hp, const std::string& key, const std::string& value) {
  using util::parse_bool;
  using util::parse_int;
  using util::parse_real;
  if (key == "ensemble_size") hp.ensemble_size = parse_int(key, value);
  else if (key == "batch_size") hp.batch_size = parse_int(key, value);
  else if (key == "gamma") hp.gamma = parse_real(key, value);
  else if (key == "polyak") hp.polyak = parse_real(key, value);
  else if (key == "critic_lr") hp.critic_lr = parse_real(key, value);
  else if (key == "policy_lr") hp.policy_lr = parse_real(key, value);
  else if (key == "entropy_lr") hp.entropy_lr = parse_real(key, value);
  else if (key == "hidden") hp.hidden = util::parse_int_list(key, value);
  else if (key == "alpha") hp.alpha = parse_real(key, value);
  else if (key == "alpha2") hp.alpha2 = parse_real(key, value);
  else if (key == "beta") hp.beta = parse_real(key, value);
  else if (key == "eps_q") hp.eps_q = parse_real(key, value);
  else if (key == "eps_p") hp.eps_p = parse_real(key, value);
  else if (key == "eps_ood") hp.eps_ood = parse_real(key, value);
  else if (key == "tau_asym") hp.tau_asym = parse_real(key, value);
  else if (key == "n_perturb") hp.n_perturb = parse_int(key, value);
  else if (key == "auto_entropy") hp.auto_entropy = parse_bool(key, value);
  else if (key == "entropy_c") hp.entropy_c = parse_real(key, value);
  else if (key == "target_entropy") {
    if (value == "auto") hp.target_entropy.reset();
    else hp.target_entropy = parse_real(key, value);
  } else if (key == "lambda_start") hp.lambda_start = parse_real(key, value);
  else if (key == "lambda_end") hp.lambda_end = parse_real(key, value);
  else if (key == "lambda_decay_pace") hp.lambda_decay_pace = parse_real(key, value);
  else if (key == "ood_target") {
    try {
      hp.ood_target = parse_ood_target(value);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  } else {
    return false;
  }
  return true;
}

}  // namespace rorl::algo
