#include "rorl/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "rorl/attacks/attack.hpp"
#include "rorl/envs/dataset.hpp"
#include "rorl/errors.hpp"
#include "rorl/util/text.hpp"

namespace rorl::cli {

using util::format_real;

namespace {

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string join(const std::vector<double>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + format_real(items[i]);
  return out;
}

#define RORL_STRING(name) \
  Field{#name, [](ExperimentConfig& c, const std::string&, const std::string& v) { c.name = v; }, \
        [](const ExperimentConfig& c) { return c.name; }}
#define RORL_INT(name) \
  Field{#name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.name = util::parse_int(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.name); }}
#define RORL_INT64(name) \
  Field{#name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.name = util::parse_int64(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.name); }}
#define RORL_REAL(name) \
  Field{#name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.name = util::parse_real(k, v); }, \
        [](const ExperimentConfig& c) { return format_real(c.name); }}
#define RORL_BOOL(name) \
  Field{#name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.name = util::parse_bool(k, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }}
#define RORL_REALS(name) \
  Field{#name, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.name = util::parse_real_list(k, v); }, \
        [](const ExperimentConfig& c) { return join(c.name); }}
#define RORL_STRINGS(name) \
  Field{#name, [](ExperimentConfig& c, const std::string&, const std::string& v) { c.name = util::split_list(v); }, \
        [](const ExperimentConfig& c) { return join(c.name); }}

const std::vector<Field>& experiment_fields() {
  static const std::vector<Field> fields = {
      RORL_STRING(env),
      RORL_STRING(dataset),
      RORL_STRING(behavior),
      RORL_INT64(dataset_size),
      RORL_STRING(behavior_checkpoint),
      RORL_INT(workers),
      RORL_INT(reference_episodes),
      RORL_INT64(pretrain_max_steps),
      RORL_INT64(pretrain_warmup),
      RORL_REAL(pretrain_target_score),
      RORL_INT(pretrain_ensemble_size),
      RORL_INT64(pretrain_check_interval),
      RORL_REAL(pretrain_policy_lr),
      RORL_INT64(total_steps),
      RORL_INT64(log_interval),
      RORL_INT64(eval_interval),
      RORL_INT(eval_episodes),
      RORL_INT64(checkpoint_interval),
      Field{"seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              const long long s = util::parse_int64(k, v);
              if (s < 0) throw ConfigError("seed must be >= 0");
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      RORL_STRING(output_dir),
      RORL_STRINGS(attack_kinds),
      RORL_REALS(attack_epsilons),
      RORL_STRING(attack_optimizer),
      RORL_INT(attack_episodes),
      RORL_INT(attack_candidates),
      RORL_INT(attack_inits),
      RORL_INT(attack_steps),
      RORL_REALS(probe_epsilons),
      RORL_INT(probe_samples),
      RORL_INT(theory_seeds),
      RORL_INT(theory_d),
      RORL_INT(theory_horizon),
      RORL_INT(theory_states),
      RORL_INT(theory_actions),
      RORL_INT(theory_m),
      RORL_INT(theory_n_perturb),
      RORL_REAL(theory_epsilon),
      RORL_BOOL(theory_oracle_targets),
      RORL_INT(theory_calibration_draws),
      RORL_REAL(theory_calibration_margin),
  };
  return fields;
}

#undef RORL_STRING
#undef RORL_INT
#undef RORL_INT64
#undef RORL_REAL
#undef RORL_BOOL
#undef RORL_REALS
#undef RORL_STRINGS

std::string strip_quotes(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : experiment_fields()) keys.push_back(f.key);
  for (const auto& [k, v] : algo::hyperparam_entries(algo::RorlHyperparams{})) keys.push_back(k);
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : experiment_fields())
    if (f.key == key) {
      f.set(config, key, value);
      return;
    }
  if (algo::set_hyperparam(config.hp, key, value)) return;
  throw ConfigError("unknown config key '" + key + "'; valid keys: " + join(config_keys()));
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : experiment_fields()) out.emplace_back(f.key, f.get(config));
  for (auto& entry : algo::hyperparam_entries(config.hp)) out.push_back(std::move(entry));
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    // A '#' at the start of a line or after whitespace begins a comment.
    for (std::size_t i = 0; i < line.size(); ++i)
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    const std::string trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    const auto colon = trimmed.find(':');
    if (colon == std::string::npos)
      throw ConfigError(where + "expected 'key: value', got '" + trimmed + "'");
    const std::string key = util::trim(trimmed.substr(0, colon));
    const std::string value = strip_quotes(util::trim(trimmed.substr(colon + 1)));
    if (key.empty()) throw ConfigError(where + "missing key before ':'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* env_seed = std::getenv("RORL_SEED"); env_seed && *env_seed) {
    const long long s = util::parse_int64("RORL_SEED", env_seed);
    if (s < 0) throw ConfigError("RORL_SEED must be >= 0");
    config.seed = static_cast<std::uint64_t>(s);
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig config = parse_config(buf.str(), path.string());
  apply_env_overrides(config);
  validate(config);
  return config;
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    c.hp.validate();
    envs::ToyEnv::make(c.env);
    envs::parse_behavior(c.behavior);
    for (const auto& k : c.attack_kinds) attacks::parse_attack_kind(k);
    attacks::parse_optimizer(c.attack_optimizer);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  require(c.dataset_size >= 1, "dataset_size must be >= 1");
  require(c.workers >= 1, "workers must be >= 1");
  require(c.reference_episodes >= 1, "reference_episodes must be >= 1");
  require(c.pretrain_max_steps >= 0, "pretrain_max_steps must be >= 0");
  require(c.pretrain_warmup >= 0, "pretrain_warmup must be >= 0");
  require(c.pretrain_ensemble_size >= 1, "pretrain_ensemble_size must be >= 1");
  require(c.pretrain_check_interval >= 1, "pretrain_check_interval must be >= 1");
  require(c.pretrain_policy_lr > 0, "pretrain_policy_lr must be positive");
  require(c.total_steps >= 0, "total_steps must be >= 0");
  require(c.log_interval >= 1, "log_interval must be >= 1");
  require(c.eval_interval >= 0, "eval_interval must be >= 0 (0 disables periodic evaluation)");
  require(c.eval_episodes >= 1, "eval_episodes must be >= 1");
  require(c.checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  require(!c.output_dir.empty(), "output_dir must not be empty");
  require(!c.attack_kinds.empty(), "attack_kinds must list at least one kind");
  require(!c.attack_epsilons.empty(), "attack_epsilons must list at least one radius");
  for (double e : c.attack_epsilons) require(e >= 0, "attack_epsilons must be >= 0");
  require(c.attack_episodes >= 1, "attack_episodes must be >= 1");
  require(c.attack_candidates >= 1, "attack_candidates must be >= 1");
  require(c.attack_inits >= 1, "attack_inits must be >= 1");
  require(c.attack_steps >= 0, "attack_steps must be >= 0");
  require(!c.probe_epsilons.empty(), "probe_epsilons must list at least one radius");
  for (double e : c.probe_epsilons) require(e >= 0, "probe_epsilons must be >= 0");
  require(c.probe_samples >= 1, "probe_samples must be >= 1");
  require(c.theory_seeds >= 1, "theory_seeds must be >= 1");
  require(c.theory_d >= 1 && c.theory_horizon >= 1 && c.theory_states >= 1 && c.theory_actions >= 1,
          "theory_d, theory_horizon, theory_states and theory_actions must be >= 1");
  require(c.theory_m >= 1 && c.theory_n_perturb >= 1, "theory_m and theory_n_perturb must be >= 1");
  require(c.theory_epsilon >= 0, "theory_epsilon must be >= 0");
  require(c.theory_calibration_draws >= 1, "theory_calibration_draws must be >= 1");
  require(c.theory_calibration_margin >= 1.0, "theory_calibration_margin must be >= 1");
}

std::string render_config(const ExperimentConfig& config) {
  std::string out = "# resolved configuration\n";
  for (const auto& [k, v] : config_entries(config)) out += k + ": " + v + "\n";
  return out;
}

void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << render_config(config);
}

}  // namespace rorl::cli
