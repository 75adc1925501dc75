#include <fstream>

#include <json.hpp>

#include "rorl/algo/agent.hpp"
#include "rorl/errors.hpp"
#include "rorl/nn/checkpoint.hpp"

namespace rorl::algo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kAgentFormatVersion = 1;

std::string member_file(const char* prefix, int k, const char* ext) {
  return std::string(prefix) + "_" + std::to_string(k) + ext;
}

void save_adam(const fs::path& path, const nn::AdamState<double>& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  nn::write_adam(out, state);
  if (!out) throw IoError("write failed: " + path.string());
}

nn::AdamState<double> load_adam(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return nn::read_adam(in);
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void save_agent(const fs::path& dir, const Agent& agent) {
  fs::create_directories(dir);
  nn::save_mlp(dir / "policy.mlp", agent.policy.trunk());
  save_adam(dir / "policy.adam", agent.policy_opt);
  for (int k = 0; k < agent.critic.size(); ++k) {
    nn::save_mlp(dir / member_file("critic", k, ".mlp"), agent.critic.members[k]);
    nn::save_mlp(dir / member_file("target", k, ".mlp"), agent.critic.targets[k]);
    save_adam(dir / member_file("critic", k, ".adam"), agent.critic_opts[k]);
  }
  save_adam(dir / "entropy.adam", agent.entropy_opt);

  json meta;
  meta["format_version"] = kAgentFormatVersion;
  meta["version"] = RORL_VERSION;
  meta["env_name"] = agent.env_name;
  meta["step"] = agent.step;
  meta["log_c"] = agent.log_c;
  meta["state_dim"] = agent.state_dim();
  meta["action_dim"] = agent.action_dim();
  meta["obs_mean"] = vector_json(agent.obs_mean);
  meta["obs_std"] = vector_json(agent.obs_std);
  json hp = json::object();
  for (const auto& [key, value] : hyperparam_entries(agent.hp)) hp[key] = value;
  meta["hyperparams"] = hp;
  std::ofstream out(dir / "agent.json");
  if (!out) throw IoError("cannot write " + (dir / "agent.json").string());
  out << meta.dump(2) << '\n';
}

Agent load_agent(const fs::path& dir) {
  std::ifstream in(dir / "agent.json");
  if (!in) throw IoError("no agent checkpoint at " + dir.string() + " (agent.json missing)");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed agent.json: " + std::string(e.what()));
  }
  if (meta.value("format_version", 0) != kAgentFormatVersion)
    throw IoError("unsupported agent checkpoint version in " + dir.string());

  Agent agent;
  try {
    for (const auto& [key, value] : meta.at("hyperparams").items())
      if (!set_hyperparam(agent.hp, key, value.get<std::string>()))
        throw IoError("unknown hyperparameter '" + key + "' in agent.json");
    agent.env_name = meta.at("env_name").get<std::string>();
    agent.step = meta.at("step").get<std::int64_t>();
    agent.log_c = meta.at("log_c").get<double>();
    agent.obs_mean = json_vector(meta.at("obs_mean"));
    agent.obs_std = json_vector(meta.at("obs_std"));
  } catch (const json::exception& e) {
    throw IoError("malformed agent.json: " + std::string(e.what()));
  }

  agent.policy = PolicyD(nn::load_mlp(dir / "policy.mlp"));
  agent.policy_opt = load_adam(dir / "policy.adam");
  agent.critic.state_dim = agent.policy.state_dim();
  agent.critic.action_dim = agent.policy.action_dim();
  for (int k = 0; k < agent.hp.ensemble_size; ++k) {
    agent.critic.members.push_back(nn::load_mlp(dir / member_file("critic", k, ".mlp")));
    agent.critic.targets.push_back(nn::load_mlp(dir / member_file("target", k, ".mlp")));
    agent.critic_opts.push_back(load_adam(dir / member_file("critic", k, ".adam")));
  }
  agent.entropy_opt = load_adam(dir / "entropy.adam");
  if (agent.obs_mean.size() != agent.state_dim() || agent.obs_std.size() != agent.state_dim())
    throw IoError("agent.json normalization statistics do not match the policy input size");
  return agent;
}

}  // namespace rorl::algo
