#include "rorl/attacks/evaluation.hpp"

#include <cmath>
#include <fstream>

#include "rorl/errors.hpp"
#include "rorl/util/text.hpp"

namespace rorl::attacks {

namespace {
constexpr std::uint64_t kAttackStreamOffset = 1'000'000;

EvalResult summarize(std::vector<double> returns) {
  EvalResult r;
  const double n = static_cast<double>(returns.size());
  for (double x : returns) r.mean_return += x;
  r.mean_return /= n;
  double var = 0.0;
  for (double x : returns) var += (x - r.mean_return) * (x - r.mean_return);
  r.std_return = std::sqrt(var / n);
  r.returns = std::move(returns);
  return r;
}
}  // namespace

EvalResult evaluate_under_attack(const algo::Agent& agent, const envs::ToyEnv& env,
                                 const AttackSpec& spec, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ContractError("evaluate_under_attack: episodes must be >= 1");
  spec.validate();
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng = make_stream(seed, static_cast<std::uint64_t>(e));
    Rng attack_rng = make_stream(seed, kAttackStreamOffset + static_cast<std::uint64_t>(e));
    Eigen::VectorXd s = envs::env_reset(env, env_rng);
    double total = 0.0;
    for (int t = 0; t < env.horizon; ++t) {
      const Eigen::VectorXd observed = attack_state(agent, agent.normalize(s), spec, attack_rng);
      const envs::StepResult step = envs::env_step(env, s, agent.act(observed), t, env_rng);
      total += step.reward;
      s = step.s_next;
      if (step.done) break;
    }
    returns.push_back(total);
  }
  return summarize(std::move(returns));
}

EvalResult evaluate_clean(const algo::Agent& agent, const envs::ToyEnv& env, int episodes,
                          std::uint64_t seed) {
  return evaluate_under_attack(agent, env, AttackSpec{}, episodes, seed);
}

std::vector<SweepRow> attack_sweep(const algo::Agent& agent, const envs::ToyEnv& env,
                                   const std::vector<AttackKind>& kinds,
                                   const std::vector<double>& epsilons, const AttackSpec& base,
                                   int episodes, std::uint64_t seed) {
  if (kinds.empty() || epsilons.empty()) throw ContractError("attack_sweep: empty grid");
  std::vector<SweepRow> rows;
  for (AttackKind kind : kinds)
    for (double eps : epsilons) {
      AttackSpec spec = base;
      spec.kind = kind;
      spec.epsilon = eps;
      const EvalResult r = evaluate_under_attack(agent, env, spec, episodes, seed);
      rows.push_back({kind, spec.optimizer, eps, r.mean_return, r.std_return});
    }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "kind,optimizer,epsilon,mean,std\n";
  for (const auto& r : rows)
    out << to_string(r.kind) << ',' << to_string(r.optimizer) << ',' << util::format_real(r.epsilon)
        << ',' << util::format_real(r.mean) << ',' << util::format_real(r.std) << '\n';
}

}  // namespace rorl::attacks
