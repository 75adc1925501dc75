#include "rorl/envs/dataset.hpp"

#include <cstring>
#include <fstream>
#include <exception>
#include <iomanip>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rorl/errors.hpp"
#include "rorl/nn/checkpoint.hpp"
#include "rorl/nn/gaussian_policy.hpp"

namespace rorl::envs {

namespace {
constexpr char kDatasetMagic[8] = {'R', 'O', 'R', 'L', 'D', 'S', '0', '1'};
constexpr int kDatasetVersion = 1;

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_json_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Fills columns [begin, begin+count) of `out` with transitions from
/// episodes of `act`.
void collect(const ToyEnv& env, const ActionFn& act, Eigen::Index begin, Eigen::Index count,
             Rng& rng, Dataset& out) {
  Eigen::Index filled = 0;
  while (filled < count) {
    Eigen::VectorXd s = env_reset(env, rng);
    for (int t = 0; t < env.horizon && filled < count; ++t) {
      const Eigen::VectorXd a = act(s, rng).cwiseMax(-1.0).cwiseMin(1.0);
      StepResult step = env_step(env, s, a, t, rng);
      const Eigen::Index col = begin + filled;
      out.states.col(col) = s;
      out.actions.col(col) = a;
      out.rewards(col) = step.reward;
      out.next_states.col(col) = step.s_next;
      out.dones(col) = step.terminal;
      ++filled;
      s = std::move(step.s_next);
      if (step.done) break;
    }
  }
}

ActionFn policy_actions(const nn::PolicyD& policy) {
  return [policy](const Eigen::VectorXd& s, Rng& rng) -> Eigen::VectorXd {
    return policy.sample(s, rng).action.col(0);
  };
}

void collect_split(const ToyEnv& env, const ActionFn& act, Eigen::Index begin, Eigen::Index count,
                   std::uint64_t seed, std::uint64_t stream_base, int workers, Dataset& out) {
  // Workers fill disjoint column ranges in worker-major order, each from its
  // own stream, so the result does not depend on scheduling.
  const Eigen::Index per = count / workers;
  const Eigen::Index extra = count % workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  Eigen::Index cursor = begin;
  for (int w = 0; w < workers; ++w) {
    const Eigen::Index quota = per + (w < extra ? 1 : 0);
    threads.emplace_back([&, w, cursor, quota] {
      try {
        Rng rng = make_stream(seed, stream_base + static_cast<std::uint64_t>(w));
        collect(env, act, cursor, quota, rng, out);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
    cursor += quota;
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Behavior parse_behavior(const std::string& name) {
  if (name == "random") return Behavior::random;
  if (name == "medium") return Behavior::medium;
  if (name == "mixed") return Behavior::mixed;
  throw ContractError("unknown behavior '" + name + "' (expected random, medium or mixed)");
}

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::random:
      return "random";
    case Behavior::medium:
      return "medium";
    case Behavior::mixed:
      return "mixed";
  }
  return "random";
}

Transition Dataset::transition(Eigen::Index i) const {
  return Transition{states.col(i), actions.col(i), rewards(i), next_states.col(i), dones(i)};
}

Eigen::VectorXd Dataset::normalize(const Eigen::VectorXd& raw) const {
  return ((raw - norm_mean).array() / norm_std.array()).matrix();
}

Eigen::VectorXd Dataset::denormalize(const Eigen::VectorXd& normalized) const {
  return (normalized.array() * norm_std.array()).matrix() + norm_mean;
}

Dataset generate_dataset(const ToyEnv& env, Behavior behavior, Eigen::Index size,
                         std::uint64_t seed, const GenerateOptions& options) {
  if (size <= 0) throw ContractError("generate_dataset: size must be positive");
  if (options.workers < 1) throw ContractError("generate_dataset: workers must be >= 1");

  std::optional<nn::PolicyD> medium;
  if (behavior != Behavior::random) {
    const auto& path = options.behavior_checkpoint;
    if (!path || !std::filesystem::exists(*path))
      throw IoError("medium behavior checkpoint " +
                    (path ? "'" + path->string() + "' " : std::string()) +
                    "not found; run `rorl pretrain-behavior --env " + env.name() +
                    "` first");
    medium = nn::PolicyD(nn::load_mlp(*path));
    if (medium->state_dim() != env.state_dim || medium->action_dim() != env.action_dim)
      throw IoError("behavior checkpoint does not match environment " + env.name());
  }

  Dataset ds;
  ds.env_name = env.name();
  ds.behavior = to_string(behavior);
  ds.seed = seed;
  ds.states.resize(env.state_dim, size);
  ds.actions.resize(env.action_dim, size);
  ds.rewards.resize(size);
  ds.next_states.resize(env.state_dim, size);
  ds.dones.resize(size);

  const ActionFn random = uniform_random_actions(env);
  switch (behavior) {
    case Behavior::random:
      collect_split(env, random, 0, size, seed, 0, options.workers, ds);
      break;
    case Behavior::medium:
      collect_split(env, policy_actions(*medium), 0, size, seed, 0, options.workers, ds);
      break;
    case Behavior::mixed: {
      const Eigen::Index half = size / 2;
      collect_split(env, random, 0, half, seed, 0, options.workers, ds);
      collect_split(env, policy_actions(*medium), half, size - half, seed, 100, options.workers,
                    ds);
      break;
    }
  }

  ds.norm_mean = Eigen::VectorXd::Zero(env.state_dim);
  ds.norm_std = Eigen::VectorXd::Ones(env.state_dim);
  const ReferenceScores ref = measure_reference_scores(env, options.reference_episodes, seed);
  ds.random_score = ref.random_score;
  ds.expert_score = ref.expert_score;
  return ds;
}

Dataset normalize_observations(const Dataset& dataset) {
  if (dataset.size() == 0) throw ContractError("normalize_observations: empty dataset");
  Dataset out = dataset;
  if (dataset.normalized) {
    // Fold the existing statistics back in so normalization composes.
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      out.states.col(i) = dataset.denormalize(dataset.states.col(i));
      out.next_states.col(i) = dataset.denormalize(dataset.next_states.col(i));
    }
  }
  const double n = static_cast<double>(out.size());
  const Eigen::VectorXd mean = out.states.rowwise().sum() / n;
  const Eigen::VectorXd var = (out.states.colwise() - mean).array().square().rowwise().sum() / n;
  const Eigen::VectorXd std = var.array().sqrt().max(kStdFloor);
  out.states = ((out.states.colwise() - mean).array().colwise() / std.array()).matrix();
  out.next_states = ((out.next_states.colwise() - mean).array().colwise() / std.array()).matrix();
  out.norm_mean = mean;
  out.norm_std = std;
  out.normalized = true;
  return out;
}

double normalized_score(double score, double random_score, double expert_score) {
  if (expert_score == random_score)
    throw std::domain_error("normalized_score: expert and random scores coincide");
  return 100.0 * (score - random_score) / (expert_score - random_score);
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  nlohmann::json header;
  header["format_version"] = kDatasetVersion;
  header["env_name"] = ds.env_name;
  header["behavior"] = ds.behavior;
  header["seed"] = ds.seed;
  header["state_dim"] = ds.state_dim();
  header["action_dim"] = ds.action_dim();
  header["count"] = ds.size();
  header["norm_mean"] = to_vector(ds.norm_mean);
  header["norm_std"] = to_vector(ds.norm_std);
  header["normalized"] = ds.normalized;
  header["random_score"] = ds.random_score;
  header["expert_score"] = ds.expert_score;
  header["row_layout"] = "s[state_dim] a[action_dim] r s_next[state_dim] done";
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kDatasetMagic, 8);
  nn::le::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const int n = ds.state_dim();
  const int m = ds.action_dim();
  std::vector<double> row(2 * n + m + 2);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> r(row.data(), static_cast<Eigen::Index>(row.size()));
    r.segment(0, n) = ds.states.col(i);
    r.segment(n, m) = ds.actions.col(i);
    r(n + m) = ds.rewards(i);
    r.segment(n + m + 1, n) = ds.next_states.col(i);
    r(2 * n + m + 1) = ds.dones(i) ? 1.0 : 0.0;
    nn::le::put_f64s(out, row);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw IoError(path.string() + " is not a .rorl-ds file");
  const auto header_len = nn::le::get_u64(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
    throw IoError("truncated dataset header in " + path.string());
  const auto header = nlohmann::json::parse(text);
  if (header.at("format_version").get<int>() != kDatasetVersion)
    throw IoError("unsupported dataset version in " + path.string());

  Dataset ds;
  ds.env_name = header.at("env_name").get<std::string>();
  ds.behavior = header.at("behavior").get<std::string>();
  ds.seed = header.at("seed").get<std::uint64_t>();
  const int n = header.at("state_dim").get<int>();
  const int m = header.at("action_dim").get<int>();
  const auto count = header.at("count").get<Eigen::Index>();
  ds.norm_mean = from_json_vector(header.at("norm_mean"));
  ds.norm_std = from_json_vector(header.at("norm_std"));
  ds.normalized = header.at("normalized").get<bool>();
  ds.random_score = header.at("random_score").get<double>();
  ds.expert_score = header.at("expert_score").get<double>();

  ds.states.resize(n, count);
  ds.actions.resize(m, count);
  ds.rewards.resize(count);
  ds.next_states.resize(n, count);
  ds.dones.resize(count);
  std::vector<double> row(2 * n + m + 2);
  for (Eigen::Index i = 0; i < count; ++i) {
    nn::le::get_f64s(in, row);
    Eigen::Map<const Eigen::VectorXd> r(row.data(), static_cast<Eigen::Index>(row.size()));
    ds.states.col(i) = r.segment(0, n);
    ds.actions.col(i) = r.segment(n, m);
    ds.rewards(i) = r(n + m);
    ds.next_states.col(i) = r.segment(n + m + 1, n);
    ds.dones(i) = r(2 * n + m + 1) != 0.0;
  }
  return ds;
}

void export_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const int n = ds.state_dim();
  const int m = ds.action_dim();
  for (int i = 0; i < n; ++i) out << "s_" << i << ',';
  for (int i = 0; i < m; ++i) out << "a_" << i << ',';
  out << "r,";
  for (int i = 0; i < n; ++i) out << "s'_" << i << ',';
  out << "done\n";
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < ds.size(); ++k) {
    for (int i = 0; i < n; ++i) out << ds.states(i, k) << ',';
    for (int i = 0; i < m; ++i) out << ds.actions(i, k) << ',';
    out << ds.rewards(k) << ',';
    for (int i = 0; i < n; ++i) out << ds.next_states(i, k) << ',';
    out << (ds.dones(k) ? 1 : 0) << '\n';
  }
}

}  // namespace rorl::envs
