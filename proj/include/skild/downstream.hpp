#pragma once

// Task learning over frozen skills, the flat Q-learning baseline, greedy
// evaluation, and skill-coverage rollouts.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "skild/core.hpp"
#include "skild/env_registry.hpp"
#include "skild/scheduler.hpp"
#include "skild/skills.hpp"

namespace skild {

/// Everything discovery leaves behind that later stages read.
struct SkillArtifacts {
  std::string env;
  int diversity = 4;
  bool no_graph = false;
  bool no_diversity = false;
  SkillPolicy policy;
  Discriminator discriminator;
  GraphHistory history;

  static SkillArtifacts from(const DiscoveryResult& r) {
    return {r.config.env, r.config.diversity, r.config.no_graph, r.config.no_diversity, r.policy, r.discriminator,
            r.history};
  }

  /// Frozen skill set: H_f x {0..K-1}; b = 0 only without diversity; the
  /// K graph-free skills without graphs.
  [[nodiscard]] std::vector<Skill> skill_set() const {
    std::vector<Skill> out;
    const int k = no_diversity ? 1 : diversity;
    if (no_graph) {
      for (int b = 0; b < k; ++b) out.push_back(Skill{RowKey{}, b, true});
      return out;
    }
    for (const auto& [row, c] : history.rows())
      for (int b = 0; b < k; ++b) out.push_back(Skill{row, b, false});
    return out;
  }
};

enum class Method { Skild, NoGraph, NoDiversity, Vanilla };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Skild: return "skild";
    case Method::NoGraph: return "no_graph";
    case Method::NoDiversity: return "no_diversity";
    default: return "vanilla";
  }
}

inline Method parse_method(const std::string& s) {
  if (s == "skild") return Method::Skild;
  if (s == "no_graph") return Method::NoGraph;
  if (s == "no_diversity") return Method::NoDiversity;
  if (s == "vanilla") return Method::Vanilla;
  throw ConfigError("unknown method '" + s + "'");
}

struct FinetuneConfig {
  std::string env = "printer";
  std::string task = "install_printer";
  std::uint64_t total_steps = 50000;
  int skill_horizon = 25;
  int episode_horizon = 100;
  std::uint64_t seed = 0;
  Method method = Method::Skild;
  double gamma = 0.99;
  double eta = 0.1;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::uint64_t eval_interval = 5000;
  int eval_episodes = 20;

  void validate() const {
    if (skill_horizon < 1 || episode_horizon < 1) throw ConfigError("horizons must be >= 1");
    if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
    if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  }
};

/// Tabular Q over states with one value per option (skill or primitive action).
class TaskPolicy {
 public:
  TaskPolicy() = default;
  explicit TaskPolicy(std::size_t options) : options_(options) {
    if (options == 0) throw ContractError("task policy needs at least one option");
  }

  [[nodiscard]] std::size_t options() const { return options_; }

  [[nodiscard]] const std::vector<double>* find(std::uint64_t s) const {
    const auto it = q_.find(s);
    return it == q_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::size_t greedy(std::uint64_t s) const {
    const auto* q = find(s);
    if (!q) return 0;
    std::size_t best = 0;
    for (std::size_t o = 1; o < options_; ++o)
      if ((*q)[o] > (*q)[best]) best = o;
    return best;
  }

  [[nodiscard]] double max_value(std::uint64_t s) const {
    const auto* q = find(s);
    return q ? *std::max_element(q->begin(), q->end()) : 0.0;
  }

  std::size_t act(std::uint64_t s, double eps, RngStream& rng) const {
    const double u = rng.uniform();
    const auto r = rng.below(options_);
    return u < eps ? static_cast<std::size_t>(r) : greedy(s);
  }

  void update(std::uint64_t s, std::size_t o, double target, double eta) {
    auto& q = q_[s];
    if (q.empty()) q.assign(options_, 0.0);
    q[o] += eta * (target - q[o]);
  }

  [[nodiscard]] std::size_t size() const { return q_.size(); }

 private:
  std::size_t options_ = 1;
  std::unordered_map<std::uint64_t, std::vector<double>> q_;
};

struct CurvePoint {
  std::uint64_t step = 0;
  double success = 0;
};

/// Per training episode: primitive steps, option selections, success.
struct EpisodeAccount {
  int steps = 0;
  int selections = 0;
  bool success = false;
};

struct FinetuneResult {
  TaskPolicy policy;
  std::vector<EpisodeAccount> episodes;
  std::vector<CurvePoint> curve;
  std::vector<Skill> skills;
  std::uint64_t steps = 0;
  std::uint64_t selections = 0;
  double final_success = 0;
};

/// Result of running one option from s.
struct OptionOutcome {
  FactoredState s_next;
  int steps = 0;
  bool success = false;
};

/// Runs skill z greedily for up to `limit` steps, stopping on task success.
inline OptionOutcome run_skill(const Environment& env, const SkillPolicy& pol, const Skill& z, FactoredState s,
                               int limit, std::size_t task) {
  OptionOutcome out;
  RngStream unused(0, StreamTag::Evaluate);
  const auto& coder = env.schema().coder;
  for (int t = 0; t < limit; ++t) {
    const ActionId a = pol.act(coder.state_key(s), z, false, unused);
    const auto step = env.step(s, a);
    s = step.s_next;
    ++out.steps;
    if (step.task_rewards[task]) {
      out.success = true;
      break;
    }
  }
  out.s_next = std::move(s);
  return out;
}

/// Policy over options given the state; used by evaluate.
using OptionChooser = std::function<std::size_t(const FactoredState&, RngStream&)>;

/// Success rate of episodes driven by `choose`. With skills, each option is
/// a skill run for L steps; without, options are primitive actions.
inline double evaluate(const Environment& env, const SkillPolicy* skills, const std::vector<Skill>& skill_set,
                       const OptionChooser& choose, std::size_t task, int episodes, int skill_horizon,
                       int episode_horizon, RngStream& rng) {
  int wins = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    auto s = env.reset();
    int t = 0;
    bool won = false;
    while (t < episode_horizon && !won) {
      const std::size_t o = choose(s, rng);
      if (skills) {
        auto r = run_skill(env, *skills, skill_set.at(o), s, std::min(skill_horizon, episode_horizon - t), task);
        t += r.steps;
        won = r.success;
        s = std::move(r.s_next);
      } else {
        const auto step = env.step(s, ActionId{static_cast<int>(o)});
        ++t;
        won = step.task_rewards[task] != 0;
        s = step.s_next;
      }
    }
    wins += won;
  }
  return static_cast<double>(wins) / episodes;
}

inline double epsilon_linear(double start, double end, std::uint64_t k, std::uint64_t total) {
  const double span = static_cast<double>(total) / 2.0;
  if (span <= 0) return end;
  const double f = static_cast<double>(k) / span;
  return f >= 1.0 ? end : start + (end - start) * f;
}

/// Semi-MDP Q-learning over frozen skills, or flat Q-learning for vanilla.
inline FinetuneResult finetune(const FinetuneConfig& cfg, const SkillArtifacts* artifacts) {
  cfg.validate();
  const auto env = make_env(cfg.env);
  const auto& coder = env->schema().coder;
  const std::size_t task = env->schema().task_index(cfg.task);
  const bool flat = cfg.method == Method::Vanilla;
  if (!flat && !artifacts) throw LoadError("finetune: skill artifacts required for method " + to_string(cfg.method));
  if (!flat && artifacts->env != cfg.env) throw ConfigError("finetune: artifacts were discovered on another env");

  FinetuneResult res;
  res.skills = flat ? std::vector<Skill>{} : artifacts->skill_set();
  const std::size_t options = flat ? env->schema().action_count() : res.skills.size();
  if (options == 0) throw ContractError("finetune: empty skill set");
  res.policy = TaskPolicy(options);
  const SkillPolicy* skills = flat ? nullptr : &artifacts->policy;

  RngStream explore(cfg.seed, flat ? StreamTag::Vanilla : StreamTag::TaskExplore);
  RngStream eval_rng(cfg.seed, StreamTag::Evaluate);
  auto greedy = [&](const FactoredState& s, RngStream&) { return res.policy.greedy(coder.state_key(s)); };
  auto eval_now = [&]() {
    return evaluate(*env, skills, res.skills, greedy, task, cfg.eval_episodes, cfg.skill_horizon, cfg.episode_horizon,
                    eval_rng);
  };

  res.curve.push_back({0, eval_now()});
  std::uint64_t next_eval = cfg.eval_interval;
  auto s = env->reset();
  int ep_t = 0, ep_sel = 0;
  std::uint64_t k = 0;
  while (k < cfg.total_steps) {
    const std::uint64_t key = coder.state_key(s);
    const double eps = epsilon_linear(cfg.eps_start, cfg.eps_end, k, cfg.total_steps);
    const std::size_t o = res.policy.act(key, eps, explore);
    const int limit = static_cast<int>(std::min<std::uint64_t>(
        {static_cast<std::uint64_t>(flat ? 1 : cfg.skill_horizon),
         static_cast<std::uint64_t>(cfg.episode_horizon - ep_t), cfg.total_steps - k}));
    OptionOutcome r;
    if (flat) {
      const auto step = env->step(s, ActionId{static_cast<int>(o)});
      r = {step.s_next, 1, step.task_rewards[task] != 0};
    } else {
      r = run_skill(*env, *skills, res.skills[o], s, limit, task);
    }
    ++res.selections;
    ++ep_sel;
    k += static_cast<std::uint64_t>(r.steps);
    ep_t += r.steps;
    const double reward = r.success ? 1.0 : 0.0;
    const std::uint64_t next_key = coder.state_key(r.s_next);
    const double target = reward + (r.success ? 0.0 : cfg.gamma * res.policy.max_value(next_key));
    res.policy.update(key, o, target, cfg.eta);
    s = std::move(r.s_next);
    if (r.success || ep_t >= cfg.episode_horizon) {
      res.episodes.push_back({ep_t, ep_sel, r.success});
      s = env->reset();
      ep_t = ep_sel = 0;
    }
    while (k >= next_eval && next_eval <= cfg.total_steps) {
      res.curve.push_back({next_eval, eval_now()});
      next_eval += cfg.eval_interval;
    }
  }
  if (ep_sel > 0) res.episodes.push_back({ep_t, ep_sel, false});
  if (res.curve.back().step != cfg.total_steps) res.curve.push_back({cfg.total_steps, eval_now()});
  res.steps = k;
  res.final_success = res.curve.back().success;
  return res;
}

struct CoverageReport {
  int episodes = 0;
  std::map<RowKey, int> row_episodes;      // episodes in which each row was induced
  std::map<GraphKey, int> graph_episodes;  // episodes in which each full graph was induced

  [[nodiscard]] double row_fraction(const RowKey& r) const {
    const auto it = row_episodes.find(r);
    return it == row_episodes.end() || episodes == 0 ? 0.0 : static_cast<double>(it->second) / episodes;
  }
};

/// Episodes of horizon H; every L steps a skill is drawn uniformly from the
/// frozen skill set and run greedily. Induction is judged by the env oracle.
inline CoverageReport rollout_coverage(const SkillArtifacts& art, int episodes, RngStream& rng, int skill_horizon = 25,
                                       int episode_horizon = 200) {
  const auto env = make_env(art.env);
  const auto& coder = env->schema().coder;
  const std::size_t n = env->schema().n();
  const auto skills = art.skill_set();
  if (skills.empty()) throw ContractError("rollout_coverage: empty skill set");
  CoverageReport rep;
  rep.episodes = episodes;
  RngStream unused(0, StreamTag::Evaluate);
  for (int ep = 0; ep < episodes; ++ep) {
    std::set<RowKey> rows;
    std::set<GraphKey> graphs;
    auto s = env->reset();
    Skill z;
    for (int t = 0; t < episode_horizon; ++t) {
      if (t % skill_horizon == 0) z = skills[rng.below(skills.size())];
      const ActionId a = art.policy.act(coder.state_key(s), z, false, unused);
      const auto out = env->step(s, a);
      graphs.insert(graph_encode(out.oracle_graph));
      for (std::size_t i = 0; i < n; ++i) rows.insert(graph_row(out.oracle_graph, i));
      s = out.s_next;
    }
    for (const auto& r : rows) ++rep.row_episodes[r];
    for (const auto& g : graphs) ++rep.graph_episodes[g];
  }
  return rep;
}

}  // namespace skild
