#pragma once

// Experiment configuration: a JSON document with a closed key set, resolved
// into DiscoveryConfig / FinetuneConfig per seed.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "skild/downstream.hpp"

namespace skild {

struct CoverageConfig {
  int episodes = 500;
  int skill_horizon = 25;
  int episode_horizon = 200;
};

struct ExperimentConfig {
  std::string env = "printer";
  std::vector<std::uint64_t> seeds{0};
  std::string out = "runs";
  DiscoveryConfig discovery;
  FinetuneConfig finetune;
  CoverageConfig coverage;
  bool log_transitions = false;
  std::uint64_t checkpoint_interval = 0;  // primitive steps; 0 writes only the final checkpoint

  /// Per-seed configs with the ablation flags set from `method`.
  [[nodiscard]] DiscoveryConfig discovery_for(std::uint64_t seed, Method method) const {
    DiscoveryConfig d = discovery;
    d.env = env;
    d.seed = seed;
    d.no_graph = method == Method::NoGraph;
    d.no_diversity = method == Method::NoDiversity;
    return d;
  }

  /// Vanilla learns flat for the pre-train plus fine-tune budget.
  [[nodiscard]] FinetuneConfig finetune_for(std::uint64_t seed, Method method) const {
    FinetuneConfig f = finetune;
    f.env = env;
    f.seed = seed;
    f.method = method;
    if (method == Method::Vanilla) f.total_steps += discovery.warmup_steps + discovery.total_steps;
    return f;
  }

  void validate() const {
    (void)make_env(env)->schema().task_index(finetune.task);
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (coverage.episodes < 1) throw ConfigError("coverage.episodes must be >= 1");
    if (coverage.skill_horizon < 1 || coverage.episode_horizon < 1) throw ConfigError("coverage horizons must be >= 1");
    discovery_for(seeds.front(), Method::Skild).validate();
    finetune.validate();
  }
};

namespace detail {

using nlohmann::json;

/// Rejects any key of `j` outside `allowed`, naming the first offender.
inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& d = c.discovery;
  const auto& f = c.finetune;
  return {
      {"env", c.env},
      {"seeds", c.seeds},
      {"out", c.out},
      {"log_transitions", c.log_transitions},
      {"checkpoint_interval", c.checkpoint_interval},
      {"discovery",
       {{"total_steps", d.total_steps},
        {"warmup_steps", d.warmup_steps},
        {"skill_horizon", d.skill_horizon},
        {"episode_horizon", d.episode_horizon},
        {"lambda", d.lambda},
        {"diversity", d.diversity},
        {"tau", d.tau},
        {"her_ratio", d.her_ratio},
        {"disc_beta", d.disc_beta},
        {"replay_per_segment", d.replay_per_segment},
        {"replay_capacity", d.replay_capacity},
        {"metrics_interval", d.metrics_interval},
        {"gamma", d.q.gamma},
        {"eta", d.q.eta},
        {"eps_start", d.q.eps_start},
        {"eps_end", d.q.eps_end},
        {"eps_log", d.pcmi.eps_log},
        {"alpha", d.pcmi.alpha},
        {"min_support", d.pcmi.min_support},
        {"source", to_string(d.source)},
        {"train_model_in_oracle_mode", d.train_model_in_oracle_mode}}},
      {"finetune",
       {{"task", f.task},
        {"total_steps", f.total_steps},
        {"skill_horizon", f.skill_horizon},
        {"episode_horizon", f.episode_horizon},
        {"gamma", f.gamma},
        {"eta", f.eta},
        {"eps_start", f.eps_start},
        {"eps_end", f.eps_end},
        {"eval_interval", f.eval_interval},
        {"eval_episodes", f.eval_episodes}}},
      {"coverage",
       {{"episodes", c.coverage.episodes},
        {"skill_horizon", c.coverage.skill_horizon},
        {"episode_horizon", c.coverage.episode_horizon}}},
  };
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig c;
  check_keys(j, "",
             {"env", "seeds", "out", "discovery", "finetune", "coverage", "log_transitions", "checkpoint_interval"});
  read(j, "env", c.env, "");
  make_env(c.env);
  c.discovery.source = default_source(c.env);
  c.finetune.task = make_env(c.env)->schema().tasks.front();
  read(j, "seeds", c.seeds, "");
  read(j, "out", c.out, "");
  read(j, "log_transitions", c.log_transitions, "");
  read(j, "checkpoint_interval", c.checkpoint_interval, "");

  if (j.contains("discovery")) {
    const auto& d = j.at("discovery");
    auto& o = c.discovery;
    const std::string w = "discovery";
    check_keys(d, w,
               {"total_steps", "warmup_steps", "skill_horizon", "episode_horizon", "lambda", "diversity", "tau",
                "her_ratio", "disc_beta", "replay_per_segment", "replay_capacity", "metrics_interval", "gamma", "eta",
                "eps_start", "eps_end", "eps_log", "alpha", "min_support", "source", "train_model_in_oracle_mode"});
    read(d, "total_steps", o.total_steps, w);
    read(d, "warmup_steps", o.warmup_steps, w);
    read(d, "skill_horizon", o.skill_horizon, w);
    read(d, "episode_horizon", o.episode_horizon, w);
    read(d, "lambda", o.lambda, w);
    read(d, "diversity", o.diversity, w);
    read(d, "tau", o.tau, w);
    read(d, "her_ratio", o.her_ratio, w);
    read(d, "disc_beta", o.disc_beta, w);
    read(d, "replay_per_segment", o.replay_per_segment, w);
    read(d, "replay_capacity", o.replay_capacity, w);
    read(d, "metrics_interval", o.metrics_interval, w);
    read(d, "gamma", o.q.gamma, w);
    read(d, "eta", o.q.eta, w);
    read(d, "eps_start", o.q.eps_start, w);
    read(d, "eps_end", o.q.eps_end, w);
    read(d, "eps_log", o.pcmi.eps_log, w);
    read(d, "alpha", o.pcmi.alpha, w);
    read(d, "min_support", o.pcmi.min_support, w);
    read(d, "train_model_in_oracle_mode", o.train_model_in_oracle_mode, w);
    std::string src = to_string(o.source);
    read(d, "source", src, w);
    if (src == "learned") {
      o.source = DependencySource::Learned;
    } else if (src == "oracle") {
      o.source = DependencySource::Oracle;
    } else {
      throw ConfigError("discovery.source must be 'learned' or 'oracle'");
    }
  }

  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    auto& o = c.finetune;
    const std::string w = "finetune";
    check_keys(f, w,
               {"task", "total_steps", "skill_horizon", "episode_horizon", "gamma", "eta", "eps_start", "eps_end",
                "eval_interval", "eval_episodes"});
    read(f, "task", o.task, w);
    read(f, "total_steps", o.total_steps, w);
    read(f, "skill_horizon", o.skill_horizon, w);
    read(f, "episode_horizon", o.episode_horizon, w);
    read(f, "gamma", o.gamma, w);
    read(f, "eta", o.eta, w);
    read(f, "eps_start", o.eps_start, w);
    read(f, "eps_end", o.eps_end, w);
    read(f, "eval_interval", o.eval_interval, w);
    read(f, "eval_episodes", o.eval_episodes, w);
  }

  if (j.contains("coverage")) {
    const auto& v = j.at("coverage");
    const std::string w = "coverage";
    check_keys(v, w, {"episodes", "skill_horizon", "episode_horizon"});
    read(v, "episodes", c.coverage.episodes, w);
    read(v, "skill_horizon", c.coverage.skill_horizon, w);
    read(v, "episode_horizon", c.coverage.episode_horizon, w);
  }

  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

}  // namespace skild
