#pragma once

// Seen-graph history, novelty-driven skill selection, and the discovery loop.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skild/core.hpp"
#include "skild/dynamics.hpp"
#include "skild/env_registry.hpp"
#include "skild/skills.hpp"

namespace skild {

class NotBootstrappedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// C(g) per seen graph, and the per-row history H_f of non-trivial rows.
class GraphHistory {
 public:
  void record_induced(const DependencyGraph& g) { record_induced(graph_encode(g)); }

  void record_induced(const GraphKey& key) {
    ++graphs_[key];
    for (std::size_t i = 0; i < key.n; ++i) {
      const RowKey r = graph_row(key, i);
      if (!r.trivial()) ++rows_[r];
    }
  }

  [[nodiscard]] std::uint64_t count(const GraphKey& key) const {
    const auto it = graphs_.find(key);
    return it == graphs_.end() ? 0 : it->second;
  }
  [[nodiscard]] std::uint64_t count(const DependencyGraph& g) const { return count(graph_encode(g)); }
  [[nodiscard]] std::uint64_t row_count(const RowKey& r) const {
    const auto it = rows_.find(r);
    return it == rows_.end() ? 0 : it->second;
  }

  [[nodiscard]] const std::map<GraphKey, std::uint64_t>& graphs() const { return graphs_; }
  [[nodiscard]] const std::map<RowKey, std::uint64_t>& rows() const { return rows_; }
  [[nodiscard]] bool empty_rows() const { return rows_.empty(); }

  /// Rows of factor f in H_f.
  [[nodiscard]] std::vector<RowKey> rows_of(std::size_t f) const {
    std::vector<RowKey> out;
    for (const auto& [r, c] : rows_)
      if (r.factor == f) out.push_back(r);
    return out;
  }

  void restore(std::map<GraphKey, std::uint64_t> graphs, std::map<RowKey, std::uint64_t> rows) {
    graphs_ = std::move(graphs);
    rows_ = std::move(rows);
  }

  friend bool operator==(const GraphHistory&, const GraphHistory&) = default;

 private:
  std::map<GraphKey, std::uint64_t> graphs_;
  std::map<RowKey, std::uint64_t> rows_;
};

/// Novelty of a count: 1 / sqrt(C).
inline double novelty_from_count(std::uint64_t c) {
  if (c == 0) throw ContractError("novelty of an unseen graph");
  return 1.0 / std::sqrt(static_cast<double>(c));
}

inline double novelty_reward(const GraphHistory& h, const DependencyGraph& g) { return novelty_from_count(h.count(g)); }

enum class DependencySource { Learned, Oracle };

inline std::string to_string(DependencySource d) { return d == DependencySource::Learned ? "learned" : "oracle"; }

inline DependencySource default_source(const std::string& env) {
  return env == "thawing" ? DependencySource::Oracle : DependencySource::Learned;
}

struct DiscoveryConfig {
  std::string env = "printer";
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 200000;  // after warm-up
  std::uint64_t warmup_steps = 5000;
  int skill_horizon = 25;
  int episode_horizon = 200;
  double lambda = 0.5;
  int diversity = 4;
  double tau = 3.0;
  double her_ratio = 0.5;
  double disc_beta = 1.0;
  int replay_per_segment = 4;
  std::size_t replay_capacity = 4096;
  std::uint64_t metrics_interval = 10000;
  QConfig q;
  PcmiConfig pcmi;
  DependencySource source = DependencySource::Learned;
  bool train_model_in_oracle_mode = false;
  bool no_graph = false;
  bool no_diversity = false;

  void validate() const {
    if (skill_horizon < 1) throw ConfigError("skill_horizon must be >= 1");
    if (episode_horizon < 1) throw ConfigError("episode_horizon must be >= 1");
    if (diversity < 1 || diversity > kMaxDiversity) throw ConfigError("diversity must be in [1, 16]");
    if (her_ratio < 0 || her_ratio > 1) throw ConfigError("her_ratio must be in [0, 1]");
    if (!(tau >= 0)) throw ConfigError("tau must be >= 0");
    if (replay_per_segment < 0) throw ConfigError("replay_per_segment must be >= 0");
    if (metrics_interval == 0) throw ConfigError("metrics_interval must be positive");
    pcmi.validate();
  }
};

/// Softmax bandit over H_f scored by row novelty; b uniform. The state is
/// accepted for interface symmetry and not used.
inline Skill select_skill(const GraphHistory& h, const FactoredState& /*s*/, RngStream& rng, const DiscoveryConfig& cfg) {
  const double u = rng.uniform();
  const std::uint64_t b = rng.below(static_cast<std::uint64_t>(cfg.diversity));
  Skill z;
  z.diversity = cfg.no_diversity ? 0 : static_cast<int>(b);
  if (cfg.no_graph) {
    z.graph_free = true;
    return z;
  }
  if (h.empty_rows()) throw NotBootstrappedError("select_skill: row history is empty");
  double top = -1e300;
  for (const auto& [r, c] : h.rows()) top = std::max(top, cfg.tau * novelty_from_count(c));
  std::vector<double> w;
  double total = 0;
  for (const auto& [r, c] : h.rows()) {
    w.push_back(std::exp(cfg.tau * novelty_from_count(c) - top));
    total += w.back();
  }
  double acc = 0;
  std::size_t k = 0;
  for (const auto& [r, c] : h.rows()) {
    acc += w[k++] / total;
    z.row = r;
    if (u < acc) break;
  }
  return z;
}

struct MetricsRow {
  std::uint64_t step = 0;
  std::size_t history_graphs = 0;
  std::size_t history_rows = 0;
  double mean_skill_reward = 0;
  double discriminator_acc = 0;
  std::size_t new_graphs = 0;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,history_graphs,history_rows,mean_skill_reward,discriminator_acc,new_graphs_this_interval\n";
  char buf[256];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%zu,%zu,%.6f,%.6f,%zu\n", static_cast<unsigned long long>(m.step),
                  m.history_graphs, m.history_rows, m.mean_skill_reward, m.discriminator_acc, m.new_graphs);
    out += buf;
  }
  return out;
}

struct DiscoveryResult {
  DiscoveryConfig config;
  SkillPolicy policy;
  Discriminator discriminator;
  MaskedCountModel model;
  GraphHistory history;
  std::vector<MetricsRow> metrics;
  std::uint64_t steps = 0;  // primitive steps including warm-up
};

inline double epsilon_at(const QConfig& q, std::uint64_t k, std::uint64_t total) {
  const double span = static_cast<double>(total) / 2.0;
  if (span <= 0) return q.eps_end;
  const double f = static_cast<double>(k) / span;
  if (f >= 1.0) return q.eps_end;
  return q.eps_start + (q.eps_end - q.eps_start) * f;
}

/// Graph induced by one transition under the configured source.
inline DependencyGraph induced_graph(DependencySource src, const MaskedCountModel& model, const PcmiConfig& pcmi,
                                     const FactoredState& s, ActionId a, const StepOutcome& out) {
  return src == DependencySource::Oracle ? out.oracle_graph : model.infer_graph(s, a, out.s_next, pcmi);
}

/// Called for every primitive discovery step, warm-up included.
using TransitionSink = std::function<void(const FactoredState& s, ActionId a, const StepOutcome& out,
                                          const std::optional<Skill>& skill)>;

/// Called after each metrics row with the partial result.
using IntervalSink = std::function<void(const DiscoveryResult& partial)>;

inline DiscoveryResult discover(const DiscoveryConfig& cfg, const TransitionSink& sink = {},
                                const IntervalSink& on_interval = {}) {
  cfg.validate();
  const auto env = make_env(cfg.env);
  const auto& schema = env->schema();
  const auto& coder = schema.coder;
  DiscoveryResult res;
  res.config = cfg;
  res.policy = SkillPolicy(schema.action_count(), cfg.q);
  res.discriminator = Discriminator(cfg.diversity, cfg.disc_beta);
  res.model = MaskedCountModel(schema, cfg.pcmi.alpha);
  const bool train_model = cfg.source == DependencySource::Learned || cfg.train_model_in_oracle_mode;

  RngStream warm_rng(cfg.seed, StreamTag::Warmup);
  RngStream explore_rng(cfg.seed, StreamTag::Explore);
  RngStream select_rng(cfg.seed, StreamTag::Select);
  RngStream relabel_rng(cfg.seed, StreamTag::Relabel);
  RngStream replay_rng(cfg.seed, StreamTag::Replay);
  SkillReplay replay(cfg.replay_capacity);
  const SkillTrainConfig tcfg{cfg.lambda, !cfg.no_diversity};

  auto observe = [&](const FactoredState& s, ActionId a, const StepOutcome& out) {
    if (train_model) res.model.update(s, a, out.s_next);
    const auto g = graph_encode(induced_graph(cfg.source, res.model, cfg.pcmi, s, a, out));
    res.history.record_induced(g);
    return g;
  };

  FactoredState s = env->reset();
  int ep_t = 0;
  for (std::uint64_t k = 0; k < cfg.warmup_steps; ++k) {
    const ActionId a{static_cast<int>(warm_rng.below(schema.action_count()))};
    const auto out = env->step(s, a);
    observe(s, a, out);
    if (sink) sink(s, a, out, std::nullopt);
    s = out.s_next;
    if (++ep_t == cfg.episode_horizon) {
      s = env->reset();
      ep_t = 0;
    }
  }
  res.steps = cfg.warmup_steps;

  // Interval accumulators.
  double reward_sum = 0;
  std::size_t reward_segments = 0;
  std::size_t acc_hits = 0, acc_total = 0;
  std::size_t graphs_at_interval = res.history.graphs().size();
  auto emit = [&](std::uint64_t step) {
    MetricsRow m;
    m.step = step;
    m.history_graphs = res.history.graphs().size();
    m.history_rows = res.history.rows().size();
    m.mean_skill_reward = reward_segments ? reward_sum / static_cast<double>(reward_segments) : 0.0;
    m.discriminator_acc = acc_total ? static_cast<double>(acc_hits) / static_cast<double>(acc_total) : 0.0;
    m.new_graphs = m.history_graphs - graphs_at_interval;
    res.metrics.push_back(m);
    reward_sum = 0;
    reward_segments = 0;
    acc_hits = acc_total = 0;
    graphs_at_interval = m.history_graphs;
  };

  Segment seg;
  bool active = false;
  auto finish = [&]() {
    for (std::size_t t = 0; t < seg.size(); ++t)
      if (indicator(seg.skill.graph_free ? RowKey{} : seg.induced(t), seg.skill)) {
        ++acc_total;
        acc_hits += res.discriminator.predict(seg.states[t + 1], seg.skill) == seg.skill.diversity;
      }
    train_discriminator(res.discriminator, seg);
    reward_sum += train_segment(res.policy, res.discriminator, seg, tcfg);
    ++reward_segments;
    auto copy = her_relabel(seg, cfg.her_ratio, relabel_rng);
    if (copy) {
      train_discriminator(res.discriminator, *copy);
      train_segment(res.policy, res.discriminator, *copy, tcfg);
    }
    for (int r = 0; r < cfg.replay_per_segment && replay.size() > 0; ++r)
      train_segment(res.policy, res.discriminator, replay.sample(replay_rng), tcfg);
    replay.push(std::move(seg));
    if (copy) replay.push(std::move(*copy));
    seg = Segment{};
    active = false;
  };

  for (std::uint64_t k = 0; k < cfg.total_steps; ++k) {
    if (!active) {
      seg.skill = select_skill(res.history, s, select_rng, cfg);
      seg.states.push_back(coder.state_key(s));
      active = true;
    }
    res.policy.set_epsilon(epsilon_at(cfg.q, k, cfg.total_steps));
    const ActionId a = res.policy.act(seg.states.back(), seg.skill, true, explore_rng);
    const auto out = env->step(s, a);
    const GraphKey g = observe(s, a, out);
    if (sink) sink(s, a, out, seg.skill);
    seg.actions.push_back(a);
    seg.graphs.push_back(g);
    s = out.s_next;
    seg.states.push_back(coder.state_key(s));
    ++ep_t;
    if (static_cast<int>(seg.size()) == cfg.skill_horizon || ep_t == cfg.episode_horizon || k + 1 == cfg.total_steps)
      finish();
    if (ep_t == cfg.episode_horizon) {
      s = env->reset();
      ep_t = 0;
    }
    if ((k + 1) % cfg.metrics_interval == 0 || k + 1 == cfg.total_steps) {
      emit(cfg.warmup_steps + k + 1);
      res.steps = cfg.warmup_steps + k + 1;
      if (on_interval) on_interval(res);
    }
  }
  res.steps = cfg.warmup_steps + cfg.total_steps;
  return res;
}

}  // namespace skild
