#pragma once

// Factored skill policies, the diversity discriminator, the skill reward,
// and hindsight relabelling of skill segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "skild/core.hpp"

namespace skild {

inline constexpr int kMaxDiversity = 16;

/// Dense code for a skill target: (factor, row mask) or the graph-free
/// sentinel, without the diversity indicator.
inline std::uint32_t target_code(const Skill& z) {
  return z.graph_free ? 0xFFFFFFu : (static_cast<std::uint32_t>(z.row.factor) << 16) | z.row.mask;
}

inline std::uint32_t skill_code(const Skill& z) { return (target_code(z) << 4) | static_cast<std::uint32_t>(z.diversity); }

struct SkillKey {
  std::uint64_t state = 0;
  std::uint32_t skill = 0;
  friend bool operator==(const SkillKey&, const SkillKey&) = default;
};

struct SkillKeyHash {
  std::size_t operator()(const SkillKey& k) const {
    return static_cast<std::size_t>(detail::splitmix(k.state ^ (static_cast<std::uint64_t>(k.skill) << 40)));
  }
};

using ActionValues = std::array<double, kMaxActions>;

inline int greedy_action(const ActionValues& q, std::size_t actions) {
  int best = 0;
  for (std::size_t a = 1; a < actions; ++a)
    if (q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  return best;
}

struct QConfig {
  double gamma = 0.95;
  double eta = 0.1;
  double eps_start = 1.0;
  double eps_end = 0.05;
};

/// Tabular Q over (state key, skill). Unseen entries read as zero.
class SkillPolicy {
 public:
  using Table = std::unordered_map<SkillKey, ActionValues, SkillKeyHash>;

  SkillPolicy() = default;
  SkillPolicy(std::size_t actions, QConfig cfg) : actions_(actions), cfg_(cfg), epsilon_(cfg.eps_start) {
    if (actions == 0 || actions > kMaxActions) throw ConfigError("action count out of range");
  }

  [[nodiscard]] std::size_t actions() const { return actions_; }
  [[nodiscard]] const QConfig& config() const { return cfg_; }
  [[nodiscard]] double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = e; }

  [[nodiscard]] ActionValues values(std::uint64_t state, const Skill& z) const {
    const auto it = q_.find({state, skill_code(z)});
    return it == q_.end() ? ActionValues{} : it->second;
  }

  ActionId act(std::uint64_t state, const Skill& z, bool explore, RngStream& rng) const {
    if (explore) {
      const double u = rng.uniform();
      const auto r = rng.below(actions_);
      if (u < epsilon_) return ActionId{static_cast<int>(r)};
    }
    return ActionId{greedy_action(values(state, z), actions_)};
  }

  /// One-step Q-learning update; terminal transitions do not bootstrap.
  void update(std::uint64_t state, const Skill& z, ActionId a, double r, std::uint64_t next, bool done) {
    const std::uint32_t code = skill_code(z);
    double target = r;
    if (!done) {
      const auto it = q_.find({next, code});
      if (it != q_.end()) target += cfg_.gamma * *std::max_element(it->second.begin(), it->second.begin() + actions_);
    }
    auto& row = q_[{state, code}];
    row[static_cast<std::size_t>(a.value)] += cfg_.eta * (target - row[static_cast<std::size_t>(a.value)]);
  }

  [[nodiscard]] const Table& table() const { return q_; }
  Table& mutable_table() { return q_; }

  friend bool operator==(const SkillPolicy& a, const SkillPolicy& b) { return a.actions_ == b.actions_ && a.q_ == b.q_; }

 private:
  std::size_t actions_ = 1;
  QConfig cfg_;
  double epsilon_ = 1.0;
  Table q_;
};

/// Count-based q(b | s, target) with Dirichlet smoothing.
class Discriminator {
 public:
  struct Key {
    std::uint64_t state = 0;
    std::uint32_t target = 0;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return static_cast<std::size_t>(detail::splitmix(k.state * 31 + k.target));
    }
  };
  using Counts = std::array<std::uint32_t, kMaxDiversity>;
  using Table = std::unordered_map<Key, Counts, KeyHash>;

  Discriminator() = default;
  Discriminator(int k, double beta) : k_(k), beta_(beta) {
    if (k < 1 || k > kMaxDiversity) throw ConfigError("diversity count K out of range");
    if (!(beta > 0)) throw ConfigError("discriminator smoothing must be > 0");
  }

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] double beta() const { return beta_; }

  void observe(std::uint64_t state, const Skill& z) {
    if (z.diversity < 0 || z.diversity >= k_) throw ContractError("diversity indicator out of range");
    ++counts_[{state, target_code(z)}][static_cast<std::size_t>(z.diversity)];
  }

  [[nodiscard]] double probability(std::uint64_t state, const Skill& z) const {
    const auto it = counts_.find({state, target_code(z)});
    if (it == counts_.end()) return 1.0 / k_;
    std::uint64_t total = 0;
    for (int b = 0; b < k_; ++b) total += it->second[static_cast<std::size_t>(b)];
    return (it->second[static_cast<std::size_t>(z.diversity)] + beta_) / (static_cast<double>(total) + beta_ * k_);
  }

  /// log q(b | s, target)
  [[nodiscard]] double diversity_reward(std::uint64_t state, const Skill& z) const {
    return std::log(probability(state, z));
  }

  /// argmax_b q(b | s, target), lowest b on ties.
  [[nodiscard]] int predict(std::uint64_t state, const Skill& z) const {
    const auto it = counts_.find({state, target_code(z)});
    if (it == counts_.end()) return 0;
    int best = 0;
    for (int b = 1; b < k_; ++b)
      if (it->second[static_cast<std::size_t>(b)] > it->second[static_cast<std::size_t>(best)]) best = b;
    return best;
  }

  [[nodiscard]] const Table& table() const { return counts_; }
  Table& mutable_table() { return counts_; }

  friend bool operator==(const Discriminator& a, const Discriminator& b) {
    return a.k_ == b.k_ && a.beta_ == b.beta_ && a.counts_ == b.counts_;
  }

 private:
  int k_ = 4;
  double beta_ = 1.0;
  Table counts_;
};

/// Indicator-gated skill reward: rows_equal ? 1 + lambda * div : 0.
inline double skill_reward(const RowKey& induced, const Skill& target, double div, double lambda) {
  if (target.graph_free) return 1.0 + lambda * div;
  if (induced.factor != target.row.factor) throw ContractError("skill_reward: induced row is for another factor");
  return rows_equal(induced, target.row) ? 1.0 + lambda * div : 0.0;
}

inline bool indicator(const RowKey& induced, const Skill& target) {
  return target.graph_free || rows_equal(induced, target.row);
}

/// Up to L transitions executed under one skill. `induced[t]` is the induced
/// row of the skill's factor at step t (all rows are kept in `graphs`).
struct Segment {
  Skill skill;
  std::vector<std::uint64_t> states;  // size T+1
  std::vector<ActionId> actions;      // size T
  std::vector<GraphKey> graphs;       // induced graphs, size T
  bool relabeled = false;

  [[nodiscard]] std::size_t size() const { return actions.size(); }
  [[nodiscard]] RowKey induced(std::size_t t) const { return graph_row(graphs[t], skill.factor()); }
};

/// With probability rho, a copy of the segment retargeted to a non-trivial
/// row its skill factor actually achieved (uniform over the distinct rows).
inline std::optional<Segment> her_relabel(const Segment& seg, double rho, RngStream& rng) {
  const double u = rng.uniform();
  const std::uint64_t pick = rng();
  if (seg.relabeled || seg.skill.graph_free || u >= rho || seg.size() == 0) return std::nullopt;
  std::vector<RowKey> achieved;
  for (std::size_t t = 0; t < seg.size(); ++t) {
    const RowKey r = seg.induced(t);
    if (!r.trivial()) achieved.push_back(r);
  }
  std::sort(achieved.begin(), achieved.end());
  achieved.erase(std::unique(achieved.begin(), achieved.end()), achieved.end());
  if (achieved.empty()) return std::nullopt;
  Segment copy = seg;
  copy.skill.row = achieved[pick % achieved.size()];
  copy.relabeled = true;
  return copy;
}

/// Ring buffer of past segments for replayed Q updates.
class SkillReplay {
 public:
  explicit SkillReplay(std::size_t capacity = 4096) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
  }

  void push(Segment seg) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(seg));
    } else {
      items_[next_] = std::move(seg);
    }
    next_ = (next_ + 1) % capacity_;
  }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] const Segment& at(std::size_t i) const { return items_.at(i); }
  [[nodiscard]] const Segment& sample(RngStream& rng) const {
    if (items_.empty()) throw ContractError("sample from empty replay");
    return items_[rng.below(items_.size())];
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Segment> items_;
};

struct SkillTrainConfig {
  double lambda = 0.5;
  bool use_diversity = true;
};

/// Backward sweep of Q updates over one segment with rewards recomputed
/// under the segment's target. The final step is terminal (skill horizon).
/// Returns the mean reward.
inline double train_segment(SkillPolicy& pol, const Discriminator& disc, const Segment& seg,
                            const SkillTrainConfig& cfg) {
  double total = 0;
  const double lambda = cfg.use_diversity ? cfg.lambda : 0.0;
  for (std::size_t t = seg.size(); t-- > 0;) {
    const RowKey row = seg.skill.graph_free ? RowKey{} : seg.induced(t);
    const double div = lambda == 0.0 ? 0.0 : disc.diversity_reward(seg.states[t + 1], seg.skill);
    const double r = skill_reward(row, seg.skill, div, lambda);
    total += r;
    pol.update(seg.states[t], seg.skill, seg.actions[t], r, seg.states[t + 1], t + 1 == seg.size());
  }
  return seg.size() ? total / static_cast<double>(seg.size()) : 0.0;
}

/// Feeds (s', target, b) of every indicator-1 step into the discriminator.
inline void train_discriminator(Discriminator& disc, const Segment& seg) {
  for (std::size_t t = 0; t < seg.size(); ++t)
    if (seg.skill.graph_free || rows_equal(seg.induced(t), seg.skill.row)) disc.observe(seg.states[t + 1], seg.skill);
}

}  // namespace skild
