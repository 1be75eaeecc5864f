#pragma once

// Environment schema, state coding, and the abstract environment interface.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "skild/core.hpp"

namespace skild {

struct ComponentSpec {
  std::string name;
  int cardinality = 1;  // values are 0..cardinality-1
};

struct FactorSpec {
  std::string name;
  std::vector<ComponentSpec> components;
};

struct InducibleRow {
  RowKey row;
  std::string label;    // "agent, sink, action -> sink"
  std::string meaning;  // what the interaction is
};

/// Mixed-radix coding of factor values, states, and (state, action)
/// contexts. Context key = a + sum_j code_j * stride_j, so masking factor j
/// (or the action) is a subtraction of its slot.
class StateCoder {
 public:
  StateCoder() = default;
  StateCoder(const std::vector<FactorSpec>& factors, std::size_t actions) : actions_(actions) {
    if (factors.empty() || factors.size() > kMaxFactors) throw SchemaError("factor count out of range");
    if (actions == 0 || actions > kMaxActions) throw SchemaError("action count out of range");
    unsigned __int128 stride = actions;
    for (const auto& f : factors) {
      if (f.components.empty() || f.components.size() > kMaxComponents)
        throw SchemaError("factor " + f.name + " has an invalid component count");
      std::vector<int> card;
      std::uint64_t total = 1;
      for (const auto& c : f.components) {
        if (c.cardinality < 1 || c.cardinality > 32767) throw SchemaError("component cardinality out of range");
        card.push_back(c.cardinality);
        total *= static_cast<std::uint64_t>(c.cardinality);
      }
      cards_.push_back(std::move(card));
      factor_card_.push_back(total);
      strides_.push_back(static_cast<std::uint64_t>(stride));
      stride *= total;
      if (stride >> 63) throw SchemaError("state space too large for 63-bit context keys");
    }
    state_space_ = static_cast<std::uint64_t>(stride / actions);
  }

  [[nodiscard]] std::size_t factors() const { return cards_.size(); }
  [[nodiscard]] std::size_t actions() const { return actions_; }
  [[nodiscard]] std::uint64_t factor_cardinality(std::size_t i) const { return factor_card_.at(i); }
  [[nodiscard]] std::uint64_t state_space() const { return state_space_; }

  [[nodiscard]] bool valid(std::size_t i, const FactorValue& v) const {
    const auto& card = cards_[i];
    if (v.size() != card.size()) return false;
    for (std::size_t k = 0; k < card.size(); ++k)
      if (v[k] < 0 || v[k] >= card[k]) return false;
    return true;
  }

  [[nodiscard]] std::uint64_t code(std::size_t i, const FactorValue& v) const {
    const auto& card = cards_[i];
    std::uint64_t c = 0;
    for (std::size_t k = card.size(); k-- > 0;) c = c * static_cast<std::uint64_t>(card[k]) + static_cast<std::uint64_t>(v[k]);
    return c;
  }

  [[nodiscard]] FactorValue decode(std::size_t i, std::uint64_t c) const {
    const auto& card = cards_.at(i);
    std::vector<int> comps(card.size());
    for (std::size_t k = 0; k < card.size(); ++k) {
      comps[k] = static_cast<int>(c % static_cast<std::uint64_t>(card[k]));
      c /= static_cast<std::uint64_t>(card[k]);
    }
    return FactorValue::from_vector(comps);
  }

  /// Key of the state alone (no action slot).
  [[nodiscard]] std::uint64_t state_key(const FactoredState& s) const { return context_key(s, ActionId{0}) / actions_; }

  [[nodiscard]] FactoredState decode_state(std::uint64_t key) const {
    FactoredState s;
    for (std::size_t i = 0; i < cards_.size(); ++i) {
      s.push_back(decode(i, key % factor_card_[i]));
      key /= factor_card_[i];
    }
    return s;
  }

  [[nodiscard]] std::uint64_t context_key(const FactoredState& s, ActionId a) const {
    std::uint64_t key = static_cast<std::uint64_t>(a.value);
    for (std::size_t i = 0; i < cards_.size(); ++i) key += code(i, s[i]) * strides_[i];
    return key;
  }

  /// Contribution of column j (factor j, or the action when j == N).
  [[nodiscard]] std::uint64_t slot(std::size_t j, const FactoredState& s, ActionId a) const {
    if (j == cards_.size()) return static_cast<std::uint64_t>(a.value);
    return code(j, s[j]) * strides_[j];
  }

 private:
  std::size_t actions_ = 0;
  std::vector<std::vector<int>> cards_;
  std::vector<std::uint64_t> factor_card_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t state_space_ = 0;
};

struct EnvSchema {
  std::string name;
  int width = 8;
  int height = 8;
  std::vector<FactorSpec> factors;
  std::vector<std::string> actions;
  std::vector<std::string> tasks;
  std::vector<InducibleRow> inducible;
  int discovery_horizon = 200;
  int task_horizon = 100;
  StateCoder coder;

  [[nodiscard]] std::size_t n() const { return factors.size(); }
  [[nodiscard]] std::size_t action_count() const { return actions.size(); }

  void finalize() { coder = StateCoder(factors, actions.size()); }

  [[nodiscard]] std::size_t factor_index(const std::string& factor_name) const {
    for (std::size_t i = 0; i < factors.size(); ++i)
      if (factors[i].name == factor_name) return i;
    throw IndexError("unknown factor '" + factor_name + "'");
  }

  [[nodiscard]] std::size_t task_index(const std::string& id) const {
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t] == id) return t;
    throw ConfigError("unknown task id '" + id + "' for env " + name);
  }

  [[nodiscard]] bool valid(const FactoredState& s) const {
    if (s.size() != factors.size()) return false;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!coder.valid(i, s[i])) return false;
    return true;
  }

  void validate(const FactoredState& s) const {
    if (!valid(s)) throw SchemaError("state does not match schema of env " + name);
  }

  void validate(ActionId a) const {
    if (a.value < 0 || static_cast<std::size_t>(a.value) >= actions.size())
      throw SchemaError("action id out of range for env " + name);
  }

  [[nodiscard]] const InducibleRow* find_inducible(const RowKey& row) const {
    for (const auto& r : inducible)
      if (r.row == row) return &r;
    return nullptr;
  }

  [[nodiscard]] const InducibleRow& inducible_by_label(const std::string& label) const {
    for (const auto& r : inducible)
      if (r.label == label) return r;
    throw IndexError("no inducible row labelled '" + label + "'");
  }

  /// "agent, rag, action -> rag" for any row of this schema.
  [[nodiscard]] std::string row_label(const RowKey& row) const {
    std::string out;
    for (std::size_t j = 0; j <= n(); ++j) {
      if (!row.has(j)) continue;
      if (!out.empty()) out += ", ";
      out += j == n() ? std::string("action") : factors[j].name;
    }
    if (out.empty()) out = "(none)";
    return out + " -> " + factors[row.factor].name;
  }
};

struct StepOutcome {
  FactoredState s_next;
  DependencyGraph oracle_graph;
  std::vector<std::uint8_t> task_rewards;
  bool done = false;
};

/// Deterministic factored environment. step is a pure function of (s, a);
/// episode horizons are enforced by the caller.
class Environment {
 public:
  virtual ~Environment() = default;

  [[nodiscard]] virtual const EnvSchema& schema() const = 0;
  [[nodiscard]] virtual FactoredState reset() const = 0;
  [[nodiscard]] virtual std::unique_ptr<Environment> clone() const = 0;

  /// Transition plus ground-truth dependencies of the taken branch.
  [[nodiscard]] StepOutcome step(const FactoredState& s, ActionId a) const {
    StepOutcome out;
    out.oracle_graph = DependencyGraph::self_only(schema().n());
    out.s_next = s;
    transition(s, a, out.s_next, out.oracle_graph);
    const auto& tasks = schema().tasks;
    out.task_rewards.assign(tasks.size(), 0);
    for (std::size_t t = 0; t < tasks.size(); ++t)
      out.task_rewards[t] = (!satisfied(t, s) && satisfied(t, out.s_next)) ? 1 : 0;
    if (active_task_ >= 0) out.done = out.task_rewards[static_cast<std::size_t>(active_task_)] != 0;
    return out;
  }

  [[nodiscard]] DependencyGraph oracle_graph(const FactoredState& s, ActionId a, const FactoredState& s_next) const {
    auto out = step(s, a);
    if (out.s_next != s_next) throw ContractError("oracle_graph: s_next was not produced by step(s, a)");
    return out.oracle_graph;
  }

  [[nodiscard]] std::uint8_t task_reward(const std::string& task_id, const FactoredState& s, ActionId,
                                         const FactoredState& s_next) const {
    const auto t = schema().task_index(task_id);
    return (!satisfied(t, s) && satisfied(t, s_next)) ? 1 : 0;
  }

  [[nodiscard]] virtual bool satisfied(std::size_t task, const FactoredState& s) const = 0;

  /// Episodes end when this task's reward fires; -1 disables.
  void set_active_task(int task) { active_task_ = task; }
  [[nodiscard]] int active_task() const { return active_task_; }

  [[nodiscard]] const std::vector<InducibleRow>& inducible_graphs() const { return schema().inducible; }

 protected:
  /// Writes s' (pre-filled with s) and the dependency rows (pre-filled
  /// self-only) for the branch the mechanics take.
  virtual void transition(const FactoredState& s, ActionId a, FactoredState& next, DependencyGraph& g) const = 0;

 private:
  int active_task_ = -1;
};

// ---------------------------------------------------------------------------
// Shared grid mechanics for the household worlds.

namespace grid {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(Cell, Cell) = default;
};

enum Dir : int { North = 0, East = 1, South = 2, West = 3 };

// Actions 0..2 are shared by every world.
inline constexpr int kForward = 0;
inline constexpr int kLeft = 1;
inline constexpr int kRight = 2;

inline Cell cell_of(const FactorValue& f) { return {f[0], f[1]}; }

inline Cell front_of(const FactorValue& agent) {
  static constexpr int dx[] = {0, 1, 0, -1};
  static constexpr int dy[] = {-1, 0, 1, 0};
  const int d = agent[2];
  return {agent[0] + dx[d], agent[1] + dy[d]};
}

inline bool in_grid(Cell c, int w, int h) { return c.x >= 0 && c.y >= 0 && c.x < w && c.y < h; }

inline FactorValue set_cell(FactorValue v, Cell c) {
  v.set(0, c.x);
  v.set(1, c.y);
  return v;
}

inline std::vector<ComponentSpec> position(int w, int h) { return {{"x", w}, {"y", h}}; }

/// Moves or turns the agent (factor 0). Fixtures block forward motion and
/// become the agent's parent; walls leave the row {agent, action}; other
/// actions copy the agent. Returns true when the agent changed cell.
inline bool move_agent(const EnvSchema& schema, const FactoredState& s, ActionId a, const std::vector<std::size_t>& fixtures,
                       FactoredState& next, DependencyGraph& g) {
  const std::size_t act = schema.n();
  const FactorValue& agent = s[0];
  if (a.value == kLeft || a.value == kRight) {
    FactorValue turned = agent;
    turned.set(2, (agent[2] + (a.value == kLeft ? 3 : 1)) % 4);
    next[0] = turned;
    g.set(0, act);
    return false;
  }
  if (a.value != kForward) return false;
  const Cell f = front_of(agent);
  g.set(0, act);
  if (!in_grid(f, schema.width, schema.height)) return false;
  for (std::size_t fx : fixtures) {
    if (cell_of(s[fx]) == f) {
      g.set(0, act, false);
      g.set(0, fx);
      return false;
    }
  }
  next[0] = set_cell(agent, f);
  return true;
}

/// Carried item (components x, y, carried, ...) follows the agent.
inline void follow_agent(std::size_t item, const FactoredState& next, FactoredState& out, DependencyGraph& g,
                         std::size_t action_col) {
  out[item] = set_cell(out[item], cell_of(next[0]));
  g.set(item, 0);
  g.set(item, action_col);
}

}  // namespace grid

}  // namespace skild
