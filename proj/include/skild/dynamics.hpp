#pragma once

// Exact-tabulated transition model and pointwise-CMI dependency inference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "skild/core.hpp"
#include "skild/envs.hpp"

namespace skild {

struct PcmiConfig {
  double eps_log = std::log(2.0);
  double alpha = 0.1;
  std::uint32_t min_support = 5;

  void validate() const {
    if (!(eps_log > 0)) throw ConfigError("pcmi eps_log must be > 0");
    if (!(alpha > 0)) throw ConfigError("pcmi alpha must be > 0");
    if (min_support < 1) throw ConfigError("pcmi min_support must be >= 1");
  }
};

/// Sparse count histogram over the next values of one factor.
struct Histogram {
  std::uint32_t total = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> bins;  // (value code, count)

  void add(std::uint32_t code) {
    ++total;
    for (auto& b : bins)
      if (b.first == code) {
        ++b.second;
        return;
      }
    bins.emplace_back(code, 1);
  }
  [[nodiscard]] std::uint32_t count(std::uint32_t code) const {
    for (const auto& b : bins)
      if (b.first == code) return b.second;
    return 0;
  }
  friend bool operator==(const Histogram& a, const Histogram& b) {
    if (a.total != b.total || a.bins.size() != b.bins.size()) return false;
    auto x = a.bins, y = b.bins;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    return x == y;
  }
};

/// Per-target-factor next-value histograms under the full (s, a) context and
/// under each leave-one-out context (factor j or the action removed). One
/// table per context kind holds the histograms of all N targets.
class MaskedCountModel {
 public:
  using Table = std::unordered_map<std::uint64_t, std::vector<Histogram>>;

  MaskedCountModel() = default;
  MaskedCountModel(StateCoder coder, double alpha) : coder_(std::move(coder)), alpha_(alpha) {
    if (!(alpha > 0)) throw ConfigError("alpha must be > 0");
    masked_.resize(coder_.factors() + 1);
  }
  explicit MaskedCountModel(const EnvSchema& schema, double alpha = 0.1) : MaskedCountModel(schema.coder, alpha) {}

  [[nodiscard]] const StateCoder& coder() const { return coder_; }
  [[nodiscard]] std::size_t n() const { return coder_.factors(); }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] std::uint64_t updates() const { return updates_; }
  [[nodiscard]] std::uint64_t bins(std::size_t i) const { return coder_.factor_cardinality(i); }

  void update(const FactoredState& s, ActionId a, const FactoredState& s_next) {
    check(s, a);
    check(s_next, a);
    const std::size_t N = n();
    std::array<std::uint32_t, kMaxFactors> y{};
    for (std::size_t i = 0; i < N; ++i) y[i] = static_cast<std::uint32_t>(coder_.code(i, s_next[i]));
    const std::uint64_t key = coder_.context_key(s, a);
    add(full_, key, y);
    for (std::size_t j = 0; j <= N; ++j) add(masked_[j], key - coder_.slot(j, s, a), y);
    ++updates_;
  }
  void update(const TransitionRecord& t) { update(t.s, t.a, t.s_next); }

  /// Visits of the full (s, a) context.
  [[nodiscard]] std::uint32_t support(const FactoredState& s, ActionId a) const {
    const auto it = full_.find(coder_.context_key(s, a));
    return it == full_.end() ? 0 : it->second[0].total;
  }

  /// Smoothed probability of factor i taking `value` next. masked_by = -1
  /// uses the full context, otherwise the context without column masked_by.
  [[nodiscard]] double probability(std::size_t i, const FactoredState& s, ActionId a, const FactorValue& value,
                                   int masked_by = -1) const {
    const Histogram* h = lookup(i, s, a, masked_by);
    const double V = static_cast<double>(bins(i));
    const double c = h ? h->count(static_cast<std::uint32_t>(coder_.code(i, value))) : 0.0;
    const double t = h ? h->total : 0.0;
    return (c + alpha_) / (t + alpha_ * V);
  }

  /// Full smoothed distribution over factor i's value codes.
  [[nodiscard]] std::vector<double> predict(std::size_t i, const FactoredState& s, ActionId a, int masked_by = -1) const {
    const Histogram* h = lookup(i, s, a, masked_by);
    const std::size_t V = bins(i);
    const double t = h ? h->total : 0.0;
    const double denom = t + alpha_ * static_cast<double>(V);
    std::vector<double> p(V, alpha_ / denom);
    if (h)
      for (const auto& b : h->bins) p[b.first] = (b.second + alpha_) / denom;
    return p;
  }

  /// log p_full(s'_i | s, a) - log p_masked_j(s'_i | s without j, a).
  [[nodiscard]] double pcmi(std::size_t i, std::size_t j, const FactoredState& s, ActionId a,
                            const FactoredState& s_next) const {
    if (j > n()) throw IndexError("pcmi: mask column out of range");
    return std::log(probability(i, s, a, s_next[i])) - std::log(probability(i, s, a, s_next[i], static_cast<int>(j)));
  }

  [[nodiscard]] DependencyGraph infer_graph(const FactoredState& s, ActionId a, const FactoredState& s_next,
                                            const PcmiConfig& cfg) const {
    const std::size_t N = n();
    DependencyGraph g(N);
    const auto it = full_.find(coder_.context_key(s, a));
    const std::uint32_t support = it == full_.end() ? 0 : it->second[0].total;
    if (support < cfg.min_support) return DependencyGraph::self_only(N);
    const std::uint64_t key = it->first;
    for (std::size_t i = 0; i < N; ++i) {
      const auto y = static_cast<std::uint32_t>(coder_.code(i, s_next[i]));
      const double V = static_cast<double>(bins(i));
      const Histogram& hf = it->second[i];
      const double lf = std::log((hf.count(y) + alpha_) / (hf.total + alpha_ * V));
      for (std::size_t j = 0; j <= N; ++j) {
        const auto m = masked_[j].find(key - coder_.slot(j, s, a));
        const Histogram& hm = m->second[i];  // present: every full update also updates each mask
        const double lm = std::log((hm.count(y) + alpha_) / (hm.total + alpha_ * V));
        if (lf - lm >= cfg.eps_log) g.set(i, j);
      }
    }
    return g;
  }
  [[nodiscard]] DependencyGraph infer_graph(const TransitionRecord& t, const PcmiConfig& cfg) const {
    return infer_graph(t.s, t.a, t.s_next, cfg);
  }

  [[nodiscard]] const Table& full_table() const { return full_; }
  [[nodiscard]] const Table& masked_table(std::size_t j) const { return masked_.at(j); }

  /// Restores counts from a checkpoint; the tables must match this coder.
  void restore(Table full, std::vector<Table> masked, std::uint64_t updates) {
    if (masked.size() != n() + 1) throw LoadError("dynamics checkpoint has wrong mask count");
    full_ = std::move(full);
    masked_ = std::move(masked);
    updates_ = updates;
  }

  friend bool operator==(const MaskedCountModel& a, const MaskedCountModel& b) {
    return a.alpha_ == b.alpha_ && a.updates_ == b.updates_ && a.full_ == b.full_ && a.masked_ == b.masked_;
  }

 private:
  void check(const FactoredState& s, ActionId a) const {
    if (s.size() != n()) throw SchemaError("transition state has wrong factor count");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!coder_.valid(i, s[i])) throw SchemaError("transition state outside schema bounds");
    if (a.value < 0 || static_cast<std::size_t>(a.value) >= coder_.actions()) throw SchemaError("action out of range");
  }

  void add(Table& table, std::uint64_t key, const std::array<std::uint32_t, kMaxFactors>& y) {
    auto& hs = table[key];
    if (hs.empty()) hs.resize(n());
    for (std::size_t i = 0; i < n(); ++i) hs[i].add(y[i]);
  }

  [[nodiscard]] const Histogram* lookup(std::size_t i, const FactoredState& s, ActionId a, int masked_by) const {
    if (i >= n()) throw IndexError("factor index out of range");
    const std::uint64_t key = coder_.context_key(s, a);
    const Table* table = &full_;
    std::uint64_t k = key;
    if (masked_by >= 0) {
      if (static_cast<std::size_t>(masked_by) > n()) throw IndexError("mask column out of range");
      table = &masked_[static_cast<std::size_t>(masked_by)];
      k = key - coder_.slot(static_cast<std::size_t>(masked_by), s, a);
    }
    const auto it = table->find(k);
    return it == table->end() ? nullptr : &it->second[i];
  }

  StateCoder coder_;
  double alpha_ = 1.0;
  std::uint64_t updates_ = 0;
  Table full_;
  std::vector<Table> masked_;
};

}  // namespace skild
