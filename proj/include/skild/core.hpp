#pragma once

// Value types shared by every skild module: factored states, dependency
// graphs and their canonical keys, transition records, and the
// counter-based random streams that make runs reproducible.

#include <array>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skild {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxComponents = 5;
inline constexpr std::size_t kMaxFactors = 7;  // N*(N+1) bits must fit a 64-bit key
inline constexpr std::size_t kMaxActions = 9;

/// One state factor: a short tuple of small non-negative integers.
class FactorValue {
 public:
  constexpr FactorValue() = default;
  FactorValue(std::initializer_list<int> values) {
    if (values.size() > kMaxComponents) throw SchemaError("factor has too many components");
    for (int v : values) c_[size_++] = static_cast<std::int16_t>(v);
  }
  static FactorValue from_vector(const std::vector<int>& values) {
    if (values.size() > kMaxComponents) throw SchemaError("factor has too many components");
    FactorValue f;
    for (int v : values) f.c_[f.size_++] = static_cast<std::int16_t>(v);
    return f;
  }

  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] int operator[](std::size_t k) const { return c_[k]; }
  void set(std::size_t k, int v) { c_[k] = static_cast<std::int16_t>(v); }
  [[nodiscard]] std::vector<int> to_vector() const { return {c_.begin(), c_.begin() + size_}; }

  friend bool operator==(const FactorValue& a, const FactorValue& b) {
    if (a.size_ != b.size_) return false;
    for (std::size_t k = 0; k < a.size_; ++k)
      if (a.c_[k] != b.c_[k]) return false;
    return true;
  }

 private:
  std::array<std::int16_t, kMaxComponents> c_{};
  std::uint8_t size_ = 0;
};

using FactoredState = std::vector<FactorValue>;

struct ActionId {
  int value = 0;
  friend bool operator==(ActionId, ActionId) = default;
};

/// Local dependencies of one transition: N rows by N+1 columns, the last
/// column being the action. Row i is stored as a bitmask whose bit j is the
/// edge (s_i)' <- s_j; bit N is the action edge.
class DependencyGraph {
 public:
  DependencyGraph() = default;
  explicit DependencyGraph(std::size_t n) : n_(n), rows_(n, 0) {
    if (n == 0 || n > kMaxFactors) throw SchemaError("graph dimension out of range");
  }

  static DependencyGraph from_matrix(const std::vector<std::vector<int>>& m) {
    DependencyGraph g(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].size() != m.size() + 1) throw SchemaError("graph row must have N+1 columns");
      for (std::size_t j = 0; j <= m.size(); ++j)
        if (m[i][j]) g.set(i, j);
    }
    return g;
  }

  static DependencyGraph self_only(std::size_t n) {
    DependencyGraph g(n);
    for (std::size_t i = 0; i < n; ++i) g.set(i, i);
    return g;
  }

  [[nodiscard]] std::size_t factors() const { return n_; }
  [[nodiscard]] std::size_t columns() const { return n_ + 1; }
  [[nodiscard]] std::size_t action_column() const { return n_; }

  [[nodiscard]] bool edge(std::size_t i, std::size_t j) const {
    check(i, j);
    return (rows_[i] >> j) & 1u;
  }
  void set(std::size_t i, std::size_t j, bool on = true) {
    check(i, j);
    if (on)
      rows_[i] = static_cast<std::uint16_t>(rows_[i] | (1u << j));
    else
      rows_[i] = static_cast<std::uint16_t>(rows_[i] & ~(1u << j));
  }
  [[nodiscard]] std::uint16_t row_mask(std::size_t i) const {
    if (i >= n_) throw IndexError("graph row index out of range");
    return rows_[i];
  }
  void set_row_mask(std::size_t i, std::uint16_t mask) {
    if (i >= n_) throw IndexError("graph row index out of range");
    if (mask >> (n_ + 1)) throw SchemaError("row mask wider than N+1 columns");
    rows_[i] = mask;
  }

  friend bool operator==(const DependencyGraph&, const DependencyGraph&) = default;

 private:
  void check(std::size_t i, std::size_t j) const {
    if (i >= n_ || j > n_) throw IndexError("graph edge index out of range");
  }

  std::size_t n_ = 0;
  std::vector<std::uint16_t> rows_;
};

namespace detail {

inline std::string bits_to_hex(std::uint64_t value, std::size_t nbits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const std::size_t width = (nbits + 3) / 4;
  std::string out(width, '0');
  for (std::size_t d = 0; d < width; ++d)
    out[width - 1 - d] = kDigits[(value >> (4 * d)) & 0xF];
  return out;
}

inline std::uint64_t hex_to_bits(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) throw SchemaError("bad hex key length");
  std::uint64_t v = 0;
  for (char ch : hex) {
    int d = 0;
    if (ch >= '0' && ch <= '9')
      d = ch - '0';
    else if (ch >= 'a' && ch <= 'f')
      d = ch - 'a' + 10;
    else
      throw SchemaError("bad hex digit in key");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

}  // namespace detail

/// Canonical encoding of a full graph: the N*(N+1) edge bits packed
/// row-major, action column last in each row, first edge most significant.
struct GraphKey {
  std::uint8_t n = 0;
  std::uint64_t bits = 0;

  [[nodiscard]] std::size_t width() const { return static_cast<std::size_t>(n) * (n + 1); }
  [[nodiscard]] std::string bit_string() const {
    std::string s(width(), '0');
    for (std::size_t k = 0; k < width(); ++k)
      if ((bits >> (width() - 1 - k)) & 1u) s[k] = '1';
    return s;
  }
  [[nodiscard]] std::string hex() const { return detail::bits_to_hex(bits, width()); }
  static GraphKey from_hex(std::string_view hex, std::size_t n) {
    GraphKey k{static_cast<std::uint8_t>(n), detail::hex_to_bits(hex)};
    if (k.width() < 64 && (k.bits >> k.width()) != 0) throw SchemaError("graph key wider than N*(N+1)");
    return k;
  }

  friend bool operator==(const GraphKey&, const GraphKey&) = default;
  friend auto operator<=>(const GraphKey&, const GraphKey&) = default;
};

/// One graph row tagged with its factor index. Bit j of `mask` is column j.
struct RowKey {
  std::uint8_t factor = 0;
  std::uint8_t n = 0;
  std::uint16_t mask = 0;

  [[nodiscard]] std::string bit_string() const {
    std::string s(n + 1u, '0');
    for (std::size_t j = 0; j <= n; ++j)
      if ((mask >> j) & 1u) s[j] = '1';
    return s;
  }
  /// "<factor>:<hex of the row bits, column 0 most significant>"
  [[nodiscard]] std::string hex() const {
    std::uint64_t v = 0;
    for (std::size_t j = 0; j <= n; ++j) v = (v << 1) | ((mask >> j) & 1u);
    return std::to_string(factor) + ":" + detail::bits_to_hex(v, n + 1u);
  }
  static RowKey from_hex(std::string_view text, std::size_t n) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw SchemaError("row key needs '<factor>:<hex>'");
    const int factor = std::stoi(std::string(text.substr(0, colon)));
    if (factor < 0 || static_cast<std::size_t>(factor) >= n) throw IndexError("row key factor out of range");
    const std::uint64_t v = detail::hex_to_bits(text.substr(colon + 1));
    if ((v >> (n + 1)) != 0) throw SchemaError("row key wider than N+1");
    RowKey r{static_cast<std::uint8_t>(factor), static_cast<std::uint8_t>(n), 0};
    for (std::size_t j = 0; j <= n; ++j)
      if ((v >> (n - j)) & 1u) r.mask = static_cast<std::uint16_t>(r.mask | (1u << j));
    return r;
  }

  [[nodiscard]] bool has(std::size_t column) const { return (mask >> column) & 1u; }
  /// True when the row asserts nothing beyond (possibly) self-dependence.
  [[nodiscard]] bool trivial() const { return (mask & ~(1u << factor)) == 0; }
  [[nodiscard]] std::uint32_t packed() const {
    return (static_cast<std::uint32_t>(factor) << 16) | mask;
  }

  friend bool operator==(const RowKey&, const RowKey&) = default;
  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

inline RowKey row_from_columns(std::size_t factor, std::size_t n, std::initializer_list<std::size_t> cols) {
  RowKey r{static_cast<std::uint8_t>(factor), static_cast<std::uint8_t>(n), 0};
  for (auto c : cols) {
    if (c > n) throw IndexError("row column out of range");
    r.mask = static_cast<std::uint16_t>(r.mask | (1u << c));
  }
  return r;
}

inline GraphKey graph_encode(const DependencyGraph& g) {
  const std::size_t n = g.factors();
  if (n == 0 || n > kMaxFactors) throw SchemaError("graph has invalid dimensions");
  GraphKey key{static_cast<std::uint8_t>(n), 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= n; ++j) key.bits = (key.bits << 1) | (g.edge(i, j) ? 1u : 0u);
  return key;
}

inline DependencyGraph graph_decode(const GraphKey& key) {
  DependencyGraph g(key.n);
  const std::size_t w = key.width();
  std::size_t k = 0;
  for (std::size_t i = 0; i < key.n; ++i)
    for (std::size_t j = 0; j <= key.n; ++j, ++k)
      if ((key.bits >> (w - 1 - k)) & 1u) g.set(i, j);
  return g;
}

inline RowKey graph_row(const DependencyGraph& g, std::size_t i) {
  if (i >= g.factors()) throw IndexError("graph_row: factor index out of range");
  return RowKey{static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(g.factors()), g.row_mask(i)};
}

inline RowKey graph_row(const GraphKey& key, std::size_t i) {
  if (i >= key.n) throw IndexError("graph_row: factor index out of range");
  const std::size_t cols = key.n + 1u;
  const std::size_t shift = key.width() - (i + 1) * cols;
  const std::uint64_t bits = (key.bits >> shift) & ((1ull << cols) - 1);
  RowKey r{static_cast<std::uint8_t>(i), key.n, 0};
  for (std::size_t j = 0; j < cols; ++j)
    if ((bits >> (cols - 1 - j)) & 1u) r.mask = static_cast<std::uint16_t>(r.mask | (1u << j));
  return r;
}

inline bool rows_equal(const RowKey& a, const RowKey& b) { return a == b; }

/// Skill target: a desired row for one factor plus a diversity indicator.
/// `graph_free` marks the row-less skills of the no-graph ablation.
struct Skill {
  RowKey row;
  int diversity = 0;
  bool graph_free = false;

  [[nodiscard]] std::size_t factor() const { return row.factor; }
  friend bool operator==(const Skill&, const Skill&) = default;
};

struct TransitionRecord {
  FactoredState s;
  ActionId a;
  FactoredState s_next;
  std::optional<DependencyGraph> oracle_graph;
  std::optional<Skill> skill;
  std::vector<std::uint8_t> task_rewards;  // indexed like EnvSchema::tasks
};

// ---------------------------------------------------------------------------
// Random streams

enum class StreamTag : std::uint64_t {
  Warmup = 1,
  Explore = 2,
  Select = 3,
  Relabel = 4,
  Replay = 5,
  TaskExplore = 6,
  Coverage = 7,
  Evaluate = 8,
  Vanilla = 9,
  Fuzz = 10,
  Synthetic = 11,
};

namespace detail {
inline constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based stream: draw k of stream (seed, tag) is a pure hash of
/// (seed, tag, k), so streams never interfere with each other.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t sub = 0)
      : key_(detail::splitmix(detail::splitmix(seed) ^ (static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ull) ^
                              detail::splitmix(sub + 0x632be59bd9b4e019ull))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return detail::splitmix(key_ ^ detail::splitmix(counter_++)); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("RngStream::below(0)");
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do x = (*this)();
    while (x >= limit);
    return x % n;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace skild
