#pragma once

// Run artifacts: atomic file writes, versioned binary checkpoints for skills
// and dynamics, JSON history, and the JSON-lines transition log.

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "skild/downstream.hpp"

namespace skild::io {

inline constexpr const char* kCodeVersion = "skild 0.1.0";
inline constexpr std::uint32_t kSkillsFormat = 1;
inline constexpr std::uint32_t kDynamicsFormat = 1;

using nlohmann::json;

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Binary encoding (host byte order, fixed-width fields)

class Writer {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void raw(const char* magic) { buf_.append(magic, 8); }
  [[nodiscard]] const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  template <class T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic(const char* magic) {
    need(8);
    if (b_.compare(pos_, 8, magic) != 0) throw LoadError(std::string("bad checkpoint magic, expected ") + magic);
    pos_ += 8;
  }
  [[nodiscard]] bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw LoadError("truncated checkpoint");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

template <class Map>
auto sorted_keys(const Map& m) {
  std::vector<typename Map::key_type> keys;
  keys.reserve(m.size());
  for (const auto& kv : m) keys.push_back(kv.first);
  return keys;
}

// ---------------------------------------------------------------------------
// skills.ckpt: policy, discriminator and history

inline std::string encode_skills(const SkillArtifacts& art) {
  Writer w;
  w.raw("SKILDSKL");
  w.put(kSkillsFormat);
  w.str(kCodeVersion);
  w.str(art.env);
  w.put<std::int32_t>(art.diversity);
  w.put<std::uint8_t>(art.no_graph);
  w.put<std::uint8_t>(art.no_diversity);

  const auto& pol = art.policy;
  w.put<std::uint64_t>(pol.actions());
  w.put(pol.config().gamma);
  w.put(pol.config().eta);
  w.put(pol.config().eps_start);
  w.put(pol.config().eps_end);
  auto qkeys = sorted_keys(pol.table());
  std::sort(qkeys.begin(), qkeys.end(),
            [](const SkillKey& a, const SkillKey& b) { return std::tie(a.state, a.skill) < std::tie(b.state, b.skill); });
  w.put<std::uint64_t>(qkeys.size());
  for (const auto& k : qkeys) {
    w.put(k.state);
    w.put(k.skill);
    const auto& v = pol.table().at(k);
    for (std::size_t a = 0; a < pol.actions(); ++a) w.put(v[a]);
  }

  const auto& disc = art.discriminator;
  w.put<std::int32_t>(disc.k());
  w.put(disc.beta());
  auto dkeys = sorted_keys(disc.table());
  std::sort(dkeys.begin(), dkeys.end(), [](const Discriminator::Key& a, const Discriminator::Key& b) {
    return std::tie(a.state, a.target) < std::tie(b.state, b.target);
  });
  w.put<std::uint64_t>(dkeys.size());
  for (const auto& k : dkeys) {
    w.put(k.state);
    w.put(k.target);
    const auto& c = disc.table().at(k);
    for (int b = 0; b < disc.k(); ++b) w.put(c[static_cast<std::size_t>(b)]);
  }

  w.put<std::uint64_t>(art.history.graphs().size());
  for (const auto& [g, c] : art.history.graphs()) {
    w.put(g.n);
    w.put(g.bits);
    w.put(c);
  }
  w.put<std::uint64_t>(art.history.rows().size());
  for (const auto& [r, c] : art.history.rows()) {
    w.put(r.factor);
    w.put(r.n);
    w.put(r.mask);
    w.put(c);
  }
  return w.bytes();
}

inline SkillArtifacts decode_skills(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic("SKILDSKL");
  const auto format = r.get<std::uint32_t>();
  if (format != kSkillsFormat) throw LoadError("unsupported skills checkpoint format " + std::to_string(format));
  r.str();  // writer version, informational
  SkillArtifacts art;
  art.env = r.str();
  make_env(art.env);  // rejects unknown env names
  art.diversity = r.get<std::int32_t>();
  art.no_graph = r.get<std::uint8_t>() != 0;
  art.no_diversity = r.get<std::uint8_t>() != 0;

  const auto actions = r.get<std::uint64_t>();
  QConfig q;
  q.gamma = r.get<double>();
  q.eta = r.get<double>();
  q.eps_start = r.get<double>();
  q.eps_end = r.get<double>();
  art.policy = SkillPolicy(actions, q);
  const auto nq = r.get<std::uint64_t>();
  auto& qt = art.policy.mutable_table();
  for (std::uint64_t i = 0; i < nq; ++i) {
    SkillKey k;
    k.state = r.get<std::uint64_t>();
    k.skill = r.get<std::uint32_t>();
    ActionValues v{};
    for (std::size_t a = 0; a < actions; ++a) v[a] = r.get<double>();
    qt.emplace(k, v);
  }

  const int k = r.get<std::int32_t>();
  const double beta = r.get<double>();
  art.discriminator = Discriminator(k, beta);
  const auto nd = r.get<std::uint64_t>();
  auto& dt = art.discriminator.mutable_table();
  for (std::uint64_t i = 0; i < nd; ++i) {
    Discriminator::Key key;
    key.state = r.get<std::uint64_t>();
    key.target = r.get<std::uint32_t>();
    Discriminator::Counts c{};
    for (int b = 0; b < k; ++b) c[static_cast<std::size_t>(b)] = r.get<std::uint32_t>();
    dt.emplace(key, c);
  }

  std::map<GraphKey, std::uint64_t> graphs;
  const auto ng = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < ng; ++i) {
    GraphKey g;
    g.n = r.get<std::uint8_t>();
    g.bits = r.get<std::uint64_t>();
    graphs[g] = r.get<std::uint64_t>();
  }
  std::map<RowKey, std::uint64_t> rows;
  const auto nr = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nr; ++i) {
    RowKey row;
    row.factor = r.get<std::uint8_t>();
    row.n = r.get<std::uint8_t>();
    row.mask = r.get<std::uint16_t>();
    rows[row] = r.get<std::uint64_t>();
  }
  art.history.restore(std::move(graphs), std::move(rows));
  if (!r.done()) throw LoadError("trailing bytes in skills checkpoint");
  return art;
}

inline void save_skills(const std::filesystem::path& path, const SkillArtifacts& art) {
  write_atomic(path, encode_skills(art));
}
inline SkillArtifacts load_skills(const std::filesystem::path& path) { return decode_skills(read_file(path)); }

// ---------------------------------------------------------------------------
// dynamics.ckpt: masked count tables

inline void put_table(Writer& w, const MaskedCountModel::Table& t) {
  auto keys = sorted_keys(t);
  std::sort(keys.begin(), keys.end());
  w.put<std::uint64_t>(keys.size());
  for (const auto k : keys) {
    w.put(k);
    const auto& hs = t.at(k);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(hs.size()));
    for (const auto& h : hs) {
      auto bins = h.bins;
      std::sort(bins.begin(), bins.end());
      w.put(h.total);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(bins.size()));
      for (const auto& [code, count] : bins) {
        w.put(code);
        w.put(count);
      }
    }
  }
}

inline MaskedCountModel::Table get_table(Reader& r) {
  MaskedCountModel::Table t;
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto key = r.get<std::uint64_t>();
    std::vector<Histogram> hs(r.get<std::uint32_t>());
    for (auto& h : hs) {
      h.total = r.get<std::uint32_t>();
      h.bins.resize(r.get<std::uint32_t>());
      for (auto& [code, count] : h.bins) {
        code = r.get<std::uint32_t>();
        count = r.get<std::uint32_t>();
      }
    }
    t.emplace(key, std::move(hs));
  }
  return t;
}

inline std::string encode_dynamics(const std::string& env, const MaskedCountModel& m) {
  Writer w;
  w.raw("SKILDDYN");
  w.put(kDynamicsFormat);
  w.str(kCodeVersion);
  w.str(env);
  w.put(m.alpha());
  w.put(m.updates());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.n()));
  put_table(w, m.full_table());
  for (std::size_t j = 0; j <= m.n(); ++j) put_table(w, m.masked_table(j));
  return w.bytes();
}

inline MaskedCountModel decode_dynamics(const std::string& bytes, std::string* env_out = nullptr) {
  Reader r(bytes);
  r.expect_magic("SKILDDYN");
  const auto format = r.get<std::uint32_t>();
  if (format != kDynamicsFormat) throw LoadError("unsupported dynamics checkpoint format " + std::to_string(format));
  r.str();
  const std::string env = r.str();
  const auto e = make_env(env);
  const double alpha = r.get<double>();
  const auto updates = r.get<std::uint64_t>();
  const auto n = r.get<std::uint32_t>();
  MaskedCountModel m(e->schema(), alpha);
  if (n != m.n()) throw LoadError("dynamics checkpoint factor count does not match env " + env);
  auto full = get_table(r);
  std::vector<MaskedCountModel::Table> masked;
  for (std::size_t j = 0; j <= n; ++j) masked.push_back(get_table(r));
  if (!r.done()) throw LoadError("trailing bytes in dynamics checkpoint");
  m.restore(std::move(full), std::move(masked), updates);
  if (env_out) *env_out = env;
  return m;
}

inline void save_dynamics(const std::filesystem::path& path, const std::string& env, const MaskedCountModel& m) {
  write_atomic(path, encode_dynamics(env, m));
}
inline MaskedCountModel load_dynamics(const std::filesystem::path& path, std::string* env_out = nullptr) {
  return decode_dynamics(read_file(path), env_out);
}

// ---------------------------------------------------------------------------
// JSON exports

inline json history_json(const EnvSchema& schema, const GraphHistory& h) {
  json graphs = json::array();
  for (const auto& [g, c] : h.graphs()) graphs.push_back({{"key", g.hex()}, {"count", c}});
  json rows = json::array();
  for (const auto& [r, c] : h.rows())
    rows.push_back({{"row", r.hex()}, {"label", schema.row_label(r)}, {"count", c}});
  return {{"env", schema.name}, {"graphs", graphs}, {"rows", rows}};
}

inline json state_json(const FactoredState& s) {
  json out = json::array();
  for (const auto& f : s) out.push_back(f.to_vector());
  return out;
}

inline FactoredState state_from_json(const json& j) {
  FactoredState s;
  for (const auto& f : j) s.push_back(FactorValue::from_vector(f.get<std::vector<int>>()));
  return s;
}

/// One JSON-lines record: s, a, s_next, the oracle GraphKey, and the skill.
inline std::string transition_line(const FactoredState& s, ActionId a, const StepOutcome& out,
                                   const std::optional<Skill>& z) {
  json j{{"s", state_json(s)}, {"a", a.value}, {"s_next", state_json(out.s_next)},
         {"oracle", graph_encode(out.oracle_graph).hex()}};
  if (z) j["skill"] = z->graph_free ? std::string("free") : z->row.hex();
  return j.dump() + "\n";
}

struct LoggedTransition {
  FactoredState s;
  ActionId a;
  FactoredState s_next;
  std::optional<GraphKey> oracle;
};

inline std::vector<LoggedTransition> read_transition_log(const std::filesystem::path& path, std::size_t n_factors) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot read " + path.string());
  std::vector<LoggedTransition> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      LoggedTransition t{state_from_json(j.at("s")), ActionId{j.at("a").get<int>()}, state_from_json(j.at("s_next")),
                         std::nullopt};
      if (j.contains("oracle")) t.oracle = GraphKey::from_hex(j.at("oracle").get<std::string>(), n_factors);
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace skild::io
