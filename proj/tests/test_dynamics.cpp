#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "skild/dynamics.hpp"
#include "skild/env_registry.hpp"
#include "support/synthetic_dbn.hpp"

using namespace skild;

namespace {

StateCoder binary_coder(std::size_t factors, int bins, std::size_t actions) {
  std::vector<FactorSpec> f;
  for (std::size_t i = 0; i < factors; ++i) f.push_back({"f" + std::to_string(i), {{"v", bins}}});
  return StateCoder(f, actions);
}

FactoredState st(std::initializer_list<int> v) {
  FactoredState s;
  for (int x : v) s.push_back(FactorValue{x});
  return s;
}

// s'1 = s1 xor s2, s'2 = s2; every joint input seen `reps` times.
MaskedCountModel xor_model(int reps) {
  MaskedCountModel m(binary_coder(2, 2, 1), 1.0);
  for (int r = 0; r < reps; ++r)
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) m.update(st({x, y}), ActionId{0}, st({x ^ y, y}));
  return m;
}

probe::EdgeScore score_dbn(std::uint64_t seed, int train, int eval, const PcmiConfig& cfg) {
  probe::SyntheticDbn dbn;
  MaskedCountModel m(dbn.coder(), cfg.alpha);
  RngStream rng(seed, StreamTag::Synthetic);
  for (int k = 0; k < train; ++k) {
    auto [s, a, n] = dbn.sample(rng);
    m.update(s, a, n);
  }
  RngStream test(seed, StreamTag::Synthetic, 1);
  probe::EdgeScore score;
  for (int k = 0; k < eval; ++k) {
    auto [s, a, n] = dbn.sample(test);
    score.add(m.infer_graph(s, a, n, cfg), dbn.oracle_graph(s, a.value, n));
  }
  return score;
}

}  // namespace

TEST(Update, FreshModelCountsOne) {
  MaskedCountModel m(binary_coder(3, 4, 2), 1.0);
  const auto s = st({1, 2, 3}), n = st({2, 2, 3});
  m.update(s, ActionId{1}, n);
  EXPECT_EQ(m.updates(), 1u);
  EXPECT_EQ(m.support(s, ActionId{1}), 1u);
  EXPECT_EQ(m.full_table().size(), 1u);
  for (std::size_t j = 0; j <= 3; ++j) {
    ASSERT_EQ(m.masked_table(j).size(), 1u);
    for (const auto& h : m.masked_table(j).begin()->second) EXPECT_EQ(h.total, 1u);
  }
}

TEST(Update, LaplaceArithmetic) {
  MaskedCountModel m(binary_coder(1, 4, 1), 1.0);
  const auto s = st({0}), n = st({3});
  m.update(s, ActionId{0}, n);
  m.update(s, ActionId{0}, n);
  EXPECT_DOUBLE_EQ(m.probability(0, s, ActionId{0}, n[0]), 3.0 / 6.0);
  for (int k = 0; k < 98; ++k) m.update(s, ActionId{0}, n);
  EXPECT_DOUBLE_EQ(m.probability(0, s, ActionId{0}, n[0]), 101.0 / 104.0);
}

TEST(Predict, UnseenContextIsUniform) {
  MaskedCountModel m(binary_coder(2, 4, 1), 1.0);
  for (double p : m.predict(0, st({0, 0}), ActionId{0})) EXPECT_DOUBLE_EQ(p, 0.25);
  for (double p : m.predict(1, st({0, 0}), ActionId{0}, 0)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Predict, DeterministicEnvGivesPointMasses) {
  PrinterEnv env;
  MaskedCountModel m(env.schema(), 1.0);
  const auto s = env.reset();
  const auto out = env.step(s, ActionId{0});
  m.update(s, ActionId{0}, out.s_next);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto p = m.predict(i, s, ActionId{0});
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    EXPECT_EQ(static_cast<std::uint64_t>(best), env.schema().coder.code(i, out.s_next[i]));
  }
}

TEST(Predict, XorMaskedIsUniform) {
  const auto m = xor_model(50);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const auto p = m.predict(0, st({x, y}), ActionId{0}, 1);
      EXPECT_DOUBLE_EQ(p[0], 0.5);
      EXPECT_DOUBLE_EQ(p[1], 0.5);
    }
}

TEST(Predict, NormalizedEverywhere) {
  probe::SyntheticDbn dbn;
  MaskedCountModel m(dbn.coder(), 1.0);
  RngStream rng(1, StreamTag::Synthetic);
  for (int k = 0; k < 3000; ++k) {
    auto [s, a, n] = dbn.sample(rng);
    m.update(s, a, n);
    if (k % 100 == 0)
      for (std::size_t i = 0; i < 4; ++i)
        for (int j = -1; j <= 4; ++j) {
          const auto p = m.predict(i, s, a, j);
          EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
        }
  }
}

TEST(Pcmi, XorApproachesLog2) {
  const auto m = xor_model(2000);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const auto s = st({x, y}), n = st({x ^ y, y});
      EXPECT_NEAR(m.pcmi(0, 1, s, ActionId{0}, n), std::log(2.0), 1e-3);
      EXPECT_NEAR(m.pcmi(0, 0, s, ActionId{0}, n), std::log(2.0), 1e-3);
    }
}

TEST(Pcmi, UnkeyedColumnIsExactlyZero) {
  // a single action: masking it changes nothing
  const auto m = xor_model(3);
  EXPECT_EQ(m.pcmi(0, 2, st({1, 0}), ActionId{0}, st({1, 0})), 0.0);
  EXPECT_EQ(m.pcmi(1, 2, st({1, 1}), ActionId{0}, st({0, 1})), 0.0);
}

TEST(Pcmi, IrrelevantFactorVanishes) {
  // f2 never feeds f0; mean |pcmi| over fresh transitions after 50k samples
  probe::SyntheticDbn dbn;
  MaskedCountModel m(dbn.coder(), 1.0);
  RngStream rng(9, StreamTag::Synthetic);
  for (int k = 0; k < 50000; ++k) {
    auto [s, a, n] = dbn.sample(rng);
    m.update(s, a, n);
  }
  RngStream test(9, StreamTag::Synthetic, 1);
  double sum = 0;
  int count = 0;
  for (int k = 0; k < 2000; ++k) {
    auto [s, a, n] = dbn.sample(test);
    if (n[0][0] != probe::SyntheticDbn::mechanism(0, s, a.value)) continue;
    sum += std::abs(m.pcmi(0, 2, s, a, n));
    ++count;
  }
  EXPECT_LT(sum / count, 0.05);
}

TEST(Oracle, PcmiMarginAroundThreshold) {
  // no exact pCMI of the generator sits within 0.25 of ln 2
  probe::SyntheticDbn dbn;
  double closest = 1e9;
  for (int code = 0; code < 256; ++code)
    for (int a = 0; a < 3; ++a) {
      FactoredState s(4);
      for (int i = 0; i < 4; ++i) s[i] = FactorValue{(code >> (2 * i)) & 3};
      for (std::size_t i = 0; i < 4; ++i)
        for (int y = 0; y < 4; ++y) {
          FactoredState n = s;
          n[i] = FactorValue{y};
          for (std::size_t j = 0; j <= 4; ++j)
            closest = std::min(closest, std::abs(dbn.true_pcmi(i, j, s, a, n) - std::log(2.0)));
        }
    }
  EXPECT_GT(closest, 0.25);
}

TEST(InferGraph, SyntheticDbnPrecisionRecall) {
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto score = score_dbn(seed, 50000, 5000, PcmiConfig{});
    EXPECT_GE(score.precision(), 0.95) << seed;
    EXPECT_GE(score.recall(), 0.95) << seed;
  }
}

TEST(InferGraph, MonotoneInSampleCount) {
  for (std::uint64_t seed : {0, 1, 2}) {
    double prev_p = 0, prev_r = 0;
    for (int n : {10000, 25000, 50000}) {
      const auto score = score_dbn(seed, n, 3000, PcmiConfig{});
      EXPECT_GE(score.precision(), prev_p - 0.02) << seed << " " << n;
      EXPECT_GE(score.recall(), prev_r - 0.02) << seed << " " << n;
      prev_p = score.precision();
      prev_r = score.recall();
    }
  }
}

TEST(InferGraph, IdentityEnvIsDiagonal) {
  const auto coder = binary_coder(3, 8, 2);
  MaskedCountModel m(coder, 1.0);
  RngStream rng(4, StreamTag::Synthetic);
  std::vector<std::pair<FactoredState, int>> seen;
  for (int k = 0; k < 20000; ++k) {
    const auto s = st({int(rng.below(8)), int(rng.below(8)), int(rng.below(8))});
    const int a = int(rng.below(2));
    m.update(s, ActionId{a}, s);
    seen.emplace_back(s, a);
  }
  for (int k = 0; k < 200; ++k) {
    const auto& [s, a] = seen[k];
    if (m.support(s, ActionId{a}) < 5) continue;
    EXPECT_EQ(m.infer_graph(s, ActionId{a}, s, PcmiConfig{}), DependencyGraph::self_only(3));
  }
}

TEST(InferGraph, LowSupportFallsBackToSelfOnly) {
  const auto m = xor_model(1);
  PcmiConfig cfg;
  cfg.min_support = 5;
  EXPECT_EQ(m.infer_graph(st({1, 1}), ActionId{0}, st({0, 1}), cfg), DependencyGraph::self_only(2));
  cfg.min_support = 1;
  EXPECT_NE(m.infer_graph(st({1, 1}), ActionId{0}, st({0, 1}), cfg), DependencyGraph::self_only(2));
}

TEST(InferGraph, CleaningCarSoakMatchesOracle) {
  CleaningCarEnv env;
  using CC = CleaningCarEnv;
  MaskedCountModel m(env.schema(), 1.0);
  auto s = env.reset();
  s[CC::Sink].set(2, 1);
  s[CC::Rag] = FactorValue{3, 2, 0, 0, 1};
  // the soak context, and the same context with each column varied
  std::vector<std::pair<FactoredState, int>> contexts;
  contexts.emplace_back(s, CC::Left);
  for (int a = 0; a < 7; ++a) contexts.emplace_back(s, a);
  for (int on = 0; on < 2; ++on) {
    auto p = s;
    p[CC::Sink].set(2, on);
    contexts.emplace_back(p, CC::Left);
  }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      auto p = s;
      p[CC::Rag] = FactorValue{x, y, 0, 0, 1};
      contexts.emplace_back(p, CC::Left);
      auto q = s;
      q[CC::Agent] = FactorValue{x, y, (x + y) % 4};
      contexts.emplace_back(q, CC::Left);
      auto r = s;
      r[CC::Sink] = FactorValue{x, y, 1};
      contexts.emplace_back(r, CC::Left);
    }
  for (int rep = 0; rep < 400; ++rep)
    for (const auto& [c, a] : contexts) m.update(c, ActionId{a}, env.step(c, ActionId{a}).s_next);
  const auto out = env.step(s, ActionId{CC::Left});
  PcmiConfig cfg;
  cfg.alpha = 1.0;
  const auto g = m.infer_graph(s, ActionId{CC::Left}, out.s_next, cfg);
  EXPECT_EQ(graph_row(g, CC::Rag), graph_row(out.oracle_graph, CC::Rag));
}

TEST(Invariants, ReplayOrderDoesNotMatter) {
  probe::SyntheticDbn dbn;
  RngStream rng(3, StreamTag::Synthetic);
  std::vector<std::tuple<FactoredState, ActionId, FactoredState>> data;
  for (int k = 0; k < 5000; ++k) data.push_back(dbn.sample(rng));
  MaskedCountModel a(dbn.coder(), 1.0), b(dbn.coder(), 1.0);
  for (const auto& [s, act, n] : data) a.update(s, act, n);
  std::reverse(data.begin(), data.end());
  std::shuffle(data.begin(), data.end(), rng);
  for (const auto& [s, act, n] : data) b.update(s, act, n);
  EXPECT_TRUE(a == b);
  const auto& [s0, a0, n0] = data.front();
  EXPECT_EQ(a.pcmi(0, 4, s0, a0, n0), b.pcmi(0, 4, s0, a0, n0));
}

TEST(Invariants, MaskedTableNeverKeysOnMaskedColumn) {
  MaskedCountModel m(binary_coder(3, 4, 2), 1.0);
  for (int v = 0; v < 4; ++v) m.update(st({v, 1, 2}), ActionId{0}, st({v, 1, 2}));
  EXPECT_EQ(m.masked_table(0).size(), 1u);
  EXPECT_EQ(m.masked_table(1).size(), 4u);
  for (int a = 0; a < 2; ++a) m.update(st({0, 1, 2}), ActionId{a}, st({0, 1, 2}));
  EXPECT_EQ(m.masked_table(3).size(), 4u);
}

TEST(Errors, SchemaViolationsThrow) {
  MaskedCountModel m(binary_coder(2, 2, 1), 1.0);
  EXPECT_THROW(m.update(st({0, 2}), ActionId{0}, st({0, 0})), SchemaError);
  EXPECT_THROW(m.update(st({0, 1}), ActionId{1}, st({0, 0})), SchemaError);
  EXPECT_THROW(m.update(st({0}), ActionId{0}, st({0})), SchemaError);
  EXPECT_THROW((void)m.pcmi(0, 3, st({0, 0}), ActionId{0}, st({0, 0})), IndexError);
  EXPECT_THROW(PcmiConfig({0.0, 1.0, 5}).validate(), ConfigError);
  EXPECT_THROW(PcmiConfig({1.0, 0.0, 5}).validate(), ConfigError);
  EXPECT_THROW(PcmiConfig({1.0, 1.0, 0}).validate(), ConfigError);
}
