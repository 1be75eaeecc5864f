#include <gtest/gtest.h>

#include <cmath>

#include "skild/scheduler.hpp"

using namespace skild;

namespace {

RowKey row(std::size_t f, std::size_t n, std::initializer_list<std::size_t> cols) { return row_from_columns(f, n, cols); }

DependencyGraph graph_from_rows(std::size_t n, const std::vector<RowKey>& rows) {
  auto g = DependencyGraph::self_only(n);
  for (const auto& r : rows) g.set_row_mask(r.factor, r.mask);
  return g;
}

DiscoveryConfig small(const std::string& env, std::uint64_t steps, DependencySource src) {
  DiscoveryConfig c;
  c.env = env;
  c.total_steps = steps;
  c.source = src;
  c.metrics_interval = 2000;
  return c;
}

}  // namespace

TEST(GraphHistory, RecordCountsGraphsAndNonTrivialRows) {
  GraphHistory h;
  const auto push = row(0, 2, {0, 2});
  const auto g = graph_from_rows(2, {push});
  h.record_induced(g);
  EXPECT_EQ(h.count(g), 1u);
  EXPECT_EQ(h.row_count(push), 1u);
  EXPECT_EQ(h.rows().size(), 1u);  // factor 1's self-only row is excluded
  h.record_induced(g);
  EXPECT_EQ(h.count(g), 2u);
  EXPECT_EQ(h.row_count(push), 2u);
}

TEST(GraphHistory, SelfOnlyGraphsAddNoRows) {
  GraphHistory h;
  h.record_induced(DependencyGraph::self_only(3));
  EXPECT_EQ(h.graphs().size(), 1u);
  EXPECT_TRUE(h.empty_rows());
  EXPECT_EQ(h.row_count(row(0, 3, {0})), 0u);
}

TEST(GraphHistory, RowsOfFiltersByFactor) {
  GraphHistory h;
  h.record_induced(graph_from_rows(2, {row(0, 2, {0, 1}), row(1, 2, {1, 2})}));
  h.record_induced(graph_from_rows(2, {row(1, 2, {0, 1})}));
  EXPECT_EQ(h.rows_of(0).size(), 1u);
  EXPECT_EQ(h.rows_of(1).size(), 2u);
}

TEST(GraphHistory, EveryRowComesFromARecordedGraph) {
  GraphHistory h;
  RngStream rng(5, StreamTag::Fuzz);
  for (int k = 0; k < 500; ++k) {
    DependencyGraph g(3);
    for (std::size_t i = 0; i < 3; ++i) g.set_row_mask(i, static_cast<std::uint16_t>(rng.below(16)));
    h.record_induced(g);
  }
  for (const auto& [r, c] : h.rows()) {
    std::uint64_t from_graphs = 0;
    for (const auto& [g, gc] : h.graphs())
      if (graph_row(g, r.factor) == r) from_graphs += gc;
    EXPECT_EQ(from_graphs, c) << r.hex();
  }
}

TEST(Novelty, Arithmetic) {
  EXPECT_DOUBLE_EQ(novelty_from_count(1), 1.0);
  EXPECT_DOUBLE_EQ(novelty_from_count(4), 0.5);
  EXPECT_DOUBLE_EQ(novelty_from_count(100), 0.1);
  EXPECT_THROW((void)novelty_from_count(0), ContractError);
  GraphHistory h;
  EXPECT_THROW((void)novelty_reward(h, DependencyGraph::self_only(2)), ContractError);
}

TEST(Novelty, StrictlyDecreasingInCount) {
  for (std::uint64_t c = 1; c < 5000; ++c) ASSERT_GT(novelty_from_count(c), novelty_from_count(c + 1));
}

TEST(SelectSkill, EmptyHistoryIsNotBootstrapped) {
  GraphHistory h;
  RngStream rng(0, StreamTag::Select);
  EXPECT_THROW((void)select_skill(h, {}, rng, DiscoveryConfig{}), NotBootstrappedError);
}

TEST(SelectSkill, SingleRowIsAlwaysChosen) {
  GraphHistory h;
  const auto r = row(1, 2, {0, 1});
  h.record_induced(graph_from_rows(2, {r}));
  RngStream rng(0, StreamTag::Select);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(select_skill(h, {}, rng, DiscoveryConfig{}).row, r);
}

TEST(SelectSkill, HighTemperatureLimitPicksMostNovel) {
  GraphHistory h;
  const auto r1 = row(0, 2, {0, 1}), r2 = row(0, 2, {0, 2});
  h.record_induced(graph_from_rows(2, {r1}));
  for (int i = 0; i < 4; ++i) h.record_induced(graph_from_rows(2, {r2}));
  DiscoveryConfig cfg;
  cfg.tau = 1e6;
  RngStream rng(0, StreamTag::Select);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(select_skill(h, {}, rng, cfg).row, r1);
}

TEST(SelectSkill, SoftmaxMatchesNoveltyWeights) {
  GraphHistory h;
  const auto r1 = row(0, 2, {0, 1}), r2 = row(0, 2, {0, 2});
  h.record_induced(graph_from_rows(2, {r1}));
  for (int i = 0; i < 4; ++i) h.record_induced(graph_from_rows(2, {r2}));
  const double p1 = std::exp(3.0) / (std::exp(3.0) + std::exp(1.5));
  RngStream rng(9, StreamTag::Select);
  const int draws = 20000;
  int n1 = 0;
  for (int i = 0; i < draws; ++i) n1 += select_skill(h, {}, rng, DiscoveryConfig{}).row == r1;
  EXPECT_NEAR(n1 / static_cast<double>(draws), p1, 0.015);
}

TEST(SelectSkill, DiversityIndicatorIsUniform) {
  GraphHistory h;
  h.record_induced(graph_from_rows(2, {row(0, 2, {0, 1}), row(1, 2, {1, 2})}));
  RngStream rng(1, StreamTag::Select);
  DiscoveryConfig cfg;
  std::array<int, 4> hist{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++hist[static_cast<std::size_t>(select_skill(h, {}, rng, cfg).diversity)];
  double chi2 = 0;
  for (int c : hist) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  EXPECT_LT(chi2, 11.34);  // chi2(3) at p = 0.01
}

TEST(SelectSkill, OnlyReturnsRowsInHistory) {
  GraphHistory h;
  RngStream fill(3, StreamTag::Fuzz);
  for (int k = 0; k < 50; ++k) {
    DependencyGraph g(3);
    for (std::size_t i = 0; i < 3; ++i) g.set_row_mask(i, static_cast<std::uint16_t>(fill.below(16)));
    h.record_induced(g);
  }
  RngStream rng(4, StreamTag::Select);
  for (int i = 0; i < 2000; ++i) {
    const auto z = select_skill(h, {}, rng, DiscoveryConfig{});
    ASSERT_GT(h.row_count(z.row), 0u);
  }
}

TEST(SelectSkill, AblationFlags) {
  GraphHistory h;
  h.record_induced(graph_from_rows(2, {row(0, 2, {0, 1})}));
  RngStream rng(2, StreamTag::Select);
  DiscoveryConfig no_div;
  no_div.no_diversity = true;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_skill(h, {}, rng, no_div).diversity, 0);
  DiscoveryConfig no_graph;
  no_graph.no_graph = true;
  GraphHistory empty;
  const auto z = select_skill(empty, {}, rng, no_graph);
  EXPECT_TRUE(z.graph_free);
}

TEST(DiscoveryConfig, Validation) {
  DiscoveryConfig c;
  EXPECT_NO_THROW(c.validate());
  c.skill_horizon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DiscoveryConfig{};
  c.diversity = 17;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DiscoveryConfig{};
  c.her_ratio = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DiscoveryConfig{};
  c.pcmi.min_support = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DiscoveryConfig{};
  c.env = "nope";
  EXPECT_THROW((void)discover(c), ConfigError);
}

TEST(Epsilon, LinearOverFirstHalf) {
  QConfig q;
  EXPECT_DOUBLE_EQ(epsilon_at(q, 0, 1000), 1.0);
  EXPECT_NEAR(epsilon_at(q, 250, 1000), 0.525, 1e-12);
  EXPECT_DOUBLE_EQ(epsilon_at(q, 500, 1000), 0.05);
  EXPECT_DOUBLE_EQ(epsilon_at(q, 999, 1000), 0.05);
}

TEST(Metrics, CsvFormat) {
  std::vector<MetricsRow> rows{{10000, 12, 5, 0.25, 0.5, 3}};
  EXPECT_EQ(metrics_csv(rows),
            "step,history_graphs,history_rows,mean_skill_reward,discriminator_acc,new_graphs_this_interval\n"
            "10000,12,5,0.250000,0.500000,3\n");
}

TEST(Discover, ZeroStepsLeavesPolicyUntouched) {
  auto cfg = small("printer", 0, DependencySource::Oracle);
  const auto res = discover(cfg);
  EXPECT_TRUE(res.policy.table().empty());
  EXPECT_TRUE(res.discriminator.table().empty());
  EXPECT_TRUE(res.metrics.empty());
  EXPECT_EQ(res.steps, cfg.warmup_steps);
  EXPECT_FALSE(res.history.graphs().empty());  // warm-up still records
}

TEST(Discover, PrinterHistoryContainsPickupRow) {
  auto cfg = small("printer", 200000, DependencySource::Oracle);
  cfg.metrics_interval = 10000;
  const auto res = discover(cfg);
  const auto env = make_env("printer");
  const auto pickup = env->schema().inducible_by_label("agent, printer, action -> printer");
  EXPECT_GT(res.history.row_count(pickup.row), 0u);
  EXPECT_EQ(res.steps, 205000u);
  EXPECT_EQ(res.metrics.size(), 20u);
  EXPECT_EQ(res.metrics.back().step, 205000u);
}

TEST(Discover, HistoryIsMonotone) {
  auto cfg = small("cleaning_car", 20000, DependencySource::Oracle);
  GraphHistory prev;
  int checks = 0;
  discover(cfg, {}, [&](const DiscoveryResult& r) {
    for (const auto& [g, c] : prev.graphs()) ASSERT_GE(r.history.count(g), c);
    for (const auto& [row, c] : prev.rows()) ASSERT_GE(r.history.row_count(row), c);
    prev = r.history;
    ++checks;
  });
  EXPECT_EQ(checks, 10);
}

TEST(Discover, SinkSeesEveryStep) {
  auto cfg = small("printer", 3000, DependencySource::Oracle);
  cfg.warmup_steps = 500;
  std::uint64_t warm = 0, skilled = 0;
  discover(cfg, [&](const FactoredState&, ActionId, const StepOutcome&, const std::optional<Skill>& z) {
    (z ? skilled : warm)++;
  });
  EXPECT_EQ(warm, 500u);
  EXPECT_EQ(skilled, 3000u);
}

TEST(Discover, DeterministicForASeed) {
  auto cfg = small("printer", 20000, DependencySource::Learned);
  const auto a = discover(cfg);
  const auto b = discover(cfg);
  EXPECT_TRUE(a.policy == b.policy);
  EXPECT_TRUE(a.discriminator == b.discriminator);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_TRUE(a.history == b.history);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  cfg.seed = 1;
  EXPECT_FALSE(discover(cfg).history == a.history);
}

TEST(Discover, OracleModeDoesNotTrainTheModel) {
  auto cfg = small("printer", 5000, DependencySource::Oracle);
  EXPECT_EQ(discover(cfg).model.updates(), 0u);
  cfg.train_model_in_oracle_mode = true;
  EXPECT_EQ(discover(cfg).model.updates(), 10000u);
}

TEST(Discover, LearnedModeBootstraps) {
  for (const std::string env : {"printer", "cleaning_car"}) {
    auto cfg = small(env, 1000, DependencySource::Learned);
    const auto res = discover(cfg);
    EXPECT_FALSE(res.history.empty_rows()) << env;
    EXPECT_EQ(res.model.updates(), 6000u);
  }
}

TEST(Discover, NoGraphAblationTrainsGraphFreeSkills) {
  auto cfg = small("printer", 5000, DependencySource::Oracle);
  cfg.no_graph = true;
  const auto res = discover(cfg);
  ASSERT_FALSE(res.policy.table().empty());
  for (const auto& [k, v] : res.policy.table()) ASSERT_EQ(k.skill >> 4, 0xFFFFFFu);
}

TEST(DefaultSource, PerEnvironment) {
  EXPECT_EQ(default_source("printer"), DependencySource::Learned);
  EXPECT_EQ(default_source("cleaning_car"), DependencySource::Learned);
  EXPECT_EQ(default_source("thawing"), DependencySource::Oracle);
}
