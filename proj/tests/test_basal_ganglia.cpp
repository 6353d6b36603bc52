#include <gtest/gtest.h>

#include "marti/basal_ganglia.hpp"
#include "oracles.hpp"

using namespace marti;

namespace {

ColumnVote vote(ColumnId id, std::map<Letter, int> f, std::optional<Letter> pred = {}, double forecast = 0) {
  return ColumnVote{id, std::move(f), pred, forecast};
}

}  // namespace

TEST(Decide, CountsColumnsWithPositiveFeeling) {
  const std::vector<Letter> actions{U'd', U'n'};
  std::vector<ColumnVote> cols = {
      vote(0, {{U'd', 2}, {U'n', 0}}, U'd', 1.0), vote(1, {{U'd', 1}, {U'n', 0}}, U'd', 3.0),
      vote(2, {{U'd', 5}, {U'n', 1}}, U'n', 0.5), vote(3, {{U'd', 0}, {U'n', 0}}),
      vote(4, {{U'd', 0}, {U'n', 0}})};
  Rng rng(1);
  auto d = decide(cols, actions, rng);
  EXPECT_EQ(d.fb.at(U'd'), 3);
  EXPECT_EQ(d.fb.at(U'n'), 1);
  EXPECT_EQ(d.action, U'd');
  EXPECT_EQ(d.winner, 1u);
  EXPECT_FALSE(d.exploratory);
  EXPECT_FALSE(d.winner_flagged);
}

TEST(Decide, SingleColumn) {
  const std::vector<Letter> actions{U'a'};
  std::vector<ColumnVote> cols = {vote(7, {{U'a', 1}}, U'a', 0.2)};
  Rng rng(1);
  auto d = decide(cols, actions, rng);
  EXPECT_EQ(d.action, U'a');
  EXPECT_EQ(d.winner, 7u);
}

TEST(Decide, AllZeroExplores) {
  const std::vector<Letter> actions{U'a', U'b', U'c'};
  std::vector<ColumnVote> cols = {vote(4, {}), vote(2, {})};
  Rng rng(1);
  std::set<Letter> seen;
  for (int i = 0; i < 100; ++i) {
    auto d = decide(cols, actions, rng);
    EXPECT_TRUE(d.exploratory);
    EXPECT_TRUE(d.winner_flagged);
    EXPECT_EQ(d.winner, 2u);
    seen.insert(d.action);
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Decide, TieGoesToLowestLetter) {
  const std::vector<Letter> actions{U'b', U'a'};
  std::vector<ColumnVote> cols = {vote(0, {{U'a', 1}}), vote(1, {{U'b', 1}})};
  Rng rng(1);
  EXPECT_EQ(decide(cols, actions, rng).action, U'a');
}

TEST(Decide, Errors) {
  Rng rng(1);
  EXPECT_THROW(decide(std::vector<ColumnVote>{}, std::vector<Letter>{U'a'}, rng), std::invalid_argument);
  EXPECT_THROW(decide(std::vector<ColumnVote>{vote(0, {})}, std::vector<Letter>{}, rng), std::invalid_argument);
}

TEST(Decide, RandomizedMatchesEnumerationAndScaleInvariant) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto na = 1 + uniform_index(rng, 5);
    std::vector<Letter> actions;
    for (std::size_t i = 0; i < na; ++i) actions.push_back(U'a' + static_cast<Letter>(i));
    std::vector<ColumnVote> cols;
    std::vector<std::map<Letter, int>> raw;
    const auto nc = 1 + uniform_index(rng, 8);
    for (std::size_t c = 0; c < nc; ++c) {
      std::map<Letter, int> f;
      for (auto a : actions) f[a] = static_cast<int>(uniform_index(rng, 3));
      raw.push_back(f);
      cols.push_back(vote(static_cast<ColumnId>(c), f));
    }
    Rng r1(trial), r2(trial);
    const auto d = decide(cols, actions, r1);
    EXPECT_EQ(d.fb, oracle::basal_feeling(raw, actions));
    auto scaled = cols;
    for (auto& c : scaled)
      for (auto& [a, f] : c.feelings) f *= 1 + static_cast<int>(uniform_index(rng, 9));
    EXPECT_EQ(decide(scaled, actions, r2).action, d.action);
  }
}

TEST(Surprise, ExampleFires) {
  SurpriseState s(SurpriseParams{1.0, 0.0, 10, false});
  auto out = s.update({{1, 1.7}, {2, 0.0}, {3, 0.3}});
  EXPECT_EQ(out.sb, 2);
  EXPECT_TRUE(out.inner_reward);
}

TEST(Surprise, NonPositiveIgnored) {
  SurpriseState s(SurpriseParams{0.0, 0.0, 0, false});
  auto out = s.update({{1, -1.0}, {2, 0.0}});
  EXPECT_EQ(out.sb, 0);
  EXPECT_FALSE(out.inner_reward);
}

TEST(Surprise, Cooldown) {
  SurpriseState s(SurpriseParams{1.0, 0.0, 3, false});
  const std::map<ColumnId, double> hot{{1, 1.0}, {2, 1.0}};
  EXPECT_TRUE(s.update(hot).inner_reward);
  for (int i = 0; i < 3; ++i) EXPECT_FALSE(s.update(hot).inner_reward);
  EXPECT_TRUE(s.update(hot).inner_reward);
  EXPECT_EQ(s.inner_rewards(), 2u);
}

TEST(Surprise, ThresholdIsStrict) {
  SurpriseState s(SurpriseParams{2.0, 0.0, 0, false});
  EXPECT_FALSE(s.update({{1, 1.0}, {2, 1.0}}).inner_reward);
  EXPECT_TRUE(s.update({{1, 1.0}, {2, 1.0}, {3, 1.0}}).inner_reward);
}

TEST(Surprise, MarginAndStreak) {
  SurpriseState s(SurpriseParams{2.0, 0.5, 0, true});
  EXPECT_EQ(s.update({{1, 0.5}, {2, 0.6}}).sb, 1);
  auto out = s.update({{2, 0.9}, {3, 1.0}});
  EXPECT_EQ(out.sb, 3);
  EXPECT_TRUE(out.inner_reward);
}

TEST(Surprise, InfiniteThresholdNeverFires) {
  SurpriseState s(SurpriseParams{std::numeric_limits<double>::infinity(), 0.0, 0, false});
  std::map<ColumnId, double> many;
  for (ColumnId c = 0; c < 100; ++c) many[c] = 5.0;
  EXPECT_FALSE(s.update(many).inner_reward);
}

TEST(Surprise, MatchesCountOracle) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double margin = uniform01(rng);
    SurpriseState s(SurpriseParams{1.0, margin, 0, false});
    std::map<ColumnId, double> m;
    for (ColumnId c = 0; c < 6; ++c) m[c] = uniform01(rng) * 2 - 1;
    EXPECT_EQ(basal_surprise(s, m).sb, oracle::surprised(m, margin));
  }
}
