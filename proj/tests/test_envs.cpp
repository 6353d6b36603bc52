#include <gtest/gtest.h>

#include "marti/envs.hpp"
#include "marti/runner.hpp"

using namespace marti;

TEST(Catch, CaughtAtBottom) {
  Catch env;
  env.reset();
  env.set_state(2, 4, 2);
  auto s = env.step(Catch::kStay);
  EXPECT_EQ(s.reward, 1.0);
  EXPECT_TRUE(s.done);
  EXPECT_THROW(env.step(Catch::kStay), std::logic_error);
}

TEST(Catch, MissedAtBottom) {
  Catch env;
  env.reset();
  env.set_state(0, 4, 2);
  auto s = env.step(Catch::kLeft);
  EXPECT_EQ(s.reward, -1.0);
  EXPECT_TRUE(s.done);
}

TEST(Catch, FiveStepEpisodes) {
  Catch env(CatchConfig{5, 3});
  for (int e = 0; e < 20; ++e) {
    auto s = env.reset();
    EXPECT_EQ(s.observation.size(), 3u);
    int steps = 0;
    while (!s.done) {
      s = env.step(e % 3);
      ++steps;
      for (double x : s.observation) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 4.0);
      }
    }
    EXPECT_EQ(steps, 5);
    EXPECT_NE(s.reward, 0.0);
  }
}

TEST(Catch, InvalidAction) {
  Catch env;
  env.reset();
  EXPECT_THROW(env.step(3), std::invalid_argument);
  EXPECT_THROW(env.step(-1), std::invalid_argument);
}

TEST(MiniPong, ReflectsOffTopWall) {
  MiniPong env;
  env.reset();
  env.set_ball(5, 0, 1, -1);
  env.step(MiniPong::kStay);
  EXPECT_EQ(env.vel_y(), 1);
  EXPECT_EQ(env.ball_y(), 1);
}

TEST(MiniPong, ReflectsOffBottomWall) {
  MiniPong env;
  env.reset();
  env.set_ball(5, 15, -1, 1);
  env.step(MiniPong::kStay);
  EXPECT_EQ(env.vel_y(), -1);
  EXPECT_EQ(env.ball_y(), 14);
}

TEST(MiniPong, AgentPaddleReturnsBall) {
  MiniPong env;
  env.reset();
  env.set_paddles(6, 6);
  env.set_ball(14, 6, 1, 1);
  auto s = env.step(MiniPong::kStay);
  EXPECT_EQ(s.reward, 0.0);
  EXPECT_EQ(env.vel_x(), -1);
  EXPECT_EQ(env.ball_x(), 13);
}

TEST(MiniPong, AgentMissScoresForOpponent) {
  MiniPong env;
  env.reset();
  env.set_paddles(0, 6);
  env.set_ball(14, 10, 1, 1);
  auto s = env.step(MiniPong::kStay);
  EXPECT_EQ(s.reward, -1.0);
  EXPECT_EQ(s.opponent_goals, 1);
  EXPECT_EQ(env.ball_x(), 8);
}

TEST(MiniPong, InvariantsUnderRandomPlay) {
  MiniPong env(MiniPongConfig{.seed = 5});
  Rng rng(1);
  for (int e = 0; e < 5; ++e) {
    auto s = env.reset();
    double total = 0;
    int steps = 0;
    while (!s.done) {
      s = env.step(static_cast<int>(uniform_index(rng, 3)));
      total += s.reward;
      ++steps;
      EXPECT_EQ(std::abs(env.vel_x()), 1);
      EXPECT_EQ(std::abs(env.vel_y()), 1);
      EXPECT_GE(env.ball_y(), 0);
      EXPECT_LT(env.ball_y(), 16);
      EXPECT_GE(env.paddle_y(), 0);
      EXPECT_LE(env.paddle_y(), 13);
      for (double x : s.observation) EXPECT_EQ(x, std::floor(x));
      EXPECT_EQ(s.agent_goals - s.opponent_goals, total);
    }
    EXPECT_EQ(steps, 500);
  }
}

TEST(MiniPong, DeterministicForSeed) {
  auto run = [] {
    MiniPong env(MiniPongConfig{.seed = 11});
    std::vector<double> trace;
    auto s = env.reset();
    for (int t = 0; t < 500; ++t) {
      s = env.step(t % 3);
      trace.insert(trace.end(), s.observation.begin(), s.observation.end());
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(MiniPong, FreezeHoldsObservation) {
  MiniPongConfig c;
  c.freeze_at = 10;
  c.freeze_len = 5;
  MiniPong env(c);
  env.reset();
  EnvState s;
  for (int t = 0; t < 10; ++t) s = env.step(0);
  const auto held = s.observation;
  for (int t = 0; t < 5; ++t) EXPECT_EQ(env.step(0).observation, held);
  EXPECT_NE(env.step(0).observation, held);
}

TEST(MiniPong, ConfigValidation) {
  MiniPongConfig c;
  c.paddle_height = 20;
  EXPECT_THROW(MiniPong{c}, ConfigError);
  c = {};
  c.max_steps = 0;
  EXPECT_THROW(MiniPong{c}, ConfigError);
}

TEST(MiniPong, RandomPolicyLoses) {
  MiniPong env(MiniPongConfig{.seed = 2});
  auto base = random_baseline(env, 100, 3);
  EXPECT_LT(base.goal_diff.mean, -10.0);
  EXPECT_GT(base.goal_diff.sd, 1.0);
}

TEST(Environment, Factory) {
  EXPECT_EQ(make_environment("catch", 1)->observation_dim(), 3u);
  EXPECT_EQ(make_environment("minipong", 1)->observation_dim(), 8u);
  EXPECT_THROW(make_environment("breakout", 1), ConfigError);
}
