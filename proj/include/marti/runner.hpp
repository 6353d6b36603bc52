#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "marti/agent.hpp"
#include "marti/envs.hpp"

namespace marti {

inline const char* const kCsvHeader =
    "episode,steps,agent_goals,opponent_goals,goal_diff,rolling30_diff,inner_rewards,l1_parsers,"
    "l2_vocab,wall_ms";

struct RunRecord {
  std::uint64_t episode = 0;
  int steps = 0;
  int agent_goals = 0;
  int opponent_goals = 0;
  int goal_diff = 0;
  double rolling30_diff = 0.0;
  std::uint64_t inner_rewards = 0;
  std::size_t l1_parsers = 0;
  std::size_t l2_vocab = 0;
  std::int64_t wall_ms = 0;

  std::string csv() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%d,%d,%d,%d,%.6f,%llu,%zu,%zu,%lld",
                  static_cast<unsigned long long>(episode), steps, agent_goals, opponent_goals,
                  goal_diff, rolling30_diff, static_cast<unsigned long long>(inner_rewards),
                  l1_parsers, l2_vocab, static_cast<long long>(wall_ms));
    return buf;
  }
};

/// Mean of the last (up to) 30 goal differences.
class Rolling30 {
 public:
  double push(int diff) {
    window_.push_back(diff);
    if (window_.size() > 30) window_.pop_front();
    return value();
  }
  double value() const {
    if (window_.empty()) return 0.0;
    return static_cast<double>(std::accumulate(window_.begin(), window_.end(), 0)) /
           static_cast<double>(window_.size());
  }

 private:
  std::deque<int> window_;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Index of the action-space entry nearest to an actuator vector.
inline int action_index(const std::vector<Vector>& space, const Vector& actuator) {
  int best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double d = squared_distance(space[i], actuator);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

struct EpisodeResult {
  int steps = 0;
  int agent_goals = 0;
  int opponent_goals = 0;
  double reward = 0.0;  // environment reward only
  std::uint64_t inner_rewards = 0;
  std::vector<int> actions;
};

/// Drives an agent (or any policy) through one environment episode. The agent
/// sees the final observation with done=true before the episode ends.
/// `last_action` carries the previously applied action across episodes.
template <typename Policy>
EpisodeResult run_episode_with(Environment& env, Policy&& policy, int& last_action,
                               bool record_actions = false) {
  EpisodeResult res;
  EnvState s = env.reset();
  while (true) {
    const int a = policy(s, last_action);
    if (s.done) break;
    if (record_actions) res.actions.push_back(a);
    last_action = a;
    s = env.step(a);
    res.reward += s.reward;
    ++res.steps;
  }
  res.agent_goals = s.agent_goals;
  res.opponent_goals = s.opponent_goals;
  return res;
}

using DecisionSink = std::function<void(const DecisionRecord&)>;

inline EpisodeResult run_episode(Agent& agent, Environment& env, int& last_action,
                                 bool record_actions = false, const DecisionSink& on_decision = {}) {
  const auto space = env.action_space();
  const auto inner_before = agent.inner_rewards();
  auto res = run_episode_with(
      env,
      [&](const EnvState& s, int prev) {
        StepInput in{s.observation, space[static_cast<std::size_t>(prev)], s.reward, s.done};
        const auto out = agent.step(in);
        if (on_decision) on_decision(agent.last_record());
        return action_index(space, out.actuator);
      },
      last_action, record_actions);
  res.inner_rewards = agent.inner_rewards() - inner_before;
  return res;
}

struct TrainOptions {
  std::uint64_t episodes = 0;
  bool timing = true;
  std::function<void(const RunRecord&)> on_record;
  DecisionSink on_decision;
};

/// Runs `episodes` training episodes and emits one RunRecord per episode.
inline std::vector<RunRecord> train(Agent& agent, Environment& env, const TrainOptions& opts,
                                    int& last_action, std::uint64_t first_episode = 1) {
  std::vector<RunRecord> out;
  Rolling30 rolling;
  for (std::uint64_t e = 0; e < opts.episodes; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_episode(agent, env, last_action, false, opts.on_decision);
    RunRecord r;
    r.episode = first_episode + e;
    r.steps = res.steps;
    r.agent_goals = res.agent_goals;
    r.opponent_goals = res.opponent_goals;
    r.goal_diff = res.agent_goals - res.opponent_goals;
    r.rolling30_diff = rolling.push(r.goal_diff);
    r.inner_rewards = res.inner_rewards;
    r.l1_parsers = agent.layer1_parsers();
    r.l2_vocab = agent.layer2_vocabulary();
    if (opts.timing)
      r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (opts.on_record) opts.on_record(r);
    out.push_back(r);
  }
  return out;
}

struct EvalSummary {
  Summary score;      // per-episode environment reward
  Summary goal_diff;  // per-episode agent - opponent goals
};

/// Evaluation with learning frozen.
inline EvalSummary evaluate(Agent& agent, Environment& env, std::uint64_t episodes, int& last_action) {
  const bool was_learning = agent.learning();
  agent.set_learning(false);
  std::vector<double> score, diff;
  for (std::uint64_t e = 0; e < episodes; ++e) {
    const auto res = run_episode(agent, env, last_action);
    score.push_back(res.reward);
    diff.push_back(res.agent_goals - res.opponent_goals);
  }
  agent.set_learning(was_learning);
  return {summarize(score), summarize(diff)};
}

/// Uniform random policy over the environment's actions.
inline EvalSummary random_baseline(Environment& env, std::uint64_t episodes, std::uint64_t seed) {
  Rng rng(seed);
  int last = 0;
  std::vector<double> score, diff;
  for (std::uint64_t e = 0; e < episodes; ++e) {
    const auto res = run_episode_with(
        env,
        [&](const EnvState&, int) {
          return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(env.action_count())));
        },
        last);
    score.push_back(res.reward);
    diff.push_back(res.agent_goals - res.opponent_goals);
  }
  return {summarize(score), summarize(diff)};
}

}  // namespace marti
