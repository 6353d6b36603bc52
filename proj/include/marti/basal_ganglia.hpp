#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "marti/bytes.hpp"
#include "marti/common.hpp"

namespace marti {

/// What the striatum needs from one layer-2 column.
struct ColumnVote {
  ColumnId column = 0;
  std::map<Letter, int> feelings;  // F^c per action
  // Leading (action) letter of the predicted next token, if any prediction.
  std::optional<Letter> predicted_action;
  double forecast = 0.0;
};

struct BasalDecision {
  std::map<Letter, int> fb;
  Letter action = 0;
  ColumnId winner = 0;
  // No column predicted the chosen action; winner is the lowest column id.
  bool winner_flagged = false;
  // Chosen by the exploration fallback because every F^b was zero.
  bool exploratory = false;
  std::map<Letter, std::pair<ColumnId, double>> per_action_best;
};

/// F^b(a) = number of columns with F^c(a) > 0; the action with the largest
/// F^b wins (lowest letter on ties). The winner column is the one predicting
/// that action with the highest reward forecast.
inline BasalDecision decide(std::span<const ColumnVote> columns, std::span<const Letter> actions,
                            Rng& rng) {
  if (columns.empty()) throw std::invalid_argument("basal ganglia: no layer-2 columns to decide from");
  if (actions.empty()) throw std::invalid_argument("basal ganglia: empty action set");
  BasalDecision d;
  for (Letter a : actions) d.fb[a] = 0;
  for (const auto& c : columns)
    for (const auto& [a, f] : c.feelings)
      if (f > 0) {
        if (auto it = d.fb.find(a); it != d.fb.end()) ++it->second;
      }

  int best = 0;
  for (const auto& [a, n] : d.fb)
    if (n > best) {
      best = n;
      d.action = a;
    }
  if (best == 0) {
    d.exploratory = true;
    d.action = actions[uniform_index(rng, actions.size())];
  }

  for (const auto& c : columns) {
    if (!c.predicted_action) continue;
    auto [it, inserted] = d.per_action_best.try_emplace(*c.predicted_action, c.column, c.forecast);
    if (!inserted && (c.forecast > it->second.second ||
                      (c.forecast == it->second.second && c.column < it->second.first)))
      it->second = {c.column, c.forecast};
  }

  if (auto it = d.per_action_best.find(d.action); it != d.per_action_best.end()) {
    d.winner = it->second.first;
  } else {
    d.winner_flagged = true;
    d.winner = columns.front().column;
    for (const auto& c : columns) d.winner = std::min(d.winner, c.column);
  }
  return d;
}

struct SurpriseParams {
  // S^t; +infinity disables inner rewards.
  double threshold = 2.0;
  // A column is surprised when its surprise exceeds this margin.
  double margin = 0.0;
  std::uint64_t cooldown = 10;
  // Count a column twice when it was also surprised on the previous step.
  bool streak = false;
};

struct BasalSurprise {
  int sb = 0;
  bool inner_reward = false;
};

/// Basal surprise: counts simultaneously surprised columns and emits a single
/// unit inner reward when the count exceeds the threshold and the cooldown
/// has elapsed.
class SurpriseState {
 public:
  SurpriseState() = default;
  explicit SurpriseState(SurpriseParams params)
      : params_(params), steps_since_inner_(params.cooldown) {}

  BasalSurprise update(const std::map<ColumnId, double>& column_surprises) {
    BasalSurprise out;
    std::set<ColumnId> surprised;
    for (const auto& [c, s] : column_surprises) {
      if (!(s > params_.margin)) continue;
      surprised.insert(c);
      out.sb += (params_.streak && previous_.contains(c)) ? 2 : 1;
    }
    previous_ = std::move(surprised);
    out.inner_reward = static_cast<double>(out.sb) > params_.threshold &&
                       steps_since_inner_ >= params_.cooldown;
    if (out.inner_reward) {
      steps_since_inner_ = 0;
      ++inner_rewards_;
    } else if (steps_since_inner_ < std::numeric_limits<std::uint64_t>::max()) {
      ++steps_since_inner_;
    }
    last_sb_ = out.sb;
    return out;
  }

  const SurpriseParams& params() const { return params_; }
  std::uint64_t steps_since_inner() const { return steps_since_inner_; }
  int last_sb() const { return last_sb_; }
  std::uint64_t inner_rewards() const { return inner_rewards_; }

  void save(ByteWriter& w) const {
    w.f64(params_.threshold);
    w.f64(params_.margin);
    w.u64(params_.cooldown);
    w.boolean(params_.streak);
    w.u64(steps_since_inner_);
    w.i64(last_sb_);
    w.u64(inner_rewards_);
    w.u64(previous_.size());
    for (auto c : previous_) w.u32(c);
  }

  static SurpriseState load(ByteReader& r) {
    SurpriseState s;
    s.params_.threshold = r.f64();
    s.params_.margin = r.f64();
    s.params_.cooldown = r.u64();
    s.params_.streak = r.boolean();
    s.steps_since_inner_ = r.u64();
    s.last_sb_ = static_cast<int>(r.i64());
    s.inner_rewards_ = r.u64();
    const auto n = r.length(4);
    for (std::uint64_t i = 0; i < n; ++i) s.previous_.insert(r.u32());
    return s;
  }

 private:
  SurpriseParams params_;
  std::uint64_t steps_since_inner_ = 0;
  int last_sb_ = 0;
  std::uint64_t inner_rewards_ = 0;
  std::set<ColumnId> previous_;
};

/// Free-function spelling of SurpriseState::update.
inline BasalSurprise basal_surprise(SurpriseState& state,
                                    const std::map<ColumnId, double>& column_surprises) {
  return state.update(column_surprises);
}

}  // namespace marti
