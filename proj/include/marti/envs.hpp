#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "marti/common.hpp"

namespace marti {

struct EnvState {
  Vector observation;
  double reward = 0.0;
  bool done = false;
  int agent_goals = 0;
  int opponent_goals = 0;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual EnvState reset() = 0;
  virtual EnvState step(int action) = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual int action_count() const = 0;
  virtual std::string name() const = 0;

  /// Actuator vector of each action index (1-d, the index itself).
  std::vector<Vector> action_space() const {
    std::vector<Vector> out;
    for (int a = 0; a < action_count(); ++a) out.push_back({static_cast<double>(a)});
    return out;
  }

 protected:
  void check_action(int action, bool done) const {
    if (done) throw std::logic_error(name() + ": step after done without reset");
    if (action < 0 || action >= action_count())
      throw std::invalid_argument(name() + ": invalid action " + std::to_string(action));
  }
};

struct MiniPongConfig {
  int width = 16;
  int height = 16;
  int paddle_height = 3;
  // Probability the opponent aligns with the ball on a given step.
  double opponent_skill = 0.8;
  int max_steps = 500;
  std::uint64_t seed = 1;
  // Observation freeze (emulator stall): from step freeze_at, for freeze_len steps.
  int freeze_at = 0;
  int freeze_len = 0;

  void validate() const {
    if (width < 4 || height < 2) throw ConfigError("minipong: field too small");
    if (paddle_height < 1 || paddle_height > height) throw ConfigError("minipong: paddle must fit the field");
    if (max_steps < 1) throw ConfigError("minipong: max_steps must be >= 1");
    if (!(opponent_skill >= 0.0 && opponent_skill <= 1.0))
      throw ConfigError("minipong: opponent_skill must be in [0, 1]");
    if (freeze_len < 0 || freeze_at < 0) throw ConfigError("minipong: bad freeze window");
  }
};

/// Grid pong. The agent paddle is the right column, a scripted opponent the
/// left one; the ball moves one cell diagonally per step and reflects off
/// the top and bottom walls and off paddles.
///
/// Observation: (ball_x, ball_y, vel_x+1, vel_y+1, paddle_y, opponent_y,
/// agent_goals, opponent_goals). Actions: 0 stay, 1 up, 2 down.
class MiniPong : public Environment {
 public:
  enum Action { kStay = 0, kUp = 1, kDown = 2 };

  explicit MiniPong(MiniPongConfig config = {}) : config_(config), rng_(config.seed) {
    config_.validate();
  }

  EnvState reset() override {
    steps_ = 0;
    agent_goals_ = opponent_goals_ = 0;
    paddle_y_ = opponent_y_ = (config_.height - config_.paddle_height) / 2;
    done_ = false;
    serve();
    return state(0.0);
  }

  EnvState step(int action) override {
    check_action(action, done_);
    const int top = config_.height - config_.paddle_height;
    if (action == kUp) paddle_y_ = std::max(0, paddle_y_ - 1);
    if (action == kDown) paddle_y_ = std::min(top, paddle_y_ + 1);

    if (bernoulli(rng_, config_.opponent_skill))
      opponent_y_ = std::clamp(ball_y_ - config_.paddle_height / 2, 0, top);

    double reward = 0.0;
    if (ball_y_ + vel_y_ < 0 || ball_y_ + vel_y_ >= config_.height) vel_y_ = -vel_y_;
    const int ny = ball_y_ + vel_y_;
    const int nx = ball_x_ + vel_x_;
    if (nx == config_.width - 1) {
      if (covers(paddle_y_, ny)) {
        vel_x_ = -1;
        ball_x_ -= 1;
        ball_y_ = ny;
      } else {
        reward = -1.0;
        ++opponent_goals_;
        serve();
      }
    } else if (nx == 0) {
      if (covers(opponent_y_, ny)) {
        vel_x_ = 1;
        ball_x_ += 1;
        ball_y_ = ny;
      } else {
        reward = 1.0;
        ++agent_goals_;
        serve();
      }
    } else {
      ball_x_ = nx;
      ball_y_ = ny;
    }

    ++steps_;
    done_ = steps_ >= config_.max_steps;
    return state(reward);
  }

  std::size_t observation_dim() const override { return 8; }
  int action_count() const override { return 3; }
  std::string name() const override { return "minipong"; }

  const MiniPongConfig& config() const { return config_; }
  int steps() const { return steps_; }
  int ball_x() const { return ball_x_; }
  int ball_y() const { return ball_y_; }
  int vel_x() const { return vel_x_; }
  int vel_y() const { return vel_y_; }
  int paddle_y() const { return paddle_y_; }
  int opponent_y() const { return opponent_y_; }

  /// Places the ball directly; used by tests.
  void set_ball(int x, int y, int vx, int vy) {
    ball_x_ = x;
    ball_y_ = y;
    vel_x_ = vx;
    vel_y_ = vy;
  }
  void set_paddles(int agent_y, int opponent_y) {
    paddle_y_ = agent_y;
    opponent_y_ = opponent_y;
  }

 private:
  bool covers(int paddle_top, int y) const {
    return y >= paddle_top && y < paddle_top + config_.paddle_height;
  }

  void serve() {
    ball_x_ = config_.width / 2;
    const int lo = config_.height / 4;
    const int span = std::max(1, config_.height / 2);
    ball_y_ = lo + static_cast<int>(uniform_index(rng_, static_cast<std::uint64_t>(span)));
    vel_x_ = bernoulli(rng_, 0.5) ? 1 : -1;
    vel_y_ = bernoulli(rng_, 0.5) ? 1 : -1;
  }

  EnvState state(double reward) {
    EnvState s;
    Vector obs{static_cast<double>(ball_x_),   static_cast<double>(ball_y_),
               static_cast<double>(vel_x_ + 1), static_cast<double>(vel_y_ + 1),
               static_cast<double>(paddle_y_),  static_cast<double>(opponent_y_),
               static_cast<double>(agent_goals_), static_cast<double>(opponent_goals_)};
    const bool frozen = config_.freeze_len > 0 && steps_ > config_.freeze_at &&
                        steps_ <= config_.freeze_at + config_.freeze_len;
    if (frozen) {
      obs = frozen_obs_;
    } else {
      frozen_obs_ = obs;
    }
    s.observation = std::move(obs);
    s.reward = reward;
    s.done = done_;
    s.agent_goals = agent_goals_;
    s.opponent_goals = opponent_goals_;
    return s;
  }

  MiniPongConfig config_;
  Rng rng_;
  int steps_ = 0;
  int ball_x_ = 0, ball_y_ = 0, vel_x_ = 1, vel_y_ = 1;
  int paddle_y_ = 0, opponent_y_ = 0;
  int agent_goals_ = 0, opponent_goals_ = 0;
  bool done_ = true;
  Vector frozen_obs_;
};

struct CatchConfig {
  int size = 5;
  std::uint64_t seed = 1;
};

/// 5x5 catch: an object falls one row per step from a random column; the
/// paddle on the bottom row moves left, stays or moves right. The step after
/// the object reaches the bottom row resolves the catch (+1) or miss (-1).
///
/// Observation: (object_x, object_y, paddle_x). Actions: 0 left, 1 stay, 2 right.
class Catch : public Environment {
 public:
  enum Action { kLeft = 0, kStay = 1, kRight = 2 };

  explicit Catch(CatchConfig config = {}) : config_(config), rng_(config.seed) {
    if (config_.size < 2) throw ConfigError("catch: grid too small");
  }

  EnvState reset() override {
    object_x_ = static_cast<int>(uniform_index(rng_, static_cast<std::uint64_t>(config_.size)));
    object_y_ = 0;
    paddle_x_ = config_.size / 2;
    done_ = false;
    caught_ = missed_ = 0;
    return state(0.0);
  }

  EnvState step(int action) override {
    check_action(action, done_);
    if (action == kLeft) paddle_x_ = std::max(0, paddle_x_ - 1);
    if (action == kRight) paddle_x_ = std::min(config_.size - 1, paddle_x_ + 1);
    double reward = 0.0;
    if (object_y_ == config_.size - 1) {
      reward = paddle_x_ == object_x_ ? 1.0 : -1.0;
      (reward > 0 ? caught_ : missed_) = 1;
      done_ = true;
    } else {
      ++object_y_;
    }
    return state(reward);
  }

  std::size_t observation_dim() const override { return 3; }
  int action_count() const override { return 3; }
  std::string name() const override { return "catch"; }

  void set_state(int object_x, int object_y, int paddle_x) {
    object_x_ = object_x;
    object_y_ = object_y;
    paddle_x_ = paddle_x;
    done_ = false;
  }

 private:
  EnvState state(double reward) const {
    return EnvState{{static_cast<double>(object_x_), static_cast<double>(object_y_),
                     static_cast<double>(paddle_x_)},
                    reward,
                    done_,
                    caught_,
                    missed_};
  }

  CatchConfig config_;
  Rng rng_;
  int object_x_ = 0, object_y_ = 0, paddle_x_ = 0;
  int caught_ = 0, missed_ = 0;
  bool done_ = true;
};

inline std::unique_ptr<Environment> make_environment(const std::string& name, std::uint64_t seed) {
  if (name == "minipong") {
    MiniPongConfig c;
    c.seed = seed;
    return std::make_unique<MiniPong>(c);
  }
  if (name == "catch") {
    CatchConfig c;
    c.seed = seed;
    return std::make_unique<Catch>(c);
  }
  throw ConfigError("unknown environment '" + name + "' (expected minipong or catch)");
}

}  // namespace marti
