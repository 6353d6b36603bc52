#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "marti/basal_ganglia.hpp"
#include "marti/bytes.hpp"
#include "marti/codebook.hpp"
#include "marti/common.hpp"
#include "marti/hypercolumn.hpp"
#include "marti/parser.hpp"
#include "marti/thalamus.hpp"

namespace marti {

struct AgentConfig {
  std::size_t p = 12;  // sensor subsets
  std::size_t m = 2;   // indices per subset
  std::size_t columns_per_subset = 1;
  // Action clusters; 0 means one per entry of the action space.
  std::size_t action_clusters = 0;
  Layer1Params layer1;
  Layer2Params layer2;
  SurpriseParams surprise;
  bool inhibit_unchanged = true;
  bool disjoint_subsets = false;
  // Probability of a random action even when columns have an opinion.
  double epsilon = 0.05;
  // Apply an inner reward on the following step instead of the current one.
  bool defer_inner_reward = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (p < 3) throw ConfigError("config: p must be >= 3");
    if (m < 1) throw ConfigError("config: m must be >= 1");
    if (columns_per_subset < 1) throw ConfigError("config: columns_per_subset must be >= 1");
    if (layer1.clusters < 1) throw ConfigError("config: K must be >= 1");
    if (layer1.unique_limit + 1 < layer1.clusters)
      throw ConfigError("config: K must not exceed v + 1 (clusters are fit on v + 1 vectors)");
    if (layer1.clusters > static_cast<std::size_t>(U'a' - U'A'))
      throw ConfigError("config: K too large, sensor letters would collide with action letters");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("config: epsilon must be in [0, 1]");
    if (!(surprise.margin >= 0.0)) throw ConfigError("config: surprise margin must be >= 0");
    if (!(surprise.threshold >= 0.0)) throw ConfigError("config: S^t must be >= 0");
    layer1_parser_config(layer1).validate();
    layer2_parser_config(layer2).validate();
  }
};

struct StepInput {
  Vector sensor;
  Vector actuator;
  double reward = 0.0;
  bool done = false;
};

struct ActionOutput {
  Vector actuator;
  std::optional<Letter> action_letter;
  bool exploratory = false;
  bool inner_reward_fired = false;
};

/// Per-step record of the striatum, for verbose logs.
struct DecisionRecord {
  std::uint64_t step = 0;
  std::map<Letter, int> fb;
  std::optional<Letter> action;
  std::optional<ColumnId> winner;
  int sb = 0;
  bool inner_reward = false;
};

inline constexpr char kSnapshotMagic[8] = {'M', 'A', 'R', 'T', 'I', 'S', 'N', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

/// The perceive-decide-act loop: thalamus routing, two layers of
/// hypercolumns, basal-ganglia selection and surprise-driven inner reward.
class Agent {
 public:
  Agent(AgentConfig config, std::size_t sensor_dim, std::size_t actuator_dim,
        std::vector<Vector> action_space)
      : config_(std::move(config)), action_space_(std::move(action_space)) {
    if (action_space_.empty()) throw ConfigError("agent: empty action space");
    for (const auto& a : action_space_)
      if (a.size() != actuator_dim) throw DimensionError("agent: action space dimension mismatch");
    if (config_.action_clusters == 0) config_.action_clusters = action_space_.size();
    config_.validate();
    if (config_.action_clusters > action_space_.size())
      throw ConfigError("agent: K_action exceeds the number of distinct actions");
    thalamus_ = Thalamus::init(sensor_dim, actuator_dim, config_.p, config_.m, config_.seed,
                               config_.action_clusters, config_.disjoint_subsets);
    rng_.seed(mix_seed(config_.seed, 0xA6E));
    surprise_ = SurpriseState(config_.surprise);
    const auto& subsets = thalamus_.plan().subsets;
    for (std::size_t i = 0; i < subsets.size(); ++i)
      for (std::size_t j = 0; j < config_.columns_per_subset; ++j) {
        const auto id = static_cast<ColumnId>(columns_.size());
        columns_.push_back(Hypercolumn::layer1(id, subsets[i], mix_seed(config_.seed, id)));
      }
    layer1_count_ = columns_.size();
  }

  ActionOutput step(const StepInput& in) {
    if (finalized_) throw std::logic_error("agent: step after finalize");
    if (in.actuator.size() != thalamus_.actuator_dim())
      throw DimensionError("agent: actuator dimension mismatch");
    ++steps_;
    DecisionRecord rec;
    rec.step = steps_;

    double reward = in.reward;
    if (pending_inner_) {
      reward += 1.0;
      pending_inner_ = false;
    }

    // (1)-(2) layer-1 perception
    const auto parts = thalamus_.route(in.sensor);
    std::vector<std::optional<ColumnOutput>> outputs(columns_.size());
    std::vector<std::optional<Letter>> letters(layer1_count_);
    for (std::size_t c = 0; c < layer1_count_; ++c) {
      auto& col = columns_[c];
      const bool had_parser = col.has_parser();
      outputs[c] = col.l1_perceive(parts[c / config_.columns_per_subset], reward, config_.layer1,
                                   config_.inhibit_unchanged, learning_);
      if (!had_parser && col.has_parser()) creation_order_.push_back(col.id());
      letters[c] = col.encode(parts[c / config_.columns_per_subset]);
    }

    // (3) action letter of the actuator that produced this observation
    const auto action = thalamus_.action_letter(in.actuator, !creation_order_.empty(), learning_);

    // (4) layer-2 perception
    if (learning_) grow_layer2();
    outputs.resize(columns_.size());
    for (std::size_t c = layer1_count_; c < columns_.size(); ++c) {
      auto& col = columns_[c];
      const auto& sub = col.substrate();
      auto composite = Thalamus::compose(action, {letters[sub[0]], letters[sub[1]], letters[sub[2]]});
      if (!composite) continue;
      outputs[c] = col.l2_perceive(*composite, reward, config_.inhibit_unchanged);
    }

    // (5) basal surprise and inner reward
    bool inner = false;
    if (learning_) {
      std::map<ColumnId, double> surprises;
      for (std::size_t c = 0; c < columns_.size(); ++c)
        if (outputs[c] && !outputs[c]->inhibited) surprises[columns_[c].id()] = outputs[c]->event.surprise;
      const auto bs = surprise_.update(surprises);
      rec.sb = bs.sb;
      inner = bs.inner_reward;
      if (inner) {
        ++inner_rewards_;
        if (config_.defer_inner_reward) {
          pending_inner_ = true;
        } else {
          for (auto& col : columns_)
            if (col.has_parser()) col.mutable_parser().reinforce(1.0);
        }
      }
    }
    rec.inner_reward = inner;

    // predictions and feelings
    const auto action_letters = thalamus_.action_coder().letters();
    std::vector<ColumnVote> votes;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (!outputs[c]) continue;
      auto& col = columns_[c];
      col.predict(*outputs[c], action_letters);
      if (col.layer() != 2) continue;
      ColumnVote v;
      v.column = col.id();
      v.feelings = outputs[c]->feelings;
      if (const auto& p = outputs[c]->prediction) {
        v.predicted_action = col.parser()->leading_letter(p->next);
        v.forecast = p->reward_forecast;
      }
      votes.push_back(std::move(v));
    }

    // (6) selection, (7) decoding
    ActionOutput out;
    out.inner_reward_fired = inner;
    std::optional<Letter> chosen;
    if (!votes.empty() && !action_letters.empty()) {
      auto d = decide(votes, action_letters, rng_);
      rec.fb = d.fb;
      rec.winner = d.winner;
      if (!d.exploratory) chosen = d.action;
    }
    if (chosen && config_.epsilon > 0.0 && bernoulli(rng_, config_.epsilon)) chosen.reset();
    if (chosen) {
      out.actuator = thalamus_.action_coder().decode(*chosen);
      out.action_letter = chosen;
    } else {
      out.exploratory = true;
      out.actuator = action_space_[uniform_index(rng_, action_space_.size())];
      if (const auto& cb = thalamus_.action_coder().codebook()) out.action_letter = cb->encode_letter(out.actuator);
    }
    rec.action = out.action_letter;
    last_record_ = std::move(rec);

    if (in.done) end_episode();
    return out;
  }

  /// Forgets per-episode sequence state; tables and codebooks persist.
  void end_episode() {
    for (auto& col : columns_) col.reset_transient();
    pending_inner_ = false;
  }

  /// Freezes or resumes learning: no table, vocabulary, codebook or column
  /// growth and no inner rewards while frozen.
  void set_learning(bool on) {
    learning_ = on;
    for (auto& col : columns_) col.set_frozen(!on);
  }
  bool learning() const { return learning_; }

  void finalize() { finalized_ = true; }
  bool finalized() const { return finalized_; }

  const AgentConfig& config() const { return config_; }
  const Thalamus& thalamus() const { return thalamus_; }
  const std::vector<Hypercolumn>& columns() const { return columns_; }
  const std::vector<Vector>& action_space() const { return action_space_; }
  std::size_t layer1_count() const { return layer1_count_; }
  std::size_t layer2_count() const { return columns_.size() - layer1_count_; }
  std::size_t layer1_parsers() const { return creation_order_.size(); }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t inner_rewards() const { return inner_rewards_; }
  const DecisionRecord& last_record() const { return last_record_; }
  const SurpriseState& surprise_state() const { return surprise_; }

  std::size_t layer2_vocabulary() const {
    std::size_t n = 0;
    for (std::size_t c = layer1_count_; c < columns_.size(); ++c)
      n += columns_[c].parser()->vocabulary_size();
    return n;
  }

  /// Total bigram count mass over all parsers.
  std::uint64_t count_mass() const {
    std::uint64_t n = 0;
    for (const auto& col : columns_)
      if (col.has_parser()) n += col.parser()->transitions();
    return n;
  }

  std::size_t bootstrap_vectors() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < layer1_count_; ++c) n += columns_[c].bootstrap_size();
    return n;
  }

  // ---- snapshot -------------------------------------------------------------

  void save(std::ostream& os) const {
    std::vector<std::pair<std::string, std::string>> sections;
    {
      ByteWriter w;
      save_config(w, config_);
      w.u64(action_space_.size());
      for (const auto& a : action_space_) w.vec(a);
      sections.emplace_back("config", w.take());
    }
    {
      ByteWriter w;
      thalamus_.save(w);
      sections.emplace_back("thalamus", w.take());
    }
    {
      ByteWriter w;
      w.u64(layer1_count_);
      w.u64(columns_.size());
      for (const auto& c : columns_) c.save(w);
      w.u64(creation_order_.size());
      for (auto id : creation_order_) w.u32(id);
      sections.emplace_back("columns", w.take());
    }
    {
      ByteWriter w;
      surprise_.save(w);
      sections.emplace_back("basal", w.take());
    }
    {
      ByteWriter w;
      w.rng(rng_);
      w.u64(steps_);
      w.u64(inner_rewards_);
      w.boolean(pending_inner_);
      w.boolean(learning_);
      sections.emplace_back("runtime", w.take());
    }

    ByteWriter head;
    for (char c : kSnapshotMagic) head.u8(static_cast<std::uint8_t>(c));
    head.u32(kSnapshotVersion);
    head.u64(sections.size());
    for (const auto& [name, body] : sections) {
      head.str(name);
      head.u64(body.size());
    }
    os.write(head.bytes().data(), static_cast<std::streamsize>(head.bytes().size()));
    for (const auto& [name, body] : sections)
      os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw SnapshotError("snapshot: write failed");
  }

  static Agent load(std::istream& is) {
    const std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    ByteReader head(data);
    for (char c : kSnapshotMagic)
      if (head.u8() != static_cast<std::uint8_t>(c)) throw SnapshotError("snapshot: bad magic");
    const auto version = head.u32();
    if (version != kSnapshotVersion)
      throw SnapshotError("snapshot: version mismatch (file " + std::to_string(version) +
                          ", expected " + std::to_string(kSnapshotVersion) + ")");
    const auto nsections = head.length(16);
    std::map<std::string, std::uint64_t> lengths;
    std::vector<std::string> order;
    for (std::uint64_t i = 0; i < nsections; ++i) {
      auto name = head.str();
      lengths[name] = head.u64();
      order.push_back(std::move(name));
    }
    std::uint64_t total = 0;
    for (const auto& [_, n] : lengths) total += n;
    if (total != head.remaining()) throw SnapshotError("corrupt snapshot: section sizes do not match file");

    std::map<std::string, std::string_view> body;
    std::size_t offset = data.size() - head.remaining();
    for (const auto& name : order) {
      body[name] = std::string_view(data).substr(offset, lengths[name]);
      offset += lengths[name];
    }
    for (const char* required : {"config", "thalamus", "columns", "basal", "runtime"})
      if (!body.contains(required)) throw SnapshotError(std::string("snapshot: missing section ") + required);

    Agent a;
    {
      ByteReader r(body["config"]);
      a.config_ = load_config(r);
      const auto n = r.length(8);
      for (std::uint64_t i = 0; i < n; ++i) a.action_space_.push_back(r.vec());
      expect_end(r, "config");
    }
    {
      ByteReader r(body["thalamus"]);
      a.thalamus_ = Thalamus::load(r);
      expect_end(r, "thalamus");
    }
    {
      ByteReader r(body["columns"]);
      a.layer1_count_ = r.u64();
      const auto n = r.length(8);
      for (std::uint64_t i = 0; i < n; ++i) a.columns_.push_back(Hypercolumn::load(r));
      const auto m = r.length(4);
      for (std::uint64_t i = 0; i < m; ++i) a.creation_order_.push_back(r.u32());
      expect_end(r, "columns");
      if (a.layer1_count_ > a.columns_.size()) throw SnapshotError("corrupt snapshot: column counts");
      for (std::size_t i = 0; i < a.columns_.size(); ++i)
        if (a.columns_[i].id() != i) throw SnapshotError("corrupt snapshot: column ids");
    }
    {
      ByteReader r(body["basal"]);
      a.surprise_ = SurpriseState::load(r);
      expect_end(r, "basal");
    }
    {
      ByteReader r(body["runtime"]);
      r.rng(a.rng_);
      a.steps_ = r.u64();
      a.inner_rewards_ = r.u64();
      a.pending_inner_ = r.boolean();
      a.learning_ = r.boolean();
      expect_end(r, "runtime");
    }
    return a;
  }

 private:
  Agent() = default;

  static void expect_end(const ByteReader& r, const char* section) {
    if (!r.at_end()) throw SnapshotError(std::string("corrupt snapshot: trailing bytes in ") + section);
  }

  void grow_layer2() {
    while (creation_order_.size() >= 3 * (layer2_count() + 1)) {
      const std::size_t k = 3 * layer2_count();
      const auto id = static_cast<ColumnId>(columns_.size());
      columns_.push_back(Hypercolumn::layer2(
          id, {creation_order_[k], creation_order_[k + 1], creation_order_[k + 2]}, config_.layer2));
    }
  }

  static void save_config(ByteWriter& w, const AgentConfig& c) {
    w.u64(c.p);
    w.u64(c.m);
    w.u64(c.columns_per_subset);
    w.u64(c.action_clusters);
    w.u64(c.layer1.unique_limit);
    w.u64(c.layer1.clusters);
    w.u64(c.layer1.word_threshold);
    w.f64(c.layer1.decay);
    w.u64(c.layer1.reward_memory);
    w.u64(c.layer2.word_threshold);
    w.f64(c.layer2.decay);
    w.u64(c.layer2.reward_memory);
    w.u64(c.layer2.max_word_len);
    w.u64(c.layer2.max_vocab);
    w.f64(c.surprise.threshold);
    w.f64(c.surprise.margin);
    w.u64(c.surprise.cooldown);
    w.boolean(c.surprise.streak);
    w.boolean(c.inhibit_unchanged);
    w.boolean(c.disjoint_subsets);
    w.f64(c.epsilon);
    w.boolean(c.defer_inner_reward);
    w.u64(c.seed);
  }

  static AgentConfig load_config(ByteReader& r) {
    AgentConfig c;
    c.p = r.u64();
    c.m = r.u64();
    c.columns_per_subset = r.u64();
    c.action_clusters = r.u64();
    c.layer1.unique_limit = r.u64();
    c.layer1.clusters = r.u64();
    c.layer1.word_threshold = r.u64();
    c.layer1.decay = r.f64();
    c.layer1.reward_memory = r.u64();
    c.layer2.word_threshold = r.u64();
    c.layer2.decay = r.f64();
    c.layer2.reward_memory = r.u64();
    c.layer2.max_word_len = r.u64();
    c.layer2.max_vocab = r.u64();
    c.surprise.threshold = r.f64();
    c.surprise.margin = r.f64();
    c.surprise.cooldown = r.u64();
    c.surprise.streak = r.boolean();
    c.inhibit_unchanged = r.boolean();
    c.disjoint_subsets = r.boolean();
    c.epsilon = r.f64();
    c.defer_inner_reward = r.boolean();
    c.seed = r.u64();
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw SnapshotError(std::string("corrupt snapshot: ") + e.what());
    }
    return c;
  }

  AgentConfig config_;
  std::vector<Vector> action_space_;
  Thalamus thalamus_;
  std::vector<Hypercolumn> columns_;
  std::size_t layer1_count_ = 0;
  std::vector<ColumnId> creation_order_;
  SurpriseState surprise_;
  Rng rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t inner_rewards_ = 0;
  bool pending_inner_ = false;
  bool learning_ = true;
  bool finalized_ = false;
  DecisionRecord last_record_;
};

}  // namespace marti
