#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "marti/bytes.hpp"
#include "marti/common.hpp"

namespace marti {

enum class PredictionMode : std::uint8_t { situation = 0, value = 1 };

struct ParserConfig {
  std::size_t max_word_len = 1;
  std::size_t max_vocab = 1000;
  // A bigram of tokens becomes a word once its count exceeds this.
  std::uint64_t word_threshold = 10;
  // Reward decay k along the transition chain, in (0, 1].
  double decay = 0.9;
  // Number of most recent transitions credited by a reward (m_r).
  std::size_t reward_memory = 10;
  PredictionMode mode = PredictionMode::situation;
  // Open alphabets intern unseen letters on first sight (layer-2 composites).
  bool open_alphabet = false;

  void validate() const {
    if (max_word_len < 1) throw ConfigError("parser: max_word_len must be >= 1");
    if (max_vocab < 1) throw ConfigError("parser: max_vocab must be >= 1");
    if (word_threshold < 1) throw ConfigError("parser: word threshold T must be >= 1");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("parser: decay k must be in (0, 1]");
  }

  friend bool operator==(const ParserConfig&, const ParserConfig&) = default;
};

class NoPredictionError : public std::runtime_error {
 public:
  NoPredictionError() : std::runtime_error("parser: no prediction available (no current token)") {}
};

struct Prediction {
  TokenId context = 0;  // s_n the prediction was made from
  TokenId next = 0;
  double reward_forecast = 0.0;
  // Set when the context row had no observed successors.
  bool fallback = false;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ParseEvent {
  // Tokens closed by this letter, oldest first. Usually zero or one.
  std::vector<TokenId> completed;
  std::optional<TokenId> new_word;
  // R[s_n, received] - R[s_n, predicted] for the first completed token.
  double surprise = 0.0;
  bool predicted_matched = false;
  // Letter was unknown to a frozen parser; context was dropped.
  bool unknown_letter = false;

  std::optional<TokenId> token() const {
    if (completed.empty()) return std::nullopt;
    return completed.back();
  }
};

/// Online symbolic stream learner. Segments the incoming letter stream into
/// vocabulary tokens by greedy longest match, counts token bigrams in C,
/// spreads rewards back along recent transitions in R and promotes frequent
/// bigrams to words.
class Parser {
 public:
  struct Edge {
    TokenId from;
    TokenId to;
    std::uint64_t count;
    double reward;
  };

  struct Stats {
    std::size_t alphabet = 0;
    std::size_t vocabulary = 0;
    std::size_t c_entries = 0;
    std::size_t r_entries = 0;
    std::uint64_t transitions = 0;
  };

  Parser() = default;

  Parser(std::span<const Label> alphabet, ParserConfig config) : config_(config) {
    config_.validate();
    if (alphabet.empty() && !config_.open_alphabet)
      throw ConfigError("parser: alphabet must be nonempty");
    for (const auto& l : alphabet) intern(l);
  }

  static Parser with_letters(std::span<const Letter> letters, ParserConfig config) {
    std::vector<Label> labels;
    for (Letter c : letters) labels.emplace_back(1, c);
    return Parser(labels, config);
  }

  const ParserConfig& config() const { return config_; }

  // ---- learning -----------------------------------------------------------

  ParseEvent observe(Letter letter, double reward) { return observe(Label(1, letter), reward); }

  ParseEvent observe(const Label& letter, double reward) {
    ParseEvent ev;
    auto it = base_index_.find(letter);
    if (it == base_index_.end()) {
      if (frozen_) {
        ev.unknown_letter = true;
        buffer_.clear();
        current_.reset();
        last_prediction_.reset();
        return ev;
      }
      if (!config_.open_alphabet)
        throw std::invalid_argument("parser: letter '" + to_utf8(letter) + "' outside alphabet");
      intern(letter);
      it = base_index_.find(letter);
    }
    buffer_.push_back(it->second);

    std::optional<Label> pending_word;
    segment([&](TokenId tok) {
      const bool first = ev.completed.empty();
      ev.completed.push_back(tok);
      if (first && last_prediction_ && current_ && last_prediction_->context == *current_) {
        ev.predicted_matched = tok == last_prediction_->next;
        if (!ev.predicted_matched)
          ev.surprise = reward_of(*current_, tok) - reward_of(*current_, last_prediction_->next);
      }
      if (current_) {
        if (!frozen_) {
          Edge& e = edges_[edge_for(*current_, tok)];
          ++e.count;
          ++transitions_;
          if (!pending_word && e.count > config_.word_threshold &&
              vocab_.size() < config_.max_vocab) {
            Label word = vocab_[*current_] + vocab_[tok];
            if (word.size() <= config_.max_word_len && !vocab_index_.contains(word))
              pending_word = std::move(word);
          }
          history_.push_back(edge_for(*current_, tok));
          while (history_.size() > config_.reward_memory) history_.pop_front();
        } else if (auto e = find_edge(*current_, tok)) {
          history_.push_back(*e);
          while (history_.size() > config_.reward_memory) history_.pop_front();
        }
      }
      current_ = tok;
    });

    if (!frozen_) {
      reinforce(reward);
      if (pending_word) ev.new_word = add_token(*pending_word);
    }
    return ev;
  }

  /// Spreads a reward over the most recent transitions: the j-th most recent
  /// receives reward * decay^j. Zero rewards leave R untouched.
  void reinforce(double reward) {
    if (frozen_ || reward == 0.0) return;
    double weight = 1.0;
    for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
      edges_[*it].reward += reward * weight;
      weight *= config_.decay;
    }
  }

  /// Forgets per-episode sequence state; learned tables persist.
  void reset_transient() {
    buffer_.clear();
    current_.reset();
    history_.clear();
    last_prediction_.reset();
  }

  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  // ---- prediction ---------------------------------------------------------

  bool has_context() const { return context().has_value(); }
  /// Last completed token.
  std::optional<TokenId> current_token() const { return current_; }

  /// Token predictions are made from: the last completed token, or while
  /// letters are pending, the last token the pending letters would close as.
  std::optional<TokenId> context() const {
    if (buffer_.empty()) return current_;
    std::size_t pos = 0;
    TokenId last = 0;
    while (pos < buffer_.size()) {
      std::size_t len = buffer_.size() - pos;
      auto it = vocab_index_.find(buffer_.substr(pos, len));
      while (it == vocab_index_.end()) {
        --len;
        it = vocab_index_.find(buffer_.substr(pos, len));
      }
      last = it->second;
      pos += len;
    }
    return last;
  }

  Prediction predict() {
    return config_.mode == PredictionMode::situation ? predict_situation() : predict_value();
  }

  /// Most frequent successor of the current token.
  Prediction predict_situation() {
    const TokenId s = context_or_throw();
    Prediction p{s, s, 0.0, true};
    std::uint64_t best = 0;
    for (auto idx : successors(s)) {
      const Edge& e = edges_[idx];
      if (e.count > best || (e.count == best && best > 0 && e.to < p.next)) {
        best = e.count;
        p.next = e.to;
        p.reward_forecast = e.reward;
        p.fallback = false;
      }
    }
    last_prediction_ = p;
    return p;
  }

  /// Observed successor of the current token with the largest accumulated reward.
  Prediction predict_value() {
    const TokenId s = context_or_throw();
    Prediction p{s, s, 0.0, true};
    for (auto idx : successors(s)) {
      const Edge& e = edges_[idx];
      if (e.count == 0) continue;
      if (p.fallback || e.reward > p.reward_forecast ||
          (e.reward == p.reward_forecast && e.to < p.next)) {
        p.next = e.to;
        p.reward_forecast = e.reward;
        p.fallback = false;
      }
    }
    last_prediction_ = p;
    return p;
  }

  const std::optional<Prediction>& last_prediction() const { return last_prediction_; }

  /// Per action letter, the number of observed successors of the current token
  /// that start with that action and carry strictly positive reward.
  std::map<Letter, int> column_feeling(std::span<const Letter> actions) const {
    if (config_.mode != PredictionMode::value)
      throw std::logic_error("parser: column feeling requires a value-mode parser");
    std::map<Letter, int> feel;
    for (Letter a : actions) feel[a] = 0;
    const auto ctx = context();
    if (!ctx) return feel;
    for (auto idx : successors(*ctx)) {
      const Edge& e = edges_[idx];
      if (e.count == 0 || !(e.reward > 0.0)) continue;
      auto f = feel.find(leading_letter(e.to));
      if (f != feel.end()) ++f->second;
    }
    return feel;
  }

  // ---- queries ------------------------------------------------------------

  std::size_t vocabulary_size() const { return vocab_.size(); }
  std::size_t alphabet_size() const { return labels_.size(); }

  /// Display string of a token: its letters' labels concatenated.
  Label token_label(TokenId id) const {
    Label out;
    for (char32_t b : vocab_.at(id)) out += labels_[b];
    return out;
  }
  std::string token_text(TokenId id) const { return to_utf8(token_label(id)); }

  /// Number of base letters in a token.
  std::size_t token_length(TokenId id) const { return vocab_.at(id).size(); }

  Letter leading_letter(TokenId id) const { return labels_[vocab_.at(id).front()].front(); }

  std::optional<TokenId> find_token(const Label& display) const {
    // Display strings are unambiguous only for single-codepoint alphabets;
    // walk the vocabulary for the general case.
    for (TokenId id = 0; id < vocab_.size(); ++id)
      if (token_label(id) == display) return id;
    return std::nullopt;
  }
  std::optional<TokenId> find_letter_token(const Label& letter) const {
    auto it = base_index_.find(letter);
    if (it == base_index_.end()) return std::nullopt;
    return vocab_index_.at(Label(1, it->second));
  }

  std::uint64_t count(TokenId from, TokenId to) const {
    auto e = find_edge(from, to);
    return e ? edges_[*e].count : 0;
  }
  double reward(TokenId from, TokenId to) const { return reward_of(from, to); }

  std::span<const Edge> edges() const { return edges_; }
  std::uint64_t transitions() const { return transitions_; }
  std::size_t history_size() const { return history_.size(); }
  std::vector<std::pair<TokenId, TokenId>> history() const {
    std::vector<std::pair<TokenId, TokenId>> out;
    for (auto i : history_) out.emplace_back(edges_[i].from, edges_[i].to);
    return out;
  }

  Stats stats() const {
    Stats s;
    s.alphabet = labels_.size();
    s.vocabulary = vocab_.size();
    s.c_entries = edges_.size();
    for (const auto& e : edges_)
      if (e.reward != 0.0) ++s.r_entries;
    s.transitions = transitions_;
    return s;
  }

  /// One line per table entry, "token\ttoken\tcount\treward", sorted.
  std::string dump() const {
    std::vector<std::string> lines;
    lines.reserve(edges_.size());
    char num[64];
    for (const auto& e : edges_) {
      std::snprintf(num, sizeof num, "%.17g", e.reward);
      lines.push_back(token_text(e.from) + '\t' + token_text(e.to) + '\t' +
                      std::to_string(e.count) + '\t' + num);
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) out += l + '\n';
    return out;
  }

  // ---- persistence ----------------------------------------------------------

  void save(ByteWriter& w) const {
    w.u64(config_.max_word_len);
    w.u64(config_.max_vocab);
    w.u64(config_.word_threshold);
    w.f64(config_.decay);
    w.u64(config_.reward_memory);
    w.u8(static_cast<std::uint8_t>(config_.mode));
    w.boolean(config_.open_alphabet);

    w.u64(labels_.size());
    for (const auto& l : labels_) w.u32str(l);
    w.u64(vocab_.size());
    for (const auto& t : vocab_) w.u32str(t);
    w.u64(edges_.size());
    for (const auto& e : edges_) {
      w.u32(e.from);
      w.u32(e.to);
      w.u64(e.count);
      w.f64(e.reward);
    }
    w.u64(transitions_);

    w.u32str(buffer_);
    w.boolean(current_.has_value());
    w.u32(current_.value_or(0));
    w.u64(history_.size());
    for (auto i : history_) w.u32(i);
    w.boolean(last_prediction_.has_value());
    const Prediction p = last_prediction_.value_or(Prediction{});
    w.u32(p.context);
    w.u32(p.next);
    w.f64(p.reward_forecast);
    w.boolean(p.fallback);
    w.boolean(frozen_);
  }

  static Parser load(ByteReader& r) {
    Parser p;
    p.config_.max_word_len = r.u64();
    p.config_.max_vocab = r.u64();
    p.config_.word_threshold = r.u64();
    p.config_.decay = r.f64();
    p.config_.reward_memory = r.u64();
    const auto mode = r.u8();
    if (mode > 1) throw SnapshotError("corrupt snapshot: bad parser mode");
    p.config_.mode = static_cast<PredictionMode>(mode);
    p.config_.open_alphabet = r.boolean();
    try {
      p.config_.validate();
    } catch (const ConfigError& e) {
      throw SnapshotError(std::string("corrupt snapshot: ") + e.what());
    }

    const auto nlabels = r.length(8);
    for (std::uint64_t i = 0; i < nlabels; ++i) {
      auto l = r.u32str();
      if (p.base_index_.contains(l)) throw SnapshotError("corrupt snapshot: duplicate letter");
      p.base_index_.emplace(l, static_cast<char32_t>(p.labels_.size()));
      p.labels_.push_back(std::move(l));
    }
    const auto ntok = r.length(8);
    for (std::uint64_t i = 0; i < ntok; ++i) {
      auto t = r.u32str();
      if (t.empty() || p.vocab_index_.contains(t))
        throw SnapshotError("corrupt snapshot: bad token");
      for (char32_t b : t)
        if (b >= p.labels_.size()) throw SnapshotError("corrupt snapshot: token letter out of range");
      p.add_token(t);
    }
    const auto nedges = r.length(24);
    p.edges_.reserve(nedges);
    for (std::uint64_t i = 0; i < nedges; ++i) {
      Edge e{r.u32(), r.u32(), r.u64(), r.f64()};
      if (e.from >= ntok || e.to >= ntok) throw SnapshotError("corrupt snapshot: edge out of range");
      const auto idx = static_cast<std::uint32_t>(p.edges_.size());
      if (!p.edge_index_.emplace(key(e.from, e.to), idx).second)
        throw SnapshotError("corrupt snapshot: duplicate edge");
      p.rows_[e.from].push_back(idx);
      p.edges_.push_back(e);
    }
    p.transitions_ = r.u64();

    p.buffer_ = r.u32str();
    for (char32_t b : p.buffer_)
      if (b >= p.labels_.size()) throw SnapshotError("corrupt snapshot: buffer letter out of range");
    const bool has_current = r.boolean();
    const auto cur = r.u32();
    if (has_current) {
      if (cur >= ntok) throw SnapshotError("corrupt snapshot: current token out of range");
      p.current_ = cur;
    }
    const auto nhist = r.length(4);
    for (std::uint64_t i = 0; i < nhist; ++i) {
      const auto h = r.u32();
      if (h >= nedges) throw SnapshotError("corrupt snapshot: history out of range");
      p.history_.push_back(h);
    }
    const bool has_pred = r.boolean();
    Prediction pred{r.u32(), r.u32(), r.f64(), r.boolean()};
    if (has_pred) {
      if (pred.context >= ntok || pred.next >= ntok)
        throw SnapshotError("corrupt snapshot: prediction out of range");
      p.last_prediction_ = pred;
    }
    p.frozen_ = r.boolean();
    return p;
  }

 private:
  static std::uint64_t key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  void intern(const Label& letter) {
    if (letter.empty()) throw ConfigError("parser: empty letter");
    if (base_index_.contains(letter)) return;
    const auto id = static_cast<char32_t>(labels_.size());
    labels_.push_back(letter);
    base_index_.emplace(letter, id);
    add_token(Label(1, id));
  }

  TokenId add_token(const Label& letters) {
    const auto id = static_cast<TokenId>(vocab_.size());
    vocab_.push_back(letters);
    vocab_index_.emplace(letters, id);
    for (std::size_t n = 1; n < letters.size(); ++n) proper_prefixes_.insert(letters.substr(0, n));
    return id;
  }

  /// Closes tokens from the front of the buffer until what is left could
  /// still grow into a longer word.
  template <typename Emit>
  void segment(Emit&& emit) {
    while (!buffer_.empty()) {
      if (proper_prefixes_.contains(buffer_)) return;
      std::size_t len = buffer_.size();
      auto it = vocab_index_.find(buffer_);
      while (it == vocab_index_.end()) {
        --len;
        it = vocab_index_.find(buffer_.substr(0, len));
      }
      const TokenId tok = it->second;
      buffer_.erase(0, len);
      emit(tok);
    }
  }

  std::uint32_t edge_for(TokenId from, TokenId to) {
    auto [it, inserted] =
        edge_index_.try_emplace(key(from, to), static_cast<std::uint32_t>(edges_.size()));
    if (inserted) {
      edges_.push_back(Edge{from, to, 0, 0.0});
      rows_[from].push_back(it->second);
    }
    return it->second;
  }

  std::optional<std::uint32_t> find_edge(TokenId from, TokenId to) const {
    auto it = edge_index_.find(key(from, to));
    if (it == edge_index_.end()) return std::nullopt;
    return it->second;
  }

  double reward_of(TokenId from, TokenId to) const {
    auto e = find_edge(from, to);
    return e ? edges_[*e].reward : 0.0;
  }

  std::span<const std::uint32_t> successors(TokenId from) const {
    auto it = rows_.find(from);
    if (it == rows_.end()) return {};
    return it->second;
  }

  TokenId context_or_throw() const {
    auto c = context();
    if (!c) throw NoPredictionError();
    return *c;
  }

  ParserConfig config_;
  std::vector<Label> labels_;
  std::unordered_map<Label, char32_t> base_index_;
  // Tokens are strings over base-letter indices.
  std::vector<Label> vocab_;
  std::unordered_map<Label, TokenId> vocab_index_;
  std::unordered_set<Label> proper_prefixes_;

  std::vector<Edge> edges_;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_index_;
  std::unordered_map<TokenId, std::vector<std::uint32_t>> rows_;
  std::uint64_t transitions_ = 0;

  Label buffer_;
  std::optional<TokenId> current_;
  std::deque<std::uint32_t> history_;
  std::optional<Prediction> last_prediction_;
  bool frozen_ = false;
};

}  // namespace marti
