#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "marti/bytes.hpp"
#include "marti/codebook.hpp"
#include "marti/common.hpp"
#include "marti/parser.hpp"

namespace marti {

struct Layer1Params {
  // Distinct vectors a column must exceed before its parser is created (v).
  std::size_t unique_limit = 100;
  std::size_t clusters = 20;  // K
  std::uint64_t word_threshold = 10;
  double decay = 0.9;
  std::size_t reward_memory = 10;
};

struct Layer2Params {
  std::uint64_t word_threshold = 10;
  double decay = 0.9;
  std::size_t reward_memory = 10;
  std::size_t max_word_len = 4;
  std::size_t max_vocab = 5000;
};

inline ParserConfig layer1_parser_config(const Layer1Params& p) {
  return ParserConfig{.max_word_len = 1,
                      .max_vocab = p.clusters,
                      .word_threshold = p.word_threshold,
                      .decay = p.decay,
                      .reward_memory = p.reward_memory,
                      .mode = PredictionMode::situation,
                      .open_alphabet = false};
}

inline ParserConfig layer2_parser_config(const Layer2Params& p) {
  return ParserConfig{.max_word_len = p.max_word_len,
                      .max_vocab = p.max_vocab,
                      .word_threshold = p.word_threshold,
                      .decay = p.decay,
                      .reward_memory = p.reward_memory,
                      .mode = PredictionMode::value,
                      .open_alphabet = true};
}

/// Output of one hypercolumn step once its parser exists.
struct ColumnOutput {
  Label input;  // letter (layer 1) or composite (layer 2) received
  ParseEvent event;
  std::optional<Prediction> prediction;
  std::map<Letter, int> feelings;  // layer 2 only
  bool inhibited = false;
};

/// Cortical hypercolumn: a coder plus a parser. Layer-1 columns quantize a
/// slice of the sensor vector and run a situation-mode parser over the
/// resulting letters; layer-2 columns parse composites of an action letter and
/// three layer-1 letters with a value-mode parser.
class Hypercolumn {
 public:
  Hypercolumn() = default;

  static Hypercolumn layer1(ColumnId id, std::vector<std::size_t> input_indices,
                            std::uint64_t seed) {
    Hypercolumn h;
    h.id_ = id;
    h.layer_ = 1;
    h.input_indices_ = std::move(input_indices);
    h.seed_ = seed;
    return h;
  }

  static Hypercolumn layer2(ColumnId id, std::array<ColumnId, 3> substrate,
                            const Layer2Params& params) {
    Hypercolumn h;
    h.id_ = id;
    h.layer_ = 2;
    h.substrate_ = substrate;
    h.parser_ = Parser(std::span<const Label>{}, layer2_parser_config(params));
    return h;
  }

  ColumnId id() const { return id_; }
  int layer() const { return layer_; }
  const std::vector<std::size_t>& input_indices() const { return input_indices_; }
  const std::array<ColumnId, 3>& substrate() const { return substrate_; }
  bool has_parser() const { return parser_.has_value(); }
  const std::optional<Codebook>& codebook() const { return codebook_; }
  const std::optional<Parser>& parser() const { return parser_; }
  Parser& mutable_parser() { return *parser_; }
  std::size_t bootstrap_size() const { return bootstrap_.size(); }
  const std::optional<Label>& last_input() const { return last_input_; }
  const std::optional<ColumnOutput>& last_output() const { return last_output_; }

  /// Layer-1 perception half. While bootstrapping, collects distinct vectors
  /// and fits the codebook and parser once their number exceeds the limit;
  /// returns nothing during that phase. Afterwards encodes the vector and
  /// feeds the letter to the parser unless it repeats the previous letter
  /// and inhibition is on.
  std::optional<ColumnOutput> l1_perceive(std::span<const double> subvector, double reward,
                                          const Layer1Params& params, bool inhibit_unchanged = true,
                                          bool learning = true) {
    if (subvector.size() != input_indices_.size())
      throw DimensionError("hypercolumn " + std::to_string(id_) + ": expected " +
                           std::to_string(input_indices_.size()) + " inputs, got " +
                           std::to_string(subvector.size()));
    if (!parser_) {
      if (learning) collect(subvector, params);
      return std::nullopt;
    }
    ColumnOutput out;
    out.input = Label(1, codebook_->encode_letter(subvector));
    perceive(out, reward, inhibit_unchanged);
    return out;
  }

  /// Layer-2 perception half: observes the composite as one letter.
  ColumnOutput l2_perceive(const Label& composite, double reward, bool inhibit_unchanged) {
    if (composite.size() != 4) throw std::invalid_argument("hypercolumn: composite must be 4 letters");
    ColumnOutput out;
    out.input = composite;
    perceive(out, reward, inhibit_unchanged);
    return out;
  }

  /// Prediction half, run after the perception half (and any inner reward).
  /// Inhibited steps keep the previous prediction and feelings.
  void predict(ColumnOutput& out, std::span<const Letter> actions = {}) {
    if (out.inhibited) {
      if (last_output_) {
        out.prediction = last_output_->prediction;
        out.feelings = last_output_->feelings;
      }
    } else if (parser_->has_context()) {
      out.prediction = parser_->predict();
      if (layer_ == 2) out.feelings = parser_->column_feeling(actions);
    }
    if (layer_ == 2 && out.feelings.empty())
      for (Letter a : actions) out.feelings[a] = 0;
    last_output_ = out;
  }

  std::optional<ColumnOutput> l1_collect_or_step(std::span<const double> subvector, double reward,
                                                 const Layer1Params& params,
                                                 bool inhibit_unchanged = true) {
    auto out = l1_perceive(subvector, reward, params, inhibit_unchanged);
    if (out) predict(*out);
    return out;
  }

  ColumnOutput l2_step(const Label& composite, double reward, std::span<const Letter> actions,
                       bool inhibit_unchanged = true) {
    auto out = l2_perceive(composite, reward, inhibit_unchanged);
    predict(out, actions);
    return out;
  }

  /// Current letter for a layer-1 column without touching the parser.
  std::optional<Letter> encode(std::span<const double> subvector) const {
    if (!codebook_) return std::nullopt;
    return codebook_->encode_letter(subvector);
  }

  void reset_transient() {
    if (parser_) parser_->reset_transient();
    last_input_.reset();
    last_output_.reset();
  }

  void set_frozen(bool frozen) {
    if (parser_) parser_->set_frozen(frozen);
  }

  void save(ByteWriter& w) const {
    w.u32(id_);
    w.u8(static_cast<std::uint8_t>(layer_));
    w.u64(seed_);
    w.u64(input_indices_.size());
    for (auto i : input_indices_) w.u64(i);
    for (auto s : substrate_) w.u32(s);
    w.u64(bootstrap_.size());
    for (const auto& v : bootstrap_) w.vec(v);
    w.boolean(codebook_.has_value());
    if (codebook_) codebook_->save(w);
    w.boolean(parser_.has_value());
    if (parser_) parser_->save(w);
    w.boolean(last_input_.has_value());
    if (last_input_) w.u32str(*last_input_);
    w.boolean(last_output_.has_value());
    if (last_output_) save_output(w, *last_output_);
  }

  static Hypercolumn load(ByteReader& r) {
    Hypercolumn h;
    h.id_ = r.u32();
    h.layer_ = r.u8();
    if (h.layer_ != 1 && h.layer_ != 2) throw SnapshotError("corrupt snapshot: bad column layer");
    h.seed_ = r.u64();
    const auto n = r.length(8);
    for (std::uint64_t i = 0; i < n; ++i) h.input_indices_.push_back(r.u64());
    for (auto& s : h.substrate_) s = r.u32();
    const auto nb = r.length(8);
    for (std::uint64_t i = 0; i < nb; ++i) {
      auto v = r.vec();
      h.bootstrap_keys_.insert(bits_of(v));
      h.bootstrap_.push_back(std::move(v));
    }
    if (r.boolean()) h.codebook_ = Codebook::load(r);
    if (r.boolean()) h.parser_ = Parser::load(r);
    if (r.boolean()) h.last_input_ = r.u32str();
    if (r.boolean()) h.last_output_ = load_output(r);
    if (h.layer_ == 1 && h.parser_ && !h.codebook_)
      throw SnapshotError("corrupt snapshot: layer-1 parser without codebook");
    return h;
  }

 private:
  static std::vector<std::uint64_t> bits_of(std::span<const double> v) {
    std::vector<std::uint64_t> key(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) key[i] = std::bit_cast<std::uint64_t>(v[i]);
    return key;
  }

  void collect(std::span<const double> subvector, const Layer1Params& params) {
    if (!bootstrap_keys_.insert(bits_of(subvector)).second) return;
    bootstrap_.emplace_back(subvector.begin(), subvector.end());
    if (bootstrap_.size() <= params.unique_limit) return;
    codebook_ = Codebook::fit(bootstrap_, params.clusters, seed_, U'A');
    parser_ = Parser::with_letters(codebook_->alphabet(), layer1_parser_config(params));
    bootstrap_.clear();
    bootstrap_keys_.clear();
  }

  void perceive(ColumnOutput& out, double reward, bool inhibit_unchanged) {
    if (inhibit_unchanged && last_input_ && *last_input_ == out.input) {
      out.inhibited = true;
      // The letter is unchanged but a reward still reaches the recent chain.
      parser_->reinforce(reward);
      return;
    }
    out.event = parser_->observe(out.input, reward);
    last_input_ = out.input;
  }

  static void save_output(ByteWriter& w, const ColumnOutput& o) {
    w.u32str(o.input);
    w.boolean(o.inhibited);
    w.f64(o.event.surprise);
    w.boolean(o.event.predicted_matched);
    w.boolean(o.prediction.has_value());
    if (o.prediction) {
      w.u32(o.prediction->context);
      w.u32(o.prediction->next);
      w.f64(o.prediction->reward_forecast);
      w.boolean(o.prediction->fallback);
    }
    w.u64(o.feelings.size());
    for (const auto& [a, f] : o.feelings) {
      w.u32(static_cast<std::uint32_t>(a));
      w.i64(f);
    }
  }

  static ColumnOutput load_output(ByteReader& r) {
    ColumnOutput o;
    o.input = r.u32str();
    o.inhibited = r.boolean();
    o.event.surprise = r.f64();
    o.event.predicted_matched = r.boolean();
    if (r.boolean()) o.prediction = Prediction{r.u32(), r.u32(), r.f64(), r.boolean()};
    const auto n = r.length(12);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto a = static_cast<Letter>(r.u32());
      o.feelings[a] = static_cast<int>(r.i64());
    }
    return o;
  }

  ColumnId id_ = 0;
  int layer_ = 1;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> input_indices_;
  std::array<ColumnId, 3> substrate_{};
  std::vector<Vector> bootstrap_;
  std::set<std::vector<std::uint64_t>> bootstrap_keys_;
  std::optional<Codebook> codebook_;
  std::optional<Parser> parser_;
  std::optional<Label> last_input_;
  std::optional<ColumnOutput> last_output_;
};

}  // namespace marti
