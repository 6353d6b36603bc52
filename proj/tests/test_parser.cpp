#include <gtest/gtest.h>

#include "marti/parser.hpp"
#include "oracles.hpp"

using namespace marti;

namespace {

ParserConfig cfg(std::size_t max_len, std::uint64_t T, PredictionMode mode = PredictionMode::situation) {
  ParserConfig c;
  c.max_word_len = max_len;
  c.word_threshold = T;
  c.mode = mode;
  return c;
}

std::vector<Letter> letters(std::u32string_view s) { return {s.begin(), s.end()}; }

Parser abc_parser(ParserConfig c, std::u32string_view alphabet = U"ABCDEFGH") {
  return Parser::with_letters(letters(alphabet), c);
}

TokenId tok(const Parser& p, Letter l) { return *p.find_letter_token(Label(1, l)); }

ParserConfig open_value(std::size_t memory) {
  ParserConfig c;
  c.max_word_len = 4;
  c.max_vocab = 5000;
  c.word_threshold = 1000;
  c.reward_memory = memory;
  c.mode = PredictionMode::value;
  c.open_alphabet = true;
  return c;
}

}  // namespace

TEST(ParserConfig, LayerShapes) {
  EXPECT_NO_THROW(abc_parser(cfg(1, 10)));
  ParserConfig l2 = cfg(4, 10, PredictionMode::value);
  l2.max_vocab = 5000;
  EXPECT_NO_THROW(abc_parser(l2));
  ParserConfig wide = cfg(3, 10);
  wide.max_vocab = 1000;
  EXPECT_NO_THROW(abc_parser(wide));
}

TEST(ParserConfig, Rejects) {
  EXPECT_THROW(abc_parser(cfg(0, 10)), ConfigError);
  EXPECT_THROW(abc_parser(cfg(1, 0)), ConfigError);
  auto c = cfg(1, 1);
  c.decay = 0.0;
  EXPECT_THROW(abc_parser(c), ConfigError);
  c.decay = 1.5;
  EXPECT_THROW(abc_parser(c), ConfigError);
  EXPECT_THROW(Parser(std::span<const Label>{}, cfg(1, 1)), ConfigError);
}

TEST(ParserObserve, UnknownLetterRejected) {
  auto p = abc_parser(cfg(1, 10), U"AB");
  EXPECT_THROW(p.observe(U'Z', 0.0), std::invalid_argument);
}

TEST(ParserObserve, WordFormsOnThirdTransition) {
  auto p = abc_parser(cfg(2, 2), U"AB");
  const std::u32string stream = U"ABABAB";
  for (std::size_t i = 0; i < stream.size(); ++i) {
    auto ev = p.observe(stream[i], 0.0);
    if (i == 5) {
      ASSERT_TRUE(ev.new_word.has_value());
      EXPECT_EQ(p.token_text(*ev.new_word), "AB");
      EXPECT_EQ(p.count(tok(p, U'A'), tok(p, U'B')), 3u);
    } else {
      EXPECT_FALSE(ev.new_word.has_value()) << "step " << i;
    }
  }
  EXPECT_EQ(p.vocabulary_size(), 3u);
}

TEST(ParserObserve, NewWordSegmentsFollowingLetters) {
  auto p = abc_parser(cfg(2, 2), U"AB");
  for (Letter l : std::u32string(U"ABABAB")) p.observe(l, 0.0);
  const auto ab = *p.find_token(U"AB");
  auto ev = p.observe(U'A', 0.0);
  EXPECT_TRUE(ev.completed.empty());  // "A" may still grow into "AB"
  ev = p.observe(U'B', 0.0);
  ASSERT_EQ(ev.completed.size(), 1u);
  EXPECT_EQ(ev.completed[0], ab);
}

TEST(ParserObserve, WordLengthCapped) {
  auto p = abc_parser(cfg(1, 1), U"AB");
  for (int i = 0; i < 50; ++i) p.observe(i % 2 ? U'B' : U'A', 0.0);
  EXPECT_EQ(p.vocabulary_size(), 2u);
}

TEST(ParserObserve, VocabularyCapped) {
  auto c = cfg(4, 1);
  c.max_vocab = 4;
  auto p = abc_parser(c, U"ABC");
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) p.observe(U'A' + static_cast<Letter>(uniform_index(rng, 3)), 0.0);
  EXPECT_EQ(p.vocabulary_size(), 4u);
}

TEST(ParserObserve, CountsMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto alpha = 2 + uniform_index(rng, 6);
    auto c = cfg(1 + uniform_index(rng, 4), 1 + uniform_index(rng, 20));
    std::u32string a;
    for (std::size_t i = 0; i < alpha; ++i) a.push_back(U'A' + static_cast<Letter>(i));
    auto p = abc_parser(c, a);
    std::vector<std::vector<TokenId>> segments(1);
    for (int i = 0; i < 2000; ++i) {
      const auto ev = p.observe(a[uniform_index(rng, alpha)], 0.0);
      for (auto t : ev.completed) segments.back().push_back(t);
      if (uniform_index(rng, 300) == 0) {
        p.reset_transient();
        segments.emplace_back();
      }
    }
    const auto expected = oracle::bigrams(segments);
    std::uint64_t total = 0;
    for (const auto& e : p.edges()) {
      EXPECT_EQ(e.count, expected.count({e.from, e.to}) ? expected.at({e.from, e.to}) : 0u);
      total += e.count;
    }
    std::uint64_t expected_total = 0;
    for (const auto& [k, v] : expected) expected_total += v;
    EXPECT_EQ(total, expected_total);
    EXPECT_EQ(p.transitions(), expected_total);
  }
}

TEST(ParserReward, ChainExample) {
  auto c = cfg(1, 100);
  c.decay = 0.5;
  c.reward_memory = 2;
  auto p = abc_parser(c, U"XYZ");
  p.observe(U'X', 0.0);
  p.observe(U'Y', 0.0);
  p.observe(U'Z', 1.0);
  const auto x = tok(p, U'X'), y = tok(p, U'Y'), z = tok(p, U'Z');
  EXPECT_DOUBLE_EQ(p.reward(y, z), 1.0);
  EXPECT_DOUBLE_EQ(p.reward(x, y), 0.5);
}

TEST(ParserReward, ZeroRewardIsNoOp) {
  auto p = abc_parser(cfg(1, 100), U"XY");
  p.observe(U'X', 0.0);
  p.observe(U'Y', 0.0);
  p.observe(U'X', 0.0);
  for (const auto& e : p.edges()) EXPECT_EQ(e.reward, 0.0);
}

TEST(ParserReward, MemoryBound) {
  auto c = cfg(1, 1000);
  c.decay = 1.0;
  c.reward_memory = 3;
  auto p = abc_parser(c, U"ABCDEFGH");
  for (Letter l : std::u32string(U"ABCDEF")) p.observe(l, 0.0);
  p.reinforce(1.0);
  EXPECT_EQ(p.reward(tok(p, U'A'), tok(p, U'B')), 0.0);
  EXPECT_EQ(p.reward(tok(p, U'B'), tok(p, U'C')), 0.0);
  EXPECT_EQ(p.reward(tok(p, U'C'), tok(p, U'D')), 1.0);
  EXPECT_EQ(p.reward(tok(p, U'E'), tok(p, U'F')), 1.0);
}

TEST(ParserReward, MatchesChainOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto c = cfg(1, 1000);
    c.decay = 0.05 + 0.95 * uniform01(rng);
    c.reward_memory = uniform_index(rng, 12);
    auto p = abc_parser(c, U"ABCD");
    oracle::RewardChain chain(c.decay, c.reward_memory);
    std::optional<TokenId> prev;
    for (int i = 0; i < 300; ++i) {
      const double r = uniform_index(rng, 3) == 0 ? uniform01(rng) * 4 - 2 : 0.0;
      const auto ev = p.observe(U'A' + static_cast<Letter>(uniform_index(rng, 4)), r);
      for (auto t : ev.completed) {
        if (prev) chain.transition(*prev, t);
        prev = t;
      }
      chain.reward(r);
    }
    for (const auto& e : p.edges()) {
      auto it = chain.table().find({e.from, e.to});
      const double want = it == chain.table().end() ? 0.0 : it->second;
      EXPECT_NEAR(e.reward, want, 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(ParserPredict, SituationArgmaxAndTies) {
  auto p = abc_parser(cfg(1, 1000), U"ABCD");
  for (int i = 0; i < 5; ++i) {
    p.observe(U'A', 0.0);
    p.observe(U'B', 0.0);
  }
  for (int i = 0; i < 2; ++i) {
    p.observe(U'A', 0.0);
    p.observe(U'C', 0.0);
  }
  p.observe(U'A', 0.0);
  EXPECT_EQ(p.predict_situation().next, tok(p, U'B'));

  auto q = abc_parser(cfg(1, 1000), U"ABCD");
  for (Letter l : std::u32string(U"ADADADABABAB")) q.observe(l, 0.0);
  q.observe(U'A', 0.0);
  EXPECT_EQ(q.count(tok(q, U'A'), tok(q, U'B')), 3u);
  EXPECT_EQ(q.count(tok(q, U'A'), tok(q, U'D')), 3u);
  EXPECT_EQ(q.predict_situation().next, tok(q, U'B'));
}

TEST(ParserPredict, FallbackOnEmptyRow) {
  auto p = abc_parser(cfg(1, 10), U"AB");
  EXPECT_THROW(p.predict(), NoPredictionError);
  p.observe(U'A', 0.0);
  const auto pr = p.predict();
  EXPECT_TRUE(pr.fallback);
  EXPECT_EQ(pr.next, tok(p, U'A'));
  EXPECT_EQ(pr.reward_forecast, 0.0);
}

TEST(ParserPredict, ValueArgmax) {
  auto c = open_value(1);
  Parser p(std::span<const Label>{}, c);
  const Label s = U"S", x = U"X", y = U"Y";
  p.observe(s, 0);
  p.observe(x, 2.0);
  p.observe(s, 0);
  p.observe(y, -1.0);
  p.observe(s, 0);
  auto pr = p.predict_value();
  EXPECT_EQ(p.token_label(pr.next), x);
  EXPECT_DOUBLE_EQ(pr.reward_forecast, 2.0);

  Parser q(std::span<const Label>{}, c);
  q.observe(s, 0);
  q.observe(x, -1.0);
  q.observe(s, 0);
  q.observe(y, -3.0);
  q.observe(s, 0);
  EXPECT_EQ(q.token_label(q.predict_value().next), x);

  Parser r(std::span<const Label>{}, c);
  for (int i = 0; i < 4; ++i) {
    r.observe(s, 0);
    r.observe(x, 0);
  }
  r.observe(s, 0);
  pr = r.predict_value();
  EXPECT_FALSE(pr.fallback);
  EXPECT_EQ(r.token_label(pr.next), x);
  EXPECT_EQ(pr.reward_forecast, 0.0);
}

TEST(ParserPredict, ScaleInvariance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto c = open_value(3);
    Parser a(std::span<const Label>{}, c), b(std::span<const Label>{}, c);
    const double scale = 0.1 + uniform01(rng) * 10;
    for (int i = 0; i < 200; ++i) {
      const Label l(1, U'A' + static_cast<Letter>(uniform_index(rng, 5)));
      const double r = uniform01(rng) * 2 - 1;
      a.observe(l, r);
      b.observe(l, r * scale);
    }
    EXPECT_EQ(a.predict_value().next, b.predict_value().next);
  }
}

TEST(ParserFeeling, WorkedExample) {
  Parser p(std::span<const Label>{}, open_value(1));
  const Label ctx = U"nABC";
  const std::vector<std::pair<Label, double>> succ = {
      {U"dXYZ", 2.0}, {U"dQRS", 0.5}, {U"dAAA", -1.0}, {U"nBBB", 3.0}};
  for (const auto& [label, r] : succ) {
    p.observe(ctx, 0.0);
    p.observe(label, r);
  }
  p.observe(ctx, 0.0);
  const std::vector<Letter> actions{U'd', U'n'};
  auto f = p.column_feeling(actions);
  EXPECT_EQ(f[U'd'], 2);
  EXPECT_EQ(f[U'n'], 1);
  EXPECT_EQ(f, oracle::column_feeling(p, *p.current_token(), actions));
  EXPECT_DOUBLE_EQ(p.reward(*p.find_token(ctx), *p.find_token(U"dXYZ")), 2.0);
}

TEST(ParserFeeling, EmptyAndZero) {
  Parser p(std::span<const Label>{}, open_value(1));
  p.observe(Label(U"nABC"), 0.0);
  const std::vector<Letter> actions{U'd', U'n', U'u'};
  for (const auto& [a, f] : p.column_feeling(actions)) EXPECT_EQ(f, 0);
  p.observe(Label(U"uPPP"), 0.0);
  p.observe(Label(U"nABC"), 0.0);
  EXPECT_EQ(p.column_feeling(actions)[U'u'], 0);
}

TEST(ParserFeeling, SituationModeRejected) {
  auto p = abc_parser(cfg(1, 10), U"AB");
  p.observe(U'A', 0);
  EXPECT_THROW(p.column_feeling(std::vector<Letter>{U'a'}), std::logic_error);
}

TEST(ParserSurprise, MispredictionScoresRewardGap) {
  Parser p(std::span<const Label>{}, open_value(1));
  const Label s = U"S", good = U"G", bad = U"B";
  p.observe(s, 0);
  p.observe(good, 1.0);
  p.observe(s, 0);
  p.observe(bad, 3.0);
  p.observe(s, 0);
  p.predict_value();  // predicts bad (R 3)
  auto ev = p.observe(good, 0.0);
  EXPECT_FALSE(ev.predicted_matched);
  EXPECT_DOUBLE_EQ(ev.surprise, 1.0 - 3.0);
  p.observe(s, 0);
  p.predict_value();
  ev = p.observe(bad, 0.0);
  EXPECT_TRUE(ev.predicted_matched);
  EXPECT_EQ(ev.surprise, 0.0);
}

TEST(ParserFrozen, NoMutation) {
  auto p = abc_parser(cfg(2, 2), U"AB");
  for (Letter l : std::u32string(U"ABABAB")) p.observe(l, 1.0);
  const auto before = p.dump();
  const auto vocab = p.vocabulary_size();
  p.set_frozen(true);
  for (Letter l : std::u32string(U"ABBBAABABBA")) p.observe(l, 1.0);
  p.reinforce(5.0);
  EXPECT_EQ(p.dump(), before);
  EXPECT_EQ(p.vocabulary_size(), vocab);
}

TEST(ParserFrozen, UnknownLetterDropsContext) {
  Parser p(std::span<const Label>{}, open_value(2));
  p.observe(Label(U"aAAA"), 0.0);
  p.set_frozen(true);
  auto ev = p.observe(Label(U"zZZZ"), 0.0);
  EXPECT_TRUE(ev.unknown_letter);
  EXPECT_FALSE(p.has_context());
  EXPECT_EQ(p.alphabet_size(), 1u);
}

TEST(ParserPersist, SaveLoadRoundTrip) {
  auto c = cfg(3, 3, PredictionMode::value);
  auto p = abc_parser(c, U"ABC");
  Rng rng(3);
  for (int i = 0; i < 500; ++i) p.observe(U'A' + static_cast<Letter>(uniform_index(rng, 3)), uniform01(rng) - 0.5);
  ByteWriter w;
  p.save(w);
  const auto bytes = w.take();
  ByteReader r(bytes);
  auto q = Parser::load(r);
  EXPECT_EQ(q.dump(), p.dump());
  for (int i = 0; i < 100; ++i) {
    const Letter l = U'A' + static_cast<Letter>(uniform_index(rng, 3));
    const double rew = uniform01(rng);
    auto e1 = p.observe(l, rew);
    auto e2 = q.observe(l, rew);
    EXPECT_EQ(e1.completed, e2.completed);
    if (p.has_context()) EXPECT_EQ(p.predict(), q.predict());
  }
  EXPECT_EQ(q.dump(), p.dump());
}

TEST(ParserPersist, TruncatedRejected) {
  auto p = abc_parser(cfg(1, 3), U"AB");
  p.observe(U'A', 1);
  p.observe(U'B', 1);
  ByteWriter w;
  p.save(w);
  auto bytes = w.take();
  bytes.resize(bytes.size() - 3);
  ByteReader r(bytes);
  EXPECT_THROW(Parser::load(r), SnapshotError);
}
