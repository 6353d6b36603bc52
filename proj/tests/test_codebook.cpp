#include <gtest/gtest.h>

#include <cmath>

#include "marti/codebook.hpp"

using namespace marti;

namespace {

std::vector<Vector> two_blobs() {
  std::vector<Vector> data;
  for (int i = 0; i < 50; ++i) data.push_back({0, 0});
  for (int i = 0; i < 50; ++i) data.push_back({10, 10});
  return data;
}

double objective(const std::vector<Vector>& data, const std::vector<Vector>& centroids) {
  double total = 0;
  for (const auto& v : data) {
    double best = INFINITY;
    for (const auto& c : centroids) best = std::min(best, squared_distance(v, c));
    total += best;
  }
  return total;
}

}  // namespace

TEST(KMeans, SeparableSetConvergesToMeans) {
  auto data = two_blobs();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cb = Codebook::fit(data, 2, seed);
    ASSERT_EQ(cb.size(), 2u);
    EXPECT_LT(std::sqrt(squared_distance(cb.decode(0), Vector{0, 0})), 0.5);
    EXPECT_LT(std::sqrt(squared_distance(cb.decode(1), Vector{10, 10})), 0.5);
  }
}

TEST(KMeans, SinglePoint) {
  auto cb = Codebook::fit(std::vector<Vector>{{5}}, 1, 3);
  EXPECT_EQ(cb.decode(0), (Vector{5}));
}

TEST(KMeans, HundredDistinctTwentyClusters) {
  Rng rng(9);
  std::vector<Vector> data;
  for (int i = 0; i < 100; ++i) data.push_back({uniform01(rng) * 100, uniform01(rng) * 100});
  auto cb = Codebook::fit(data, 20, 1);
  EXPECT_EQ(cb.size(), 20u);
  for (const auto& v : data) EXPECT_LT(cb.encode(v), 20u);
}

TEST(KMeans, ObjectiveNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<Vector> data;
    const int n = 40 + static_cast<int>(uniform_index(rng, 200));
    for (int i = 0; i < n; ++i) data.push_back({uniform01(rng), uniform01(rng), std::floor(uniform01(rng) * 5)});
    auto res = kmeans(data, 2 + uniform_index(rng, 10), seed);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      EXPECT_LE(res.objective_trace[i], res.objective_trace[i - 1] + 1e-9) << "seed " << seed;
    EXPECT_NEAR(res.objective_trace.back(), objective(data, res.centroids), 1e-9);
  }
}

TEST(KMeans, Deterministic) {
  auto data = two_blobs();
  data.push_back({3, 4});
  EXPECT_EQ(Codebook::fit(data, 3, 5), Codebook::fit(data, 3, 5));
}

TEST(KMeans, Errors) {
  EXPECT_THROW(kmeans(std::vector<Vector>{}, 1, 0), ConfigError);
  EXPECT_THROW(kmeans(std::vector<Vector>{{1}, {1}}, 2, 0), ConfigError);
  EXPECT_THROW(kmeans(std::vector<Vector>{{1}, {1, 2}}, 1, 0), DimensionError);
}

TEST(Codebook, EncodeNearest) {
  Codebook cb({{0, 0}, {10, 10}}, U'A');
  EXPECT_EQ(cb.encode(Vector{1, 1}), 0u);
  EXPECT_EQ(cb.encode(Vector{10, 10}), 1u);
  EXPECT_EQ(cb.encode(Vector{5, 5}), 0u);
}

TEST(Codebook, ExactCentroid) {
  std::vector<Vector> c;
  for (int i = 0; i < 10; ++i) c.push_back({double(i)});
  Codebook cb(c, U'A');
  EXPECT_EQ(cb.encode(Vector{7}), 7u);
  EXPECT_EQ(cb.decode(cb.encode(c[3])), c[3]);
  EXPECT_THROW(cb.decode(10), std::out_of_range);
}

TEST(Codebook, Letters) {
  Codebook upper({{0}}, U'A');
  EXPECT_EQ(upper.letter_of(0), U'A');
  Codebook lower({{0}, {1}, {2}}, U'a');
  EXPECT_EQ(lower.letter_of(2), U'c');
  EXPECT_EQ(lower.symbol_of(U'b'), 1u);
  std::vector<Vector> c;
  for (int i = 0; i < 30; ++i) c.push_back({double(i)});
  Codebook wide(c, U'A');
  EXPECT_EQ(wide.letter_of(27), static_cast<Letter>(U'A' + 27));
  EXPECT_GT(wide.letter_of(27), U'Z');
}

TEST(Codebook, SaveLoadRoundTrip) {
  auto cb = Codebook::fit(two_blobs(), 2, 4, U'a');
  ByteWriter w;
  cb.save(w);
  const auto bytes = w.take();
  ByteReader r(bytes);
  EXPECT_EQ(Codebook::load(r), cb);
}
