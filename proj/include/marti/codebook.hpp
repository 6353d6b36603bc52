#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "marti/bytes.hpp"
#include "marti/common.hpp"

namespace marti {

using SymbolId = std::uint32_t;

inline constexpr int kMaxKMeansIterations = 100;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

/// Number of bitwise-distinct vectors in a dataset.
inline std::size_t count_distinct(std::span<const Vector> data) {
  std::set<std::vector<std::uint64_t>> seen;
  for (const auto& v : data) {
    std::vector<std::uint64_t> key(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) key[i] = std::bit_cast<std::uint64_t>(v[i]);
    seen.insert(std::move(key));
  }
  return seen.size();
}

struct KMeansResult {
  std::vector<Vector> centroids;
  std::vector<SymbolId> assignment;
  // Objective after every assignment pass, in order.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline SymbolId nearest(const std::vector<Vector>& centroids, std::span<const double> v,
                        double* best_dist = nullptr) {
  SymbolId best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (SymbolId k = 0; k < centroids.size(); ++k) {
    const double d = squared_distance(centroids[k], v);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

inline std::vector<Vector> kmeanspp_init(std::span<const Vector> data, std::size_t k, Rng& rng) {
  std::vector<Vector> centroids;
  centroids.reserve(k);
  centroids.push_back(data[uniform_index(rng, data.size())]);
  std::vector<double> d2(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) d2[i] = squared_distance(data[i], centroids[0]);

  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = data.size() - 1;
      for (std::size_t i = 0; i < data.size(); ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      // Rounding can leave `pick` on an already-chosen point; walk back to one that is not.
      while (d2[pick] == 0.0 && pick > 0) --pick;
    }
    centroids.push_back(data[pick]);
    for (std::size_t i = 0; i < data.size(); ++i)
      d2[i] = std::min(d2[i], squared_distance(data[i], centroids.back()));
  }
  return centroids;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Stops when no assignment changes or
/// after kMaxKMeansIterations passes. An emptied cluster is moved onto the
/// point farthest from its current centroid.
inline KMeansResult kmeans(std::span<const Vector> data, std::size_t k, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("k-means: empty dataset");
  if (k == 0) throw ConfigError("k-means: K must be positive");
  const std::size_t dim = data.front().size();
  for (const auto& v : data)
    if (v.size() != dim) throw DimensionError("k-means: inconsistent vector dimensions");
  if (k > count_distinct(data))
    throw ConfigError("k-means: K=" + std::to_string(k) + " exceeds the number of distinct vectors");

  Rng rng(seed);
  KMeansResult res;
  res.centroids = detail::kmeanspp_init(data, k, rng);
  res.assignment.assign(data.size(), std::numeric_limits<SymbolId>::max());
  std::vector<double> dist(data.size());

  for (int iter = 0; iter < kMaxKMeansIterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const SymbolId s = detail::nearest(res.centroids, data[i], &dist[i]);
      if (s != res.assignment[i]) {
        res.assignment[i] = s;
        changed = true;
      }
      objective += dist[i];
    }
    res.objective_trace.push_back(objective);
    res.iterations = iter + 1;
    if (!changed) {
      res.converged = true;
      break;
    }

    std::vector<Vector> sums(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += data[i][j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < data.size(); ++i)
          if (dist[i] > dist[far]) far = i;
        res.centroids[c] = data[far];
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j)
        res.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return res;
}

/// Vector quantizer mapping real vectors to symbols 0..K-1 and each symbol to a
/// letter at `letter_base + id`. Immutable after fit.
class Codebook {
 public:
  Codebook() = default;

  Codebook(std::vector<Vector> centroids, Letter letter_base, std::uint64_t seed = 0)
      : centroids_(std::move(centroids)), letter_base_(letter_base), seed_(seed) {
    if (centroids_.empty()) throw ConfigError("codebook: needs at least one centroid");
    dim_ = centroids_.front().size();
    for (const auto& c : centroids_)
      if (c.size() != dim_) throw DimensionError("codebook: centroid dimensions differ");
  }

  static Codebook fit(std::span<const Vector> data, std::size_t k, std::uint64_t seed,
                      Letter letter_base = U'A') {
    auto res = kmeans(data, k, seed);
    // Lexicographic centroid order makes letters follow the input ordering.
    std::sort(res.centroids.begin(), res.centroids.end());
    return Codebook(std::move(res.centroids), letter_base, seed);
  }

  SymbolId encode(std::span<const double> v) const {
    if (v.size() != dim_)
      throw DimensionError("codebook: expected dimension " + std::to_string(dim_) + ", got " +
                           std::to_string(v.size()));
    return detail::nearest(centroids_, v);
  }

  const Vector& decode(SymbolId s) const {
    if (s >= centroids_.size()) throw std::out_of_range("codebook: symbol out of range");
    return centroids_[s];
  }

  Letter letter_of(SymbolId s) const {
    if (s >= centroids_.size()) throw std::out_of_range("codebook: symbol out of range");
    return static_cast<Letter>(letter_base_ + s);
  }

  SymbolId symbol_of(Letter letter) const {
    if (letter < letter_base_ || letter - letter_base_ >= centroids_.size())
      throw std::out_of_range("codebook: unknown letter U+" + std::to_string(letter));
    return static_cast<SymbolId>(letter - letter_base_);
  }

  Letter encode_letter(std::span<const double> v) const { return letter_of(encode(v)); }

  std::size_t size() const { return centroids_.size(); }
  std::size_t dim() const { return dim_; }
  Letter letter_base() const { return letter_base_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Vector>& centroids() const { return centroids_; }

  std::vector<Letter> alphabet() const {
    std::vector<Letter> out;
    for (SymbolId s = 0; s < size(); ++s) out.push_back(letter_of(s));
    return out;
  }

  void save(ByteWriter& w) const {
    w.u64(centroids_.size());
    w.u64(dim_);
    w.u32(static_cast<std::uint32_t>(letter_base_));
    w.u64(seed_);
    for (const auto& c : centroids_)
      for (double x : c) w.f64(x);
  }

  static Codebook load(ByteReader& r) {
    const auto k = r.length(0);
    const auto dim = r.length(0);
    const auto base = static_cast<Letter>(r.u32());
    const auto seed = r.u64();
    if (k == 0 || (dim != 0 && k > r.remaining() / (8 * dim)))
      throw SnapshotError("corrupt snapshot: bad codebook shape");
    std::vector<Vector> cs(k, Vector(dim));
    for (auto& c : cs)
      for (auto& x : c) x = r.f64();
    return Codebook(std::move(cs), base, seed);
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::vector<Vector> centroids_;
  std::size_t dim_ = 0;
  Letter letter_base_ = U'A';
  std::uint64_t seed_ = 0;
};

}  // namespace marti
