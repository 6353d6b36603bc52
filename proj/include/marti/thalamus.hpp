#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "marti/bytes.hpp"
#include "marti/codebook.hpp"
#include "marti/common.hpp"

namespace marti {

/// Fixed random sampling of sensor coordinates into p subsets of m indices.
struct SamplingPlan {
  std::vector<std::vector<std::size_t>> subsets;
  std::uint64_t seed = 0;

  static SamplingPlan draw(std::size_t sensor_dim, std::size_t p, std::size_t m,
                           std::uint64_t seed, bool disjoint = false) {
    if (m == 0) throw ConfigError("sampling plan: subset size m must be >= 1");
    if (m > sensor_dim)
      throw ConfigError("sampling plan: subset size m=" + std::to_string(m) +
                        " exceeds sensor dimension " + std::to_string(sensor_dim));
    if (disjoint && p * m > sensor_dim)
      throw ConfigError("sampling plan: disjoint subsets need p*m <= sensor dimension");
    Rng rng(seed);
    SamplingPlan plan;
    plan.seed = seed;
    std::vector<std::size_t> pool(sensor_dim);
    std::iota(pool.begin(), pool.end(), 0);
    if (disjoint) shuffle_prefix(pool, p * m, rng);
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<std::size_t> subset;
      if (disjoint) {
        subset.assign(pool.begin() + i * m, pool.begin() + (i + 1) * m);
      } else {
        std::iota(pool.begin(), pool.end(), 0);
        shuffle_prefix(pool, m, rng);
        subset.assign(pool.begin(), pool.begin() + m);
      }
      std::sort(subset.begin(), subset.end());
      plan.subsets.push_back(std::move(subset));
    }
    return plan;
  }

  /// "subset_i: [indices]" per line.
  std::string describe() const {
    std::string out;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      out += "subset_" + std::to_string(i) + ": [";
      for (std::size_t j = 0; j < subsets[i].size(); ++j) {
        if (j) out += ", ";
        out += std::to_string(subsets[i][j]);
      }
      out += "]\n";
    }
    return out;
  }

  void save(ByteWriter& w) const {
    w.u64(seed);
    w.u64(subsets.size());
    for (const auto& s : subsets) {
      w.u64(s.size());
      for (auto i : s) w.u64(i);
    }
  }

  static SamplingPlan load(ByteReader& r) {
    SamplingPlan plan;
    plan.seed = r.u64();
    const auto n = r.length(8);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::vector<std::size_t> s(r.length(8));
      for (auto& x : s) x = r.u64();
      plan.subsets.push_back(std::move(s));
    }
    return plan;
  }

  friend bool operator==(const SamplingPlan&, const SamplingPlan&) = default;

 private:
  static void shuffle_prefix(std::vector<std::size_t>& v, std::size_t n, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + uniform_index(rng, v.size() - i);
      std::swap(v[i], v[j]);
    }
  }
};

/// Actuator coder ("Coder A"): quantizes actuator vectors into lowercase
/// action letters. Never has a parser.
class ActionCoder {
 public:
  ActionCoder() = default;
  ActionCoder(std::size_t actuator_dim, std::size_t clusters, std::uint64_t seed)
      : dim_(actuator_dim), clusters_(clusters), seed_(seed) {
    if (clusters_ == 0) throw ConfigError("action coder: K_action must be >= 1");
  }

  /// Records the actuator vector while bootstrapping and fits once a parser
  /// exists somewhere and enough distinct actions were seen. Returns the
  /// action letter once fitted.
  std::optional<Letter> observe(std::span<const double> actuator, bool any_parser,
                                bool learning = true) {
    if (actuator.size() != dim_)
      throw DimensionError("action coder: expected actuator dimension " + std::to_string(dim_));
    if (!codebook_ && learning) {
      Vector v(actuator.begin(), actuator.end());
      if (std::find(bootstrap_.begin(), bootstrap_.end(), v) == bootstrap_.end())
        bootstrap_.push_back(std::move(v));
      if (any_parser && bootstrap_.size() >= clusters_) {
        codebook_ = Codebook::fit(bootstrap_, clusters_, seed_, U'a');
        bootstrap_.clear();
      }
    }
    if (!codebook_) return std::nullopt;
    return codebook_->encode_letter(actuator);
  }

  const Vector& decode(Letter letter) const { return codebook_->decode(codebook_->symbol_of(letter)); }

  bool ready() const { return codebook_.has_value(); }
  const std::optional<Codebook>& codebook() const { return codebook_; }
  std::vector<Letter> letters() const { return codebook_ ? codebook_->alphabet() : std::vector<Letter>{}; }
  std::size_t dim() const { return dim_; }
  std::size_t clusters() const { return clusters_; }

  void save(ByteWriter& w) const {
    w.u64(dim_);
    w.u64(clusters_);
    w.u64(seed_);
    w.u64(bootstrap_.size());
    for (const auto& v : bootstrap_) w.vec(v);
    w.boolean(codebook_.has_value());
    if (codebook_) codebook_->save(w);
  }

  static ActionCoder load(ByteReader& r) {
    ActionCoder a;
    a.dim_ = r.u64();
    a.clusters_ = r.u64();
    a.seed_ = r.u64();
    const auto n = r.length(8);
    for (std::uint64_t i = 0; i < n; ++i) a.bootstrap_.push_back(r.vec());
    if (r.boolean()) a.codebook_ = Codebook::load(r);
    return a;
  }

 private:
  std::size_t dim_ = 0;
  std::size_t clusters_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Vector> bootstrap_;
  std::optional<Codebook> codebook_;
};

/// Routing hub between the environment and the hypercolumns.
class Thalamus {
 public:
  Thalamus() = default;

  static Thalamus init(std::size_t sensor_dim, std::size_t actuator_dim, std::size_t p,
                       std::size_t m, std::uint64_t seed, std::size_t action_clusters,
                       bool disjoint = false) {
    if (p < 3) throw ConfigError("thalamus: p must be >= 3 to form a layer-2 triple");
    if (actuator_dim == 0) throw ConfigError("thalamus: actuator dimension must be >= 1");
    Thalamus t;
    t.sensor_dim_ = sensor_dim;
    t.plan_ = SamplingPlan::draw(sensor_dim, p, m, seed, disjoint);
    t.action_coder_ = ActionCoder(actuator_dim, action_clusters, mix_seed(seed, 0xAC7));
    return t;
  }

  std::vector<Vector> route(std::span<const double> sensor) const {
    if (sensor.size() != sensor_dim_)
      throw DimensionError("thalamus: expected sensor dimension " + std::to_string(sensor_dim_) +
                           ", got " + std::to_string(sensor.size()));
    std::vector<Vector> out;
    out.reserve(plan_.subsets.size());
    for (const auto& subset : plan_.subsets) {
      Vector v;
      v.reserve(subset.size());
      for (auto i : subset) v.push_back(sensor[i]);
      out.push_back(std::move(v));
    }
    return out;
  }

  std::optional<Letter> action_letter(std::span<const double> actuator, bool any_parser,
                                      bool learning = true) {
    return action_coder_.observe(actuator, any_parser, learning);
  }

  /// action letter followed by the three substrate letters, or nothing if any
  /// of them is missing.
  static std::optional<Label> compose(std::optional<Letter> action,
                                      const std::array<std::optional<Letter>, 3>& substrate) {
    if (!action) return std::nullopt;
    Label out(1, *action);
    for (const auto& l : substrate) {
      if (!l) return std::nullopt;
      out.push_back(*l);
    }
    return out;
  }

  const SamplingPlan& plan() const { return plan_; }
  const ActionCoder& action_coder() const { return action_coder_; }
  std::size_t sensor_dim() const { return sensor_dim_; }
  std::size_t actuator_dim() const { return action_coder_.dim(); }

  void save(ByteWriter& w) const {
    w.u64(sensor_dim_);
    plan_.save(w);
    action_coder_.save(w);
  }

  static Thalamus load(ByteReader& r) {
    Thalamus t;
    t.sensor_dim_ = r.u64();
    t.plan_ = SamplingPlan::load(r);
    t.action_coder_ = ActionCoder::load(r);
    for (const auto& s : t.plan_.subsets)
      for (auto i : s)
        if (i >= t.sensor_dim_) throw SnapshotError("corrupt snapshot: sampling index out of range");
    return t;
  }

 private:
  std::size_t sensor_dim_ = 0;
  SamplingPlan plan_;
  ActionCoder action_coder_;
};

}  // namespace marti
