#pragma once

#include "mars/order_book.hpp"
#include "mars/random.hpp"
#include "mars/token_codec.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

namespace mars {

/// Coarse book state used as conditioning context: spread bucket (0 = one-sided,
/// then 1, 2, 3-4, 5+ ticks), imbalance quintile, and the sign of the mid move
/// since the current minute opened.
struct LobState {
  std::uint8_t spread_bucket{0};
  std::uint8_t imbalance_bucket{2};
  std::uint8_t trend{1}; // 0 down, 1 flat, 2 up

  static constexpr int kCount = 5 * 5 * 3;
  constexpr int code() const noexcept { return (spread_bucket * 5 + imbalance_bucket) * 3 + trend; }
  static LobState from(const LobSnapshot& snapshot, int trend_sign) noexcept;

  friend bool operator==(const LobState&, const LobState&) = default;
};

/// Tracks the minute-open mid so trend signs are computed identically when
/// tokenizing a corpus and when generating inside a session.
class LobStateTracker {
public:
  explicit LobStateTracker(Ticks reference) : reference_(reference) {}
  /// State of `book` just before an event at `clock`.
  LobState observe(TimeMs clock, const LimitOrderBook& book);
  /// Integer mid (floor of a1+b1 over 2, with last-trade/reference fallback).
  Ticks mid(const LimitOrderBook& book) const;

private:
  Ticks reference_;
  std::int64_t minute_{-1};
  Ticks minute_open_twice_mid_{0};
};

struct ContextualToken {
  OrderToken token;
  LobState state;
  friend bool operator==(const ContextualToken&, const ContextualToken&) = default;
};

/// Replays orders through a fresh book and emits each order's token together
/// with the book state it arrived into.
std::vector<ContextualToken> tokenize(std::span<const Order> orders, const CodecConfig& cfg, Ticks reference);

struct TokenContext {
  std::vector<OrderToken> recent; // oldest first; only the last `depth` are used
  LobState state;
};

/// Backoff n-gram over order tokens. Levels: add-alpha unigram, then
/// state-only, then state plus the last 1..k tokens. Each level subtracts an
/// absolute discount D from its seen counts and hands that mass, D*u/n
/// (u = distinct continuations), to the level below. D is estimated per
/// level from count-of-counts as n1/(n1+2*n2), clamped to [0.05, 0.95].
/// Each level's discounted estimate is then mixed with the level below using
/// a weight w in [0,1] chosen by deleted interpolation: likelihood of each
/// block of the corpus under counts from the other blocks.
class CountModel {
public:
  static CountModel fit(std::span<const std::vector<ContextualToken>> corpus, int depth = 3, double alpha = 0.1);

  int depth() const noexcept { return depth_; }
  double alpha() const noexcept { return alpha_; }
  /// Index 0 is the state-only level, then one per context length.
  const std::vector<double>& discounts() const noexcept { return discounts_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::uint64_t total() const noexcept { return unigram_total_; }

  double probability(const TokenContext& ctx, OrderToken token) const;
  /// Full conditional distribution over the 49152 tokens.
  std::vector<double> distribution(const TokenContext& ctx) const;
  /// Exact draw from distribution(ctx) via the mixture decomposition.
  OrderToken sample(const TokenContext& ctx, Rng& rng) const;
  /// Mean log-probability per token of a held-out sequence.
  double mean_log_likelihood(std::span<const ContextualToken> sequence) const;

  /// Binary "MARSCM1" triples file plus `<path>.json` manifest.
  void save(const std::filesystem::path& path) const;
  static CountModel load(const std::filesystem::path& path);

  friend bool operator==(const CountModel&, const CountModel&);

private:
  struct Entry {
    std::uint64_t total{0};
    std::vector<std::uint32_t> tokens;     // sorted
    std::vector<std::uint64_t> cumulative; // running counts aligned with tokens
    std::uint64_t count(std::uint32_t token) const noexcept;
    std::uint32_t draw(Rng& rng) const noexcept;
    void add(std::uint32_t token, std::uint64_t n);
  };

  std::vector<const Entry*> chain(const TokenContext& ctx) const;
  double unigram_probability(std::uint32_t t) const noexcept;
  double interpolate(const Entry& e, std::size_t level, std::uint32_t t, double lower) const noexcept;
  void tune_weights(std::span<const std::vector<ContextualToken>> corpus);
  static std::uint64_t context_key(int level, int state, std::span<const OrderToken> tokens) noexcept;

  int depth_{3};
  double alpha_{0.1};
  std::vector<double> discounts_;
  std::vector<double> weights_;
  Entry unigram_;
  std::uint64_t unigram_total_{0};
  std::unordered_map<std::uint64_t, Entry> contexts_;
};

} // namespace mars
