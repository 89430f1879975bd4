#pragma once

#include "mars/types.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace mars {

struct Trade {
  Ticks price{0};
  Volume volume{0};
  Side aggressor{Side::Buy};
  OrderId maker{0};
  OrderId taker{0};
  std::uint64_t sequence{0};

  friend bool operator==(const Trade&, const Trade&) = default;
};

enum class RejectReason : std::uint8_t { None, NonPositiveVolume, NonPositivePrice, WrongKind };
enum class MatchWarning : std::uint8_t { NothingToCancel, PartialCancel };

struct MatchResult {
  std::vector<Trade> trades;
  bool accepted{true};
  RejectReason reject{RejectReason::None};
  Volume resting{0};   // remainder left on the book by a limit order
  Volume cancelled{0}; // volume removed by a cancel
  std::vector<MatchWarning> warnings;

  Volume traded_volume() const noexcept;
  bool has_warning(MatchWarning w) const noexcept;
};

struct BookLevel {
  Ticks price{0};
  Volume volume{0};
  friend bool operator==(const BookLevel&, const BookLevel&) = default;
};

inline constexpr std::size_t kSnapshotDepth = 10;

/// Ten-level summary of the book. Absent levels are not populated; only the
/// first `ask_count` / `bid_count` entries are meaningful.
struct LobSnapshot {
  std::array<BookLevel, kSnapshotDepth> asks{};
  std::array<BookLevel, kSnapshotDepth> bids{};
  std::size_t ask_count{0};
  std::size_t bid_count{0};

  std::optional<Ticks> best_ask() const noexcept;
  std::optional<Ticks> best_bid() const noexcept;
  std::optional<Ticks> spread() const noexcept;
  /// a1 + b1, only when both sides are populated.
  std::optional<Ticks> twice_mid() const noexcept;
  Volume ask_volume() const noexcept;
  Volume bid_volume() const noexcept;
  /// (bidVol - askVol) / (bidVol + askVol) over the populated levels, 0 when empty.
  double imbalance() const noexcept;

  friend bool operator==(const LobSnapshot&, const LobSnapshot&) = default;
};

/// Twice the mid-price: a1 + b1 on a two-sided book, else twice the last trade,
/// else twice the reference. Throws when none is available.
Ticks twice_mid(const LobSnapshot& snapshot, std::optional<Ticks> last_trade,
                std::optional<Ticks> reference = std::nullopt);

/// Matching-rule configuration. The default is a continuous double auction
/// with price-time priority.
struct MatchingRules {
  bool allow_partial_cancel{true};
  // When nonzero, cancels without a target skip resting orders whose id is at
  // or above this value (agent orders can only be cancelled by their owner).
  OrderId protected_from{0};
};

struct RestingOrder {
  OrderId id{0};
  Volume remaining{0};
  std::uint64_t arrival{0};
};

struct PriceLevel {
  std::deque<RestingOrder> queue;
  Volume total{0};
};

/// Continuous double auction limit order book with price-time priority.
/// Single-threaded; move it between threads, never share it mutably.
class LimitOrderBook {
public:
  using BidLevels = std::map<Ticks, PriceLevel, std::greater<>>;
  using AskLevels = std::map<Ticks, PriceLevel, std::less<>>;

  LimitOrderBook() = default;
  explicit LimitOrderBook(MatchingRules rules) : rules_(rules) {}

  /// Dispatches on order.kind.
  MatchResult submit(const Order& order);
  MatchResult submit_limit(const Order& order);
  MatchResult submit_cancel(const Order& order);

  LobSnapshot snapshot() const noexcept;

  std::optional<Ticks> best_bid() const noexcept;
  std::optional<Ticks> best_ask() const noexcept;
  std::optional<Ticks> last_trade_price() const noexcept { return last_trade_; }
  Volume volume_at(Ticks price) const noexcept;
  std::optional<Side> side_at(Ticks price) const noexcept;

  const BidLevels& bids() const noexcept { return bids_; }
  const AskLevels& asks() const noexcept { return asks_; }
  bool empty() const noexcept { return bids_.empty() && asks_.empty(); }

  std::uint64_t event_count() const noexcept { return events_; }
  std::uint64_t trade_count() const noexcept { return trades_; }
  const MatchingRules& rules() const noexcept { return rules_; }

  /// FNV-1a digest of the resting state (levels, queue order, remaining volume).
  std::uint64_t hash() const noexcept;

private:
  template <typename Levels>
  void match_against(Levels& opposite, Order& incoming, Side aggressor, MatchResult& out);
  template <typename Levels>
  void cancel_in(Levels& levels, typename Levels::iterator it, const Order& order, MatchResult& out);

  BidLevels bids_;
  AskLevels asks_;
  MatchingRules rules_{};
  std::optional<Ticks> last_trade_;
  std::uint64_t events_{0};
  std::uint64_t trades_{0};
  std::uint64_t arrivals_{0};
};

} // namespace mars
