#include "mars/order_book.hpp"

#include <algorithm>

namespace mars {

Volume MatchResult::traded_volume() const noexcept {
  Volume v = 0;
  for (const auto& t : trades) v += t.volume;
  return v;
}

bool MatchResult::has_warning(MatchWarning w) const noexcept {
  return std::find(warnings.begin(), warnings.end(), w) != warnings.end();
}

std::optional<Ticks> LobSnapshot::best_ask() const noexcept {
  if (ask_count == 0) return std::nullopt;
  return asks[0].price;
}

std::optional<Ticks> LobSnapshot::best_bid() const noexcept {
  if (bid_count == 0) return std::nullopt;
  return bids[0].price;
}

std::optional<Ticks> LobSnapshot::spread() const noexcept {
  if (ask_count == 0 || bid_count == 0) return std::nullopt;
  return asks[0].price - bids[0].price;
}

std::optional<Ticks> LobSnapshot::twice_mid() const noexcept {
  if (ask_count == 0 || bid_count == 0) return std::nullopt;
  return asks[0].price + bids[0].price;
}

Volume LobSnapshot::ask_volume() const noexcept {
  Volume v = 0;
  for (std::size_t i = 0; i < ask_count; ++i) v += asks[i].volume;
  return v;
}

Volume LobSnapshot::bid_volume() const noexcept {
  Volume v = 0;
  for (std::size_t i = 0; i < bid_count; ++i) v += bids[i].volume;
  return v;
}

double LobSnapshot::imbalance() const noexcept {
  const auto a = ask_volume();
  const auto b = bid_volume();
  if (a + b == 0) return 0.0;
  return static_cast<double>(b - a) / static_cast<double>(a + b);
}

Ticks twice_mid(const LobSnapshot& snapshot, std::optional<Ticks> last_trade,
                std::optional<Ticks> reference) {
  if (auto m = snapshot.twice_mid()) return *m;
  if (last_trade) return 2 * *last_trade;
  if (reference) return 2 * *reference;
  throw Error("mid-price undefined: empty book, no trades and no opening reference price");
}

MatchResult LimitOrderBook::submit(const Order& order) {
  return order.kind == OrderKind::Cancel ? submit_cancel(order) : submit_limit(order);
}

template <typename Levels>
void LimitOrderBook::match_against(Levels& opposite, Order& incoming, Side aggressor, MatchResult& out) {
  const bool buying = aggressor == Side::Buy;
  while (incoming.volume > 0 && !opposite.empty()) {
    auto it = opposite.begin();
    const Ticks level_price = it->first;
    if (buying ? level_price > incoming.price : level_price < incoming.price) break;
    auto& level = it->second;
    while (incoming.volume > 0 && !level.queue.empty()) {
      auto& maker = level.queue.front();
      const Volume q = std::min(maker.remaining, incoming.volume);
      out.trades.push_back(Trade{level_price, q, aggressor, maker.id, incoming.id, ++trades_});
      maker.remaining -= q;
      level.total -= q;
      incoming.volume -= q;
      if (maker.remaining == 0) level.queue.pop_front();
    }
    last_trade_ = level_price;
    if (level.queue.empty()) opposite.erase(it);
  }
}

MatchResult LimitOrderBook::submit_limit(const Order& order) {
  MatchResult out;
  ++events_;
  if (order.kind == OrderKind::Cancel) {
    out.accepted = false;
    out.reject = RejectReason::WrongKind;
    return out;
  }
  if (order.volume <= 0) {
    out.accepted = false;
    out.reject = RejectReason::NonPositiveVolume;
    return out;
  }
  if (order.price <= 0) {
    out.accepted = false;
    out.reject = RejectReason::NonPositivePrice;
    return out;
  }

  Order incoming = order;
  if (order.kind == OrderKind::Bid) {
    match_against(asks_, incoming, Side::Buy, out);
    if (incoming.volume > 0) {
      auto& level = bids_[incoming.price];
      level.queue.push_back(RestingOrder{incoming.id, incoming.volume, ++arrivals_});
      level.total += incoming.volume;
    }
  } else {
    match_against(bids_, incoming, Side::Sell, out);
    if (incoming.volume > 0) {
      auto& level = asks_[incoming.price];
      level.queue.push_back(RestingOrder{incoming.id, incoming.volume, ++arrivals_});
      level.total += incoming.volume;
    }
  }
  out.resting = incoming.volume;
  return out;
}

template <typename Levels>
void LimitOrderBook::cancel_in(Levels& levels, typename Levels::iterator it, const Order& order,
                               MatchResult& out) {
  auto& level = it->second;
  Volume wanted = order.volume;

  if (order.target != 0) {
    auto pos = std::find_if(level.queue.begin(), level.queue.end(),
                            [&](const RestingOrder& r) { return r.id == order.target; });
    if (pos == level.queue.end()) {
      out.warnings.push_back(MatchWarning::NothingToCancel);
      return;
    }
    const Volume q = std::min(wanted, pos->remaining);
    if (q < wanted) out.warnings.push_back(MatchWarning::PartialCancel);
    pos->remaining -= q;
    level.total -= q;
    out.cancelled = q;
    if (pos->remaining == 0) level.queue.erase(pos);
  } else if (rules_.protected_from != 0) {
    Volume available = 0;
    for (const auto& r : level.queue)
      if (r.id < rules_.protected_from) available += r.remaining;
    if (available < wanted) {
      out.warnings.push_back(MatchWarning::PartialCancel);
      if (!rules_.allow_partial_cancel) return;
    }
    for (auto pos = level.queue.begin(); wanted > 0 && pos != level.queue.end();) {
      if (pos->id >= rules_.protected_from) {
        ++pos;
        continue;
      }
      const Volume q = std::min(wanted, pos->remaining);
      pos->remaining -= q;
      level.total -= q;
      wanted -= q;
      out.cancelled += q;
      pos = pos->remaining == 0 ? level.queue.erase(pos) : pos + 1;
    }
  } else {
    if (level.total < wanted) {
      out.warnings.push_back(MatchWarning::PartialCancel);
      if (!rules_.allow_partial_cancel) return;
    }
    while (wanted > 0 && !level.queue.empty()) {
      auto& front = level.queue.front();
      const Volume q = std::min(wanted, front.remaining);
      front.remaining -= q;
      level.total -= q;
      wanted -= q;
      out.cancelled += q;
      if (front.remaining == 0) level.queue.pop_front();
    }
  }
  if (level.queue.empty()) levels.erase(it);
}

MatchResult LimitOrderBook::submit_cancel(const Order& order) {
  MatchResult out;
  ++events_;
  if (order.kind != OrderKind::Cancel) {
    out.accepted = false;
    out.reject = RejectReason::WrongKind;
    return out;
  }
  if (order.volume <= 0) {
    out.accepted = false;
    out.reject = RejectReason::NonPositiveVolume;
    return out;
  }
  if (order.price <= 0) {
    out.accepted = false;
    out.reject = RejectReason::NonPositivePrice;
    return out;
  }
  // An uncrossed book holds a given price on at most one side.
  if (auto it = bids_.find(order.price); it != bids_.end()) {
    cancel_in(bids_, it, order, out);
  } else if (auto jt = asks_.find(order.price); jt != asks_.end()) {
    cancel_in(asks_, jt, order, out);
  } else {
    out.warnings.push_back(MatchWarning::NothingToCancel);
  }
  return out;
}

LobSnapshot LimitOrderBook::snapshot() const noexcept {
  LobSnapshot s;
  for (auto it = asks_.begin(); it != asks_.end() && s.ask_count < kSnapshotDepth; ++it)
    s.asks[s.ask_count++] = BookLevel{it->first, it->second.total};
  for (auto it = bids_.begin(); it != bids_.end() && s.bid_count < kSnapshotDepth; ++it)
    s.bids[s.bid_count++] = BookLevel{it->first, it->second.total};
  return s;
}

std::optional<Ticks> LimitOrderBook::best_bid() const noexcept {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<Ticks> LimitOrderBook::best_ask() const noexcept {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

Volume LimitOrderBook::volume_at(Ticks price) const noexcept {
  if (auto it = bids_.find(price); it != bids_.end()) return it->second.total;
  if (auto it = asks_.find(price); it != asks_.end()) return it->second.total;
  return 0;
}

std::optional<Side> LimitOrderBook::side_at(Ticks price) const noexcept {
  if (bids_.contains(price)) return Side::Buy;
  if (asks_.contains(price)) return Side::Sell;
  return std::nullopt;
}

namespace {

struct Fnv1a {
  std::uint64_t h{0xcbf29ce484222325ULL};
  void add(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
};

} // namespace

std::uint64_t LimitOrderBook::hash() const noexcept {
  Fnv1a f;
  auto add_side = [&f](const auto& levels, std::uint64_t tag) {
    f.add(tag);
    for (const auto& [price, level] : levels) {
      f.add(static_cast<std::uint64_t>(price));
      for (const auto& r : level.queue) {
        f.add(r.id);
        f.add(static_cast<std::uint64_t>(r.remaining));
      }
    }
  };
  add_side(asks_, 1);
  add_side(bids_, 2);
  f.add(last_trade_ ? static_cast<std::uint64_t>(*last_trade_) : ~0ULL);
  return f.h;
}

} // namespace mars
