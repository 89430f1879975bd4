#include "mars/order_book.hpp"
#include "mars/order_log.hpp"
#include "support/reference_matcher.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace mars;

namespace {

Order limit(OrderKind kind, Ticks price, Volume vol, OrderId id) {
  Order o;
  o.kind = kind;
  o.price = price;
  o.volume = vol;
  o.id = id;
  return o;
}

Order cancel(Ticks price, Volume vol, OrderId id, OrderId target = 0) {
  Order o = limit(OrderKind::Cancel, price, vol, id);
  o.target = target;
  return o;
}

bool uncrossed(const LimitOrderBook& b) {
  const auto a = b.best_ask(), d = b.best_bid();
  return !a || !d || *d < *a;
}

} // namespace

TEST_SUITE("market-core") {

TEST_CASE("limit into empty book rests") {
  LimitOrderBook book;
  const auto r = book.submit(limit(OrderKind::Bid, 1000, 100, 1));
  CHECK(r.accepted);
  CHECK(r.trades.empty());
  CHECK(r.resting == 100);
  const auto s = book.snapshot();
  REQUIRE(s.bid_count == 1);
  CHECK(s.bids[0] == BookLevel{1000, 100});
  CHECK(s.ask_count == 0);
}

TEST_CASE("bid crosses one ask level and rests the remainder") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Ask, 1002, 50, 1));
  const auto r = book.submit(limit(OrderKind::Bid, 1002, 80, 2));
  REQUIRE(r.trades.size() == 1);
  CHECK(r.trades[0].price == 1002);
  CHECK(r.trades[0].volume == 50);
  CHECK(r.trades[0].maker == 1);
  CHECK(r.trades[0].taker == 2);
  CHECK(r.trades[0].aggressor == Side::Buy);
  CHECK(r.resting == 30);
  CHECK(book.best_bid() == 1002);
  CHECK(book.volume_at(1002) == 30);
  CHECK_FALSE(book.best_ask());
}

TEST_CASE("bid walks two ask levels") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Ask, 1001, 30, 1));
  book.submit(limit(OrderKind::Ask, 1002, 40, 2));
  const auto r = book.submit(limit(OrderKind::Bid, 1002, 100, 3));
  REQUIRE(r.trades.size() == 2);
  CHECK(r.trades[0].price == 1001);
  CHECK(r.trades[0].volume == 30);
  CHECK(r.trades[1].price == 1002);
  CHECK(r.trades[1].volume == 40);
  CHECK(r.resting == 30);
  CHECK(book.best_bid() == 1002);
  CHECK(uncrossed(book));
}

TEST_CASE("FIFO within a level") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Ask, 1000, 10, 1));
  book.submit(limit(OrderKind::Ask, 1000, 10, 2));
  const auto r = book.submit(limit(OrderKind::Bid, 1000, 15, 3));
  REQUIRE(r.trades.size() == 2);
  CHECK(r.trades[0].maker == 1);
  CHECK(r.trades[1].maker == 2);
  CHECK(r.trades[1].volume == 5);
  CHECK(r.trades[0].sequence + 1 == r.trades[1].sequence);
}

TEST_CASE("cancel removes oldest first") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Bid, 1000, 60, 1));
  book.submit(limit(OrderKind::Bid, 1000, 40, 2));
  const auto r = book.submit(cancel(1000, 70, 3));
  CHECK(r.cancelled == 70);
  CHECK(r.warnings.empty());
  CHECK(book.volume_at(1000) == 30);
  REQUIRE(book.bids().at(1000).queue.size() == 1);
  CHECK(book.bids().at(1000).queue.front().id == 2);
}

TEST_CASE("cancel on an empty level is a no-op with a warning") {
  LimitOrderBook book;
  const auto r = book.submit(cancel(999, 50, 1));
  CHECK(r.accepted);
  CHECK(r.cancelled == 0);
  CHECK(r.has_warning(MatchWarning::NothingToCancel));
}

TEST_CASE("oversized cancel removes what rests and warns") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Bid, 1000, 100, 1));
  const auto r = book.submit(cancel(1000, 500, 2));
  CHECK(r.cancelled == 100);
  CHECK(r.has_warning(MatchWarning::PartialCancel));
  CHECK(book.empty());
}

TEST_CASE("strict partial-cancel rule leaves the level intact") {
  LimitOrderBook book(MatchingRules{false, 0});
  book.submit(limit(OrderKind::Ask, 1000, 100, 1));
  const auto r = book.submit(cancel(1000, 500, 2));
  CHECK(r.cancelled == 0);
  CHECK(r.has_warning(MatchWarning::PartialCancel));
  CHECK(book.volume_at(1000) == 100);
}

TEST_CASE("targeted cancel hits only its order") {
  LimitOrderBook book;
  book.submit(limit(OrderKind::Bid, 1000, 60, 1));
  book.submit(limit(OrderKind::Bid, 1000, 40, 2));
  const auto r = book.submit(cancel(1000, 25, 3, 2));
  CHECK(r.cancelled == 25);
  CHECK(book.bids().at(1000).queue[0].remaining == 60);
  CHECK(book.bids().at(1000).queue[1].remaining == 15);
  const auto miss = book.submit(cancel(1000, 5, 4, 99));
  CHECK(miss.has_warning(MatchWarning::NothingToCancel));
}

TEST_CASE("protected orders survive anonymous cancels") {
  MatchingRules rules;
  rules.protected_from = 1000;
  LimitOrderBook book(rules);
  book.submit(limit(OrderKind::Bid, 500, 50, 1000)); // protected
  book.submit(limit(OrderKind::Bid, 500, 30, 5));
  const auto r = book.submit(cancel(500, 60, 6));
  CHECK(r.cancelled == 30);
  CHECK(r.has_warning(MatchWarning::PartialCancel));
  CHECK(book.volume_at(500) == 50);
  const auto own = book.submit(cancel(500, 50, 7, 1000));
  CHECK(own.cancelled == 50);
  CHECK(book.empty());
}

TEST_CASE("validation rejects") {
  LimitOrderBook book;
  CHECK(book.submit(limit(OrderKind::Bid, 1000, 0, 1)).reject == RejectReason::NonPositiveVolume);
  CHECK(book.submit(limit(OrderKind::Ask, 0, 5, 2)).reject == RejectReason::NonPositivePrice);
  CHECK(book.submit(cancel(1000, -1, 3)).reject == RejectReason::NonPositiveVolume);
  CHECK_FALSE(book.submit_limit(cancel(1000, 1, 4)).accepted);
  CHECK(book.empty());
}

TEST_CASE("snapshot and mid fallback chain") {
  LimitOrderBook book;
  CHECK(book.snapshot().ask_count == 0);
  CHECK(book.snapshot().bid_count == 0);
  CHECK_THROWS_AS(twice_mid(book.snapshot(), std::nullopt), Error);
  CHECK(twice_mid(book.snapshot(), std::nullopt, 1000) == 2000);

  book.submit(limit(OrderKind::Bid, 1000, 100, 1));
  CHECK_FALSE(book.snapshot().twice_mid());
  CHECK(twice_mid(book.snapshot(), 1001) == 2002);

  book.submit(limit(OrderKind::Ask, 1002, 100, 2));
  const auto s = book.snapshot();
  CHECK(s.spread() == 2);
  CHECK(twice_mid(s, 5000) == 2002);
  for (int i = 0; i < 15; ++i) book.submit(limit(OrderKind::Ask, 1003 + i, 1, 10 + i));
  const auto deep = book.snapshot();
  CHECK(deep.ask_count == kSnapshotDepth);
  for (std::size_t i = 1; i < deep.ask_count; ++i) CHECK(deep.asks[i].price > deep.asks[i - 1].price);
}

TEST_CASE("imbalance over snapshot levels") {
  LimitOrderBook book;
  CHECK(book.snapshot().imbalance() == 0.0);
  book.submit(limit(OrderKind::Bid, 99, 300, 1));
  book.submit(limit(OrderKind::Ask, 101, 100, 2));
  CHECK(book.snapshot().imbalance() == doctest::Approx(0.5));
}

TEST_CASE("oracle equivalence on random streams") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    testing::StreamGenerator gen(seed);
    testing::ReferenceMatcher oracle;
    LimitOrderBook book;
    for (int i = 0; i < 20000; ++i) {
      const auto o = gen.next();
      const auto want = oracle.submit(o);
      const auto got = book.submit(o);
      REQUIRE(got.trades == want);
      // volume conservation for limits: traded + resting = incoming
      if (o.kind != OrderKind::Cancel) REQUIRE(got.traded_volume() + got.resting == o.volume);
      REQUIRE(uncrossed(book));
    }
    for (const auto& r : oracle.resting()) CHECK(book.volume_at(r.price) == oracle.volume_at(r.price));
  }
}

TEST_CASE("identical streams give identical hashes") {
  testing::StreamGenerator a(7), b(7);
  LimitOrderBook x, y;
  for (int i = 0; i < 5000; ++i) {
    x.submit(a.next());
    y.submit(b.next());
  }
  CHECK(x.hash() == y.hash());
  y.submit(limit(OrderKind::Bid, 1, 1, 999999));
  CHECK(x.hash() != y.hash());
}

TEST_CASE("order log csv and binary round trip") {
  std::vector<LogRecord> recs{{1, 1000, OrderKind::Bid, 10000, 100},
                              {2, 1500, OrderKind::Ask, 10002, 50},
                              {3, 1500, OrderKind::Cancel, 10000, 20}};
  std::stringstream csv;
  write_order_log_csv(csv, recs);
  CHECK(csv.str().rfind("seq,timestamp_ms,kind,price_ticks,volume\n", 0) == 0);
  CHECK(read_order_log_csv(csv) == recs);

  std::stringstream bin;
  write_order_log_binary(bin, recs);
  CHECK(bin.str().size() == recs.size() * kBinaryRecordSize);
  CHECK(read_order_log_binary(bin) == recs);

  const auto orders = to_orders(recs);
  REQUIRE(orders.size() == 3);
  CHECK(orders[0].interval == 0);
  CHECK(orders[1].interval == 500);
  CHECK(orders[2].interval == 0);
  CHECK(orders[2].kind == OrderKind::Cancel);
  CHECK(to_records(orders, 1000) == recs);
}

TEST_CASE("order log rejects malformed input") {
  std::stringstream bad_header("seq,time\n1,2\n");
  CHECK_THROWS_AS(read_order_log_csv(bad_header), Error);
  std::stringstream bad_kind("seq,timestamp_ms,kind,price_ticks,volume\n1,5,X,100,1\n");
  CHECK_THROWS_AS(read_order_log_csv(bad_kind), Error);
  std::stringstream bad_num("seq,timestamp_ms,kind,price_ticks,volume\n1,5,B,abc,1\n");
  CHECK_THROWS_AS(read_order_log_csv(bad_num), Error);
  std::stringstream short_row("seq,timestamp_ms,kind,price_ticks,volume,source\n1,5,B,100,1\n");
  CHECK_THROWS_AS(read_order_log_csv(short_row), Error);
}

TEST_CASE("order log ignores trailing columns") {
  std::stringstream wide("seq,timestamp_ms,kind,price_ticks,volume,source,order_id\n1,5,B,100,7,generated,1\n2,9,C,100,3,agent,2\n");
  const auto recs = read_order_log_csv(wide);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0] == LogRecord{1, 5, OrderKind::Bid, 100, 7});
  CHECK(recs[1].kind == OrderKind::Cancel);
  CHECK(recs[1].volume == 3);
}

} // TEST_SUITE
