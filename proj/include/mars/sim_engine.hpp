#pragma once

#include "mars/batch_model.hpp"
#include "mars/count_model.hpp"
#include "mars/flow_models.hpp"
#include "mars/order_book.hpp"
#include "mars/token_codec.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mars {

// Random stream tags; each purpose gets its own generator so a perturbation in
// one (an injected order) never shifts the draws of another.
inline constexpr std::uint64_t kFlowStream = 1;
inline constexpr std::uint64_t kPerturbStream = 2;
inline constexpr std::uint64_t kSelectStream = 3;
inline constexpr std::uint64_t kDecodeStream = 4;
inline constexpr std::uint64_t kAgentStream = 5;

// Agent orders get ids from this range; the book protects them from anonymous cancels.
inline constexpr OrderId kAgentIdBase = OrderId{1} << 48;

/// An interactive participant. Sessions poll it before every generated order
/// and tell it about everything that happens to its orders.
class Agent {
public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  /// Orders to inject now. Ids are assigned by the session; cancels should set
  /// `target` to one of the agent's own ids.
  virtual std::vector<Order> poll(TimeMs clock, const LimitOrderBook& book) = 0;
  /// Every trade involving one of the agent's orders, maker or taker side.
  virtual void on_fill(OrderId /*own*/, Ticks /*price*/, Volume /*volume*/, TimeMs /*clock*/) {}
  /// After an injected order was matched (fills were already reported).
  virtual void on_submitted(const Order& /*order*/, const MatchResult& /*result*/, TimeMs /*clock*/) {}
};

/// Builds one agent per session; receives a seed from the agent stream.
using AgentFactory = std::function<std::unique_ptr<Agent>(std::uint64_t seed)>;

struct SessionConfig {
  std::string instrument{"SYN"};
  std::int64_t start_time_ms{0}; // wall-clock time of session clock 0, reporting only
  int horizon_minutes{1};
  std::uint64_t seed{0};
  std::shared_ptr<const OrderFlowModel> flow;
  ControlSignal control;
  std::vector<AgentFactory> agents;
  MatchingRules rules;
  double tick_size{0.01};
  Ticks open_reference{10000}; // price used while the book has no mid and no trades
  CodecConfig codec = CodecConfig::defaults();
  std::vector<Order> starting_sequence; // matched at clock 0 before the first step
  int candidates{16};
  double lambda{1.0};

  void validate() const;
  /// Digest of everything except the agent list; two runs with equal hashes
  /// form a paired-seed counterfactual.
  std::uint64_t pairing_hash() const;
};

struct Event {
  std::uint64_t seq{0};
  TimeMs time{0};
  Order order;
  friend bool operator==(const Event&, const Event&) = default;
};

struct TimedTrade {
  TimeMs time{0};
  Trade trade;
  friend bool operator==(const TimedTrade&, const TimedTrade&) = default;
};

struct MinuteRecord {
  std::int64_t minute{0};
  Ticks open_mid2{0};  // twice the mid at the minute open
  Ticks close_mid2{0}; // twice the mid just before the first event of the next minute
  Volume volume{0};
  Volume agent_volume{0}; // traded volume where an agent order was on either side
  std::uint64_t trade_count{0};
  std::optional<Ticks> last_trade;
  std::optional<double> mean_trade; // volume-weighted
  std::uint64_t orders{0}, bids{0}, asks{0}, cancels{0}, injected{0};
  std::vector<Ticks> spreads; // spread before each event while the book is two-sided
  Volume ask_depth{0};        // ten-level volumes at the close
  Volume bid_depth{0};
  std::optional<double> implied_return; // of the batch installed as this minute's target
  std::optional<double> control_target;
  std::optional<BatchKey> key; // retrieval key computed when this minute closed

  double open_mid() const noexcept { return static_cast<double>(open_mid2) / 2.0; }
  double close_mid() const noexcept { return static_cast<double>(close_mid2) / 2.0; }
  friend bool operator==(const MinuteRecord&, const MinuteRecord&) = default;
};

struct Trajectory {
  std::string instrument;
  std::uint64_t seed{0};
  std::uint64_t config_hash{0};
  int horizon_minutes{0};
  std::size_t starting_events{0};
  std::vector<Event> events;
  std::vector<TimedTrade> trades;
  std::vector<MinuteRecord> minutes;
  std::uint64_t final_book_hash{0};

  /// Simple return of the mid over each minute.
  std::vector<double> minute_returns() const;
  /// Close mid of each minute, in ticks.
  std::vector<double> close_mids() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// One simulated session. Not thread-safe; run sessions on separate threads.
class Session {
public:
  explicit Session(SessionConfig cfg);
  ~Session();
  Session(Session&&) noexcept;
  Session& operator=(Session&&) noexcept;

  /// Polls agents, then samples and matches one generated order. Returns
  /// false once the horizon is reached (or a replay stream ran out).
  bool step();
  bool complete() const noexcept;
  /// Steps to the horizon and returns the trajectory.
  Trajectory run();
  /// Trajectory so far; closes the remaining minutes if complete.
  const Trajectory& trajectory() const noexcept;

  const LimitOrderBook& book() const noexcept;
  TimeMs clock() const noexcept;
  /// Ensemble target in force for the current minute, if any.
  const OrderImage* target() const noexcept;
  /// Candidates generated at the last minute boundary and the one selected.
  const std::vector<OrderImage>& last_candidates() const noexcept;
  std::optional<std::size_t> last_selection() const noexcept;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Trajectory run(const SessionConfig& cfg);

struct RolloutResult {
  std::optional<Trajectory> trajectory;
  std::string error; // set when the rollout failed
};

/// n sessions with seeds base_seed + i, spread over `threads` workers
/// (0 = MARS_THREADS or the hardware count). Results are ordered by index.
std::vector<RolloutResult> run_rollouts(const SessionConfig& cfg, int n, std::uint64_t base_seed, int threads = 0);

/// Worker count from MARS_THREADS, else the hardware concurrency (at least 1).
int default_thread_count();

/// Pearson correlation of the two minute-return series; absent when either
/// has zero variance. Throws on unequal horizons.
std::optional<double> trajectory_correlation(const Trajectory& a, const Trajectory& b);

/// Splits a trajectory's events into per-minute batches (starting-sequence
/// events excluded) with integer open/close mids, for batch-model corpora.
std::vector<MinuteBatch> minute_batches(const Trajectory& traj);

} // namespace mars
