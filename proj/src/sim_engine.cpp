#include "mars/sim_engine.hpp"

#include "mars/hash.hpp"
#include "mars/order_image.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace mars {

void SessionConfig::validate() const {
  if (horizon_minutes < 0) throw Error("session: horizon must be non-negative");
  if (!flow) throw Error("session: no flow model");
  if (candidates < 1) throw Error("session: candidates must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("session: lambda must be finite and >= 0");
  if (open_reference <= 0) throw Error("session: open reference price must be positive");
  if (!(tick_size > 0.0)) throw Error("session: tick size must be positive");
  control.validate();
  codec.validate();
}

std::uint64_t SessionConfig::pairing_hash() const {
  Hasher h;
  h.add(std::string_view{instrument});
  h.add(start_time_ms);
  h.add(horizon_minutes);
  h.add(seed);
  h.add(std::string_view{flow ? flow->name() : std::string{}});
  h.add(static_cast<int>(control.kind));
  h.add(control.context_minutes);
  for (double r : control.returns) h.add(r);
  h.add(rules.allow_partial_cancel);
  h.add(tick_size);
  h.add(open_reference);
  h.add(codec.half_width);
  for (auto e : codec.volume_edges) h.add(e);
  for (auto e : codec.interval_edges) h.add(e);
  h.add(static_cast<std::uint64_t>(starting_sequence.size()));
  for (const auto& o : starting_sequence) {
    h.add(o.id);
    h.add(static_cast<int>(o.kind));
    h.add(o.price);
    h.add(o.volume);
    h.add(o.interval);
  }
  h.add(candidates);
  h.add(lambda);
  return h.h;
}

std::vector<double> Trajectory::minute_returns() const {
  std::vector<double> out;
  out.reserve(minutes.size());
  for (const auto& m : minutes) out.push_back(minute_return(m.open_mid2, m.close_mid2));
  return out;
}

std::vector<double> Trajectory::close_mids() const {
  std::vector<double> out;
  out.reserve(minutes.size());
  for (const auto& m : minutes) out.push_back(m.close_mid());
  return out;
}

struct Session::Impl {
  SessionConfig cfg;
  LimitOrderBook book;
  LobStateTracker tracker;
  std::unique_ptr<OrderGenerator> generator;
  std::vector<std::unique_ptr<Agent>> agents;
  std::vector<std::uint64_t> agent_counters;
  const BatchModel* batches{nullptr};

  Trajectory traj;
  TimeMs clock{0};
  TimeMs horizon_end{0};
  std::uint64_t step_index{0};
  std::uint64_t next_generated_id{1};
  bool done{false};

  std::int64_t minute{0};
  MinuteRecord current;
  std::vector<Order> minute_orders;
  double trade_notional{0.0};

  std::optional<OrderImage> target;
  std::vector<OrderImage> candidates;
  std::optional<std::size_t> selection;

  explicit Impl(SessionConfig c) : cfg(std::move(c)), tracker(cfg.open_reference) {
    cfg.validate();
    MatchingRules rules = cfg.rules;
    rules.protected_from = kAgentIdBase;
    book = LimitOrderBook(rules);
    generator = cfg.flow->start(cfg.codec);
    batches = cfg.flow->batch_model();
    if (batches != nullptr && batches->empty()) batches = nullptr;
    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
      agents.push_back(cfg.agents[i](mix_seed(mix_seed(cfg.seed, kAgentStream), i)));
      if (!agents.back()) throw Error("session: agent factory returned null");
    }
    agent_counters.assign(agents.size(), 0);
    horizon_end = static_cast<TimeMs>(cfg.horizon_minutes) * kMillisPerMinute;

    traj.instrument = cfg.instrument;
    traj.seed = cfg.seed;
    traj.config_hash = cfg.pairing_hash();
    traj.horizon_minutes = cfg.horizon_minutes;

    for (auto o : cfg.starting_sequence) {
      o.interval = 0;
      if (o.id == 0) o.id = next_generated_id;
      next_generated_id = std::max(next_generated_id, o.id + 1);
      apply(o, 0, std::nullopt);
    }
    traj.starting_events = traj.events.size();
    // the starting sequence is context, not part of minute 0's statistics
    open_minute(0);
    if (cfg.horizon_minutes == 0) finish();
  }

  Ticks twice_mid_now() const { return twice_mid(book.snapshot(), book.last_trade_price(), cfg.open_reference); }

  void open_minute(std::int64_t m) {
    minute = m;
    current = MinuteRecord{};
    current.minute = m;
    current.open_mid2 = twice_mid_now();
    minute_orders.clear();
    trade_notional = 0.0;
    if (target && batches) current.implied_return = batches->implied_return(*target);
    if (auto t = cfg.control.target(cfg.control.context_minutes + m); t && cfg.control.kind != ControlKind::None)
      current.control_target = t;
  }

  void close_minute() {
    const auto snap = book.snapshot();
    current.close_mid2 = twice_mid_now();
    current.ask_depth = snap.ask_volume();
    current.bid_depth = snap.bid_volume();
    if (current.volume > 0) current.mean_trade = trade_notional / static_cast<double>(current.volume);
    if (batches != nullptr) {
      const auto img = batch_to_image(minute_orders, mid_ticks(current.open_mid2), cfg.codec, minute);
      const auto key = summarize_minute(img, minute_return(current.open_mid2, current.close_mid2));
      current.key = key;
    }
    if (batches != nullptr && minute + 1 < cfg.horizon_minutes) {
      const auto key = *current.key;
      const auto seed = mix_seed(mix_seed(cfg.seed, kPerturbStream), static_cast<std::uint64_t>(minute));
      candidates = batches->generate_candidates(key, cfg.candidates, seed);
      Rng rng(mix_seed(mix_seed(cfg.seed, kSelectStream), static_cast<std::uint64_t>(minute)));
      selection = select_batch(candidates, cfg.control, cfg.control.context_minutes + minute + 1, *batches, rng);
      target = candidates[*selection];
    }
    traj.minutes.push_back(std::move(current));
  }

  // Closes every minute whose boundary is at or before t.
  void close_until(TimeMs t) {
    while (minute < cfg.horizon_minutes && (minute + 1) * kMillisPerMinute <= t) {
      close_minute();
      if (minute + 1 < cfg.horizon_minutes) {
        open_minute(minute + 1);
      } else {
        minute = cfg.horizon_minutes;
      }
    }
  }

  std::optional<std::size_t> owner_of(OrderId id) const noexcept {
    if (id < kAgentIdBase) return std::nullopt;
    const auto idx = static_cast<std::size_t>((id - kAgentIdBase) >> 32);
    if (idx >= agents.size()) return std::nullopt;
    return idx;
  }

  MatchResult apply(const Order& order, TimeMs t, std::optional<std::size_t> from_agent) {
    const Ticks mid = tracker.mid(book);
    if (const auto a = book.best_ask(), b = book.best_bid(); a && b) current.spreads.push_back(*a - *b);

    const auto result = book.submit(order);
    traj.events.push_back(Event{traj.events.size() + 1, t, order});
    ++current.orders;
    switch (order.kind) {
    case OrderKind::Bid: ++current.bids; break;
    case OrderKind::Ask: ++current.asks; break;
    case OrderKind::Cancel: ++current.cancels; break;
    }
    if (order.source == OrderSource::Injected) ++current.injected;
    minute_orders.push_back(order);

    for (const auto& tr : result.trades) {
      traj.trades.push_back(TimedTrade{t, tr});
      current.volume += tr.volume;
      ++current.trade_count;
      current.last_trade = tr.price;
      trade_notional += static_cast<double>(tr.price) * static_cast<double>(tr.volume);
      const auto maker = owner_of(tr.maker);
      const auto taker = owner_of(tr.taker);
      if (maker || taker) current.agent_volume += tr.volume;
      if (maker) agents[*maker]->on_fill(tr.maker, tr.price, tr.volume, t);
      if (taker) agents[*taker]->on_fill(tr.taker, tr.price, tr.volume, t);
    }
    if (from_agent) agents[*from_agent]->on_submitted(order, result, t);
    generator->observe(order, mid);
    return result;
  }

  void poll_agents() {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      auto orders = agents[i]->poll(clock, book);
      for (auto& o : orders) {
        if (o.volume <= 0) continue;
        o.source = OrderSource::Injected;
        o.id = kAgentIdBase + (static_cast<OrderId>(i) << 32) + ++agent_counters[i];
        o.interval = 0;
        apply(o, clock, i);
      }
    }
  }

  void finish() {
    if (!done) {
      close_until(horizon_end);
      traj.final_book_hash = book.hash();
      done = true;
    }
  }

  bool step() {
    if (done) return false;

    GenerationContext ctx;
    ctx.book = &book;
    ctx.state = tracker.observe(clock, book);
    ctx.mid = tracker.mid(book);
    ctx.clock = clock;
    ctx.target = target ? &*target : nullptr;
    ctx.lambda = cfg.lambda;
    Rng rng(mix_seed(mix_seed(cfg.seed, kFlowStream), step_index++));
    auto next = generator->next(ctx, rng);
    if (!next) {
      finish();
      return false;
    }
    Order o = *next;
    const TimeMs t = clock + std::max<TimeMs>(0, o.interval);
    if (t >= horizon_end) {
      finish();
      return false;
    }
    close_until(t);
    // agents act at the event time, ahead of the generated order
    clock = t;
    poll_agents();
    if (o.id == 0) o.id = next_generated_id;
    next_generated_id = std::max(next_generated_id, o.id + 1);
    apply(o, t, std::nullopt);
    return true;
  }
};

Session::Session(SessionConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Session::~Session() = default;
Session::Session(Session&&) noexcept = default;
Session& Session::operator=(Session&&) noexcept = default;

bool Session::step() { return impl_->step(); }
bool Session::complete() const noexcept { return impl_->done; }

Trajectory Session::run() {
  while (impl_->step()) {
  }
  return impl_->traj;
}

const Trajectory& Session::trajectory() const noexcept { return impl_->traj; }
const LimitOrderBook& Session::book() const noexcept { return impl_->book; }
TimeMs Session::clock() const noexcept { return impl_->clock; }
const OrderImage* Session::target() const noexcept { return impl_->target ? &*impl_->target : nullptr; }
const std::vector<OrderImage>& Session::last_candidates() const noexcept { return impl_->candidates; }
std::optional<std::size_t> Session::last_selection() const noexcept { return impl_->selection; }

Trajectory run(const SessionConfig& cfg) { return Session(cfg).run(); }

int default_thread_count() {
  if (const char* env = std::getenv("MARS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(std::min<long>(v, 1024));
  }
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

std::vector<RolloutResult> run_rollouts(const SessionConfig& cfg, int n, std::uint64_t base_seed, int threads) {
  if (n < 1) throw Error("run_rollouts: n must be >= 1");
  if (threads <= 0) threads = default_thread_count();
  threads = std::min(threads, n);
  std::vector<RolloutResult> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      auto& slot = results[static_cast<std::size_t>(i)];
      try {
        SessionConfig c = cfg;
        c.seed = base_seed + static_cast<std::uint64_t>(i);
        slot.trajectory = run(c);
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

std::optional<double> trajectory_correlation(const Trajectory& a, const Trajectory& b) {
  if (a.minutes.size() != b.minutes.size()) throw Error("trajectory_correlation: unequal horizons");
  const auto x = a.minute_returns();
  const auto y = b.minute_returns();
  const auto n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<MinuteBatch> minute_batches(const Trajectory& traj) {
  std::vector<MinuteBatch> out;
  out.reserve(traj.minutes.size());
  for (const auto& m : traj.minutes)
    out.push_back(MinuteBatch{{}, mid_ticks(m.open_mid2), mid_ticks(m.close_mid2), m.minute});
  for (std::size_t i = traj.starting_events; i < traj.events.size(); ++i) {
    const auto& e = traj.events[i];
    const auto minute = e.time / kMillisPerMinute;
    if (minute >= 0 && static_cast<std::size_t>(minute) < out.size()) out[static_cast<std::size_t>(minute)].orders.push_back(e.order);
  }
  return out;
}

} // namespace mars
