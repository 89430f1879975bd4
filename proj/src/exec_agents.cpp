#include "mars/exec_agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mars {

void TwapConfig::validate() const {
  if (total <= 0) throw Error("twap: total volume must be positive");
  if (interval <= 0 || duration <= 0 || duration % interval != 0) throw Error("twap: duration must split into whole intervals");
  if (passive_period < 0 || passive_period > interval) throw Error("twap: passive period must fit in an interval");
  const double tenths = pvr * 10.0;
  if (pvr < 0.0 || pvr > 1.0 || std::abs(tenths - std::round(tenths)) > 1e-9) throw Error("twap: PVR must be on the 0.1 grid");
  if (ap < 0 || ap >= kApLevels) throw Error("twap: AP must be in 0..5");
}

Volume TwapConfig::slice(int i) const noexcept {
  const int n = intervals();
  const Volume k = total / n;
  return i == n - 1 ? total - k * (n - 1) : k;
}

Volume TwapConfig::scheduled_through(int i) const noexcept {
  const int n = intervals();
  if (i >= n - 1) return total;
  return (total / n) * (i + 1);
}

std::string TwapConfig::id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "L%d-P%.1f", ap, pvr);
  return buf;
}

Features ExecState::features() const noexcept {
  return {1.0, time_remaining, volume_remaining, imbalance, stage == ExecStage::Aggressive ? 1.0 : 0.0};
}

double ExecReport::fulfillment() const noexcept {
  if (target <= 0) return 0.0;
  return std::clamp(static_cast<double>(executed) / static_cast<double>(target), 0.0, 1.0);
}

std::optional<double> ExecReport::vwap() const noexcept {
  if (executed <= 0) return std::nullopt;
  return notional / static_cast<double>(executed);
}

TwapAgent::TwapAgent(TwapConfig cfg, std::shared_ptr<ExecReport> report, ActionChooser chooser)
    : cfg_(cfg), report_(report ? std::move(report) : std::make_shared<ExecReport>()), chooser_(std::move(chooser)) {
  cfg_.validate();
  *report_ = ExecReport{};
  report_->config_id = chooser_ ? std::string("policy") : cfg_.id();
  report_->side = cfg_.side;
  report_->target = cfg_.total;
  action_ = ExecAction{cfg_.pvr, cfg_.ap};
}

Volume TwapAgent::resting() const noexcept {
  Volume v = 0;
  for (const auto& [id, r] : resting_) v += r.remaining;
  return v;
}

void TwapAgent::note_committed() noexcept {
  report_->max_committed = std::max(report_->max_committed, report_->executed + resting());
}

ExecState TwapAgent::state(TimeMs clock, const LimitOrderBook& book, ExecStage stage) const {
  ExecState s;
  s.time_remaining = std::clamp(1.0 - static_cast<double>(clock - cfg_.start) / static_cast<double>(cfg_.duration), 0.0, 1.0);
  s.volume_remaining = std::clamp(1.0 - static_cast<double>(report_->executed) / static_cast<double>(cfg_.total), 0.0, 1.0);
  s.imbalance = book.snapshot().imbalance();
  s.stage = stage;
  return s;
}

namespace {

Order cancel_of(OrderId id, Ticks price, Volume volume) {
  Order o;
  o.kind = OrderKind::Cancel;
  o.price = price;
  o.volume = volume;
  o.target = id;
  return o;
}

Order limit_of(Side side, Ticks price, Volume volume) {
  Order o;
  o.kind = side == Side::Buy ? OrderKind::Bid : OrderKind::Ask;
  o.price = price;
  o.volume = volume;
  return o;
}

} // namespace

std::vector<Order> TwapAgent::poll(TimeMs clock, const LimitOrderBook& book) {
  std::vector<Order> out;
  if (closed_ || clock < cfg_.start) return out;
  if (clock >= cfg_.start + cfg_.duration) {
    for (const auto& [id, r] : resting_) out.push_back(cancel_of(id, r.price, r.remaining));
    closed_ = true;
    return out;
  }
  const auto elapsed = clock - cfg_.start;
  const int i = static_cast<int>(elapsed / cfg_.interval);
  const auto stage = elapsed % cfg_.interval >= cfg_.passive_period ? ExecStage::Aggressive : ExecStage::Passive;
  if (decided_ < i) {
    decided_ = i;
    if (chooser_) {
      const auto s = state(clock, book, stage);
      const int a = chooser_(s);
      action_ = action_of(a);
      report_->decisions.emplace_back(s.features(), a);
    }
  }
  if (stage == ExecStage::Passive && passive_done_ < i) {
    passive_done_ = i;
    passive(clock, book, i, out);
  } else if (stage == ExecStage::Aggressive && aggressive_done_ < i) {
    passive_done_ = i;
    aggressive_done_ = i;
    aggressive(clock, book, i, out);
  }
  return out;
}

void TwapAgent::passive(TimeMs, const LimitOrderBook& book, int i, std::vector<Order>& out) {
  const bool buy = cfg_.side == Side::Buy;
  std::optional<Ticks> touch = buy ? book.best_bid() : book.best_ask();
  if (!touch) {
    const auto other = buy ? book.best_ask() : book.best_bid();
    if (other) touch = buy ? *other - 1 : *other + 1;
  }
  if (touch && *touch <= 0) touch.reset();

  Volume kept = 0;
  for (const auto& [id, r] : resting_) {
    if (touch && r.price == *touch) {
      kept += r.remaining;
    } else {
      out.push_back(cancel_of(id, r.price, r.remaining));
    }
  }
  if (!touch || action_.pvr <= 0.0) return;
  const Volume cap = static_cast<Volume>(std::llround(action_.pvr * static_cast<double>(cfg_.slice(i))));
  const Volume owed = cfg_.scheduled_through(i) - report_->executed - kept;
  const Volume room = cfg_.total - report_->executed - kept;
  const Volume v = std::min({cap, owed, room});
  if (v <= 0) return;
  out.push_back(limit_of(cfg_.side, *touch, v));
  ++report_->passive_orders;
}

void TwapAgent::aggressive(TimeMs, const LimitOrderBook& book, int i, std::vector<Order>& out) {
  const Volume shortfall = cfg_.scheduled_through(i) - report_->executed;
  if (shortfall <= 0 || action_.ap == 0) return;

  std::optional<Ticks> price;
  int level = 0;
  auto walk = [&](const auto& levels) {
    for (const auto& [p, lvl] : levels) {
      price = p;
      if (++level == action_.ap) break;
    }
  };
  if (cfg_.side == Side::Buy) {
    walk(book.asks());
  } else {
    walk(book.bids());
  }
  if (!price) return;

  // keep executed + resting + shortfall within the total
  Volume excess = report_->executed + resting() + shortfall - cfg_.total;
  for (auto it = resting_.rbegin(); excess > 0 && it != resting_.rend(); ++it) {
    const Volume q = std::min(excess, it->second.remaining);
    out.push_back(cancel_of(it->first, it->second.price, q));
    excess -= q;
  }
  out.push_back(limit_of(cfg_.side, *price, shortfall));
  ++report_->aggressive_orders;
}

void TwapAgent::on_fill(OrderId own, Ticks price, Volume volume, TimeMs clock) {
  report_->executed += volume;
  report_->notional += static_cast<double>(price) * static_cast<double>(volume);
  report_->fills.push_back(Fill{clock, price, volume});
  if (auto it = resting_.find(own); it != resting_.end()) {
    it->second.remaining -= volume;
    if (it->second.remaining <= 0) resting_.erase(it);
  }
}

void TwapAgent::on_submitted(const Order& order, const MatchResult& result, TimeMs) {
  if (order.kind == OrderKind::Cancel) {
    report_->cancelled_volume += result.cancelled;
    if (auto it = resting_.find(order.target); it != resting_.end()) {
      it->second.remaining -= result.cancelled;
      if (it->second.remaining <= 0) resting_.erase(it);
    }
    return;
  }
  if (!result.accepted) return;
  report_->limit_volume += order.volume;
  if (result.resting > 0) resting_[order.id] = Resting{order.price, result.resting};
  note_committed();
}

AgentFactory twap_factory(TwapConfig cfg, std::shared_ptr<ExecReport> report) {
  cfg.validate();
  return [cfg, report](std::uint64_t) { return std::make_unique<TwapAgent>(cfg, report); };
}

void RewardConfig::validate() const {
  if (!(knee > 0.0 && knee < 1.0)) throw Error("reward: knee must be in (0,1)");
}

double fulfillment_alpha(double fr, const RewardConfig& cfg) {
  cfg.validate();
  if (fr <= cfg.knee) return 1.0;
  return std::max(0.0, (1.0 - fr) / (1.0 - cfg.knee));
}

double reward(double fr, double pa, const RewardConfig& cfg) { return fulfillment_alpha(fr, cfg) * fr + pa; }

std::optional<double> price_advantage(const ExecReport& agent, const ExecReport& benchmark) {
  const auto a = agent.vwap();
  const auto b = benchmark.vwap();
  if (!a || !b || *b <= 0.0) return std::nullopt;
  const double adv = 1e4 * (*b - *a) / *b;
  return agent.side == Side::Buy ? adv : -adv;
}

namespace {

SessionConfig env_session(const ExecEnvConfig& env, std::uint64_t seed) {
  SessionConfig c;
  c.instrument = "TOY";
  c.flow = std::make_shared<NoiseFlowModel>(env.flow);
  c.horizon_minutes = env.horizon_minutes;
  c.open_reference = env.open_reference;
  c.seed = seed;
  return c;
}

} // namespace

ExecReport run_benchmark(const ExecEnvConfig& env, std::uint64_t seed) {
  auto cfg = env.twap;
  cfg.pvr = 0.9;
  cfg.ap = 1;
  auto report = std::make_shared<ExecReport>();
  auto session = env_session(env, seed);
  session.agents.push_back(twap_factory(cfg, report));
  run(session);
  return *report;
}

EpisodeResult run_episode(const ExecEnvConfig& env, const ActionChooser& chooser, std::uint64_t seed,
                          const ExecReport& benchmark) {
  auto report = std::make_shared<ExecReport>();
  auto session = env_session(env, seed);
  const auto cfg = env.twap;
  session.agents.push_back([cfg, report, chooser](std::uint64_t) {
    return std::make_unique<TwapAgent>(cfg, report, chooser);
  });
  run(session);

  EpisodeResult r;
  r.report = *report;
  r.fulfillment = report->fulfillment();
  r.price_advantage = price_advantage(*report, benchmark);
  r.reward = reward(r.fulfillment, r.price_advantage.value_or(0.0), env.reward);
  for (const auto& [x, a] : report->decisions) r.transitions.push_back(Transition{x, a, r.reward});
  return r;
}

EpisodeResult run_episode(const ExecEnvConfig& env, const ActionChooser& chooser, std::uint64_t seed) {
  return run_episode(env, chooser, seed, run_benchmark(env, seed));
}

namespace {

ActionChooser sampling_chooser(const Policy& policy, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(mix_seed(seed, kAgentStream));
  return [&policy, rng](const ExecState& s) { return policy.sample(s.features(), *rng); };
}

} // namespace

TrainResult train_policy(const ExecEnvConfig& env, const TrainConfig& cfg, Policy init) {
  if (cfg.iterations < 0 || cfg.episodes_per_batch < 1) throw Error("train: bad iteration or batch count");
  TrainResult out;
  out.policy = init;
  out.policy.temperature = cfg.temperature;
  if (!out.policy.finite()) throw Error("train: initial policy is not finite");
  std::uint64_t seed = cfg.seed;
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Transition> batch;
    double total = 0.0;
    for (int e = 0; e < cfg.episodes_per_batch; ++e, ++seed) {
      const auto r = run_episode(env, sampling_chooser(out.policy, seed), seed);
      total += r.reward;
      batch.insert(batch.end(), r.transitions.begin(), r.transitions.end());
    }
    out.mean_rewards.push_back(total / cfg.episodes_per_batch);
    auto upd = policy_gradient_update(out.policy, batch, cfg.lr);
    if (upd.applied) {
      out.policy = upd.policy;
    } else {
      ++out.rejected_updates;
    }
  }
  return out;
}

double evaluate_policy(const ExecEnvConfig& env, const Policy& policy, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw Error("evaluate: episodes must be >= 1");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto s = seed + static_cast<std::uint64_t>(e);
    total += run_episode(env, sampling_chooser(policy, s), s).reward;
  }
  return total / episodes;
}

} // namespace mars
