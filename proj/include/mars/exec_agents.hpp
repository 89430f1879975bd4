#pragma once

#include "mars/policy.hpp"
#include "mars/sim_engine.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mars {

struct TwapConfig {
  Side side{Side::Buy};
  Volume total{1000};
  TimeMs start{0}; // session clock at which the window opens
  TimeMs duration{5 * kMillisPerMinute};
  TimeMs interval{30'000};
  TimeMs passive_period{25'000};
  double pvr{0.9};
  int ap{1};

  /// Throws unless PVR is on the 0.1 grid, AP in 0..5 and the window splits evenly.
  void validate() const;
  int intervals() const noexcept { return static_cast<int>(duration / interval); }
  /// Volume of interval i: total / intervals, remainder to the last one.
  Volume slice(int i) const noexcept;
  /// Cumulative schedule through the end of interval i.
  Volume scheduled_through(int i) const noexcept;
  /// "L<ap>-P<pvr>", e.g. L1-P0.9.
  std::string id() const;
};

enum class ExecStage : std::uint8_t { Passive, Aggressive };

struct ExecState {
  double time_remaining{1.0};
  double volume_remaining{1.0};
  double imbalance{0.0};
  ExecStage stage{ExecStage::Passive};
  Features features() const noexcept;
};

struct Fill {
  TimeMs time{0};
  Ticks price{0};
  Volume volume{0};
};

struct ExecReport {
  std::string config_id;
  Side side{Side::Buy};
  Volume target{0};
  Volume executed{0};
  double notional{0.0};
  std::vector<Fill> fills;
  Volume limit_volume{0};     // submitted limit volume
  Volume cancelled_volume{0}; // volume actually removed by own cancels
  Volume max_committed{0};    // peak of executed + resting
  int passive_orders{0};
  int aggressive_orders{0};
  std::vector<std::pair<Features, int>> decisions; // per interval, when a chooser is used

  double fulfillment() const noexcept;
  std::optional<double> vwap() const noexcept;
};

/// Picks an action index (see action_of) at the start of each interval.
using ActionChooser = std::function<int(const ExecState&)>;

/// Configurable TWAP: per interval, a passive period posting at the touch on
/// its own side and an aggressive period that catches up to the cumulative
/// schedule at the AP-th opposite level. The passive order is capped by
/// PVR times the interval slice. Everything still resting is cancelled when
/// the window closes.
class TwapAgent final : public Agent {
public:
  TwapAgent(TwapConfig cfg, std::shared_ptr<ExecReport> report = nullptr, ActionChooser chooser = {});

  std::string name() const override { return "twap:" + cfg_.id(); }
  std::vector<Order> poll(TimeMs clock, const LimitOrderBook& book) override;
  void on_fill(OrderId own, Ticks price, Volume volume, TimeMs clock) override;
  void on_submitted(const Order& order, const MatchResult& result, TimeMs clock) override;

  const ExecReport& report() const noexcept { return *report_; }
  Volume resting() const noexcept;

private:
  struct Resting {
    Ticks price{0};
    Volume remaining{0};
  };

  void passive(TimeMs clock, const LimitOrderBook& book, int i, std::vector<Order>& out);
  void aggressive(TimeMs clock, const LimitOrderBook& book, int i, std::vector<Order>& out);
  ExecState state(TimeMs clock, const LimitOrderBook& book, ExecStage stage) const;
  void note_committed() noexcept;

  TwapConfig cfg_;
  std::shared_ptr<ExecReport> report_;
  ActionChooser chooser_;
  std::map<OrderId, Resting> resting_;
  ExecAction action_{};
  int decided_{-1};
  int passive_done_{-1};
  int aggressive_done_{-1};
  bool closed_{false};
};

AgentFactory twap_factory(TwapConfig cfg, std::shared_ptr<ExecReport> report = nullptr);

struct RewardConfig {
  double knee{0.95};
  void validate() const;
};

/// 1 up to the knee, then linear down to 0 at full fulfillment.
double fulfillment_alpha(double fr, const RewardConfig& cfg = {});
/// alpha(fr) * fr + pa.
double reward(double fr, double pa, const RewardConfig& cfg = {});
/// 1e4 * (benchmark VWAP - agent VWAP) / benchmark VWAP for buying, mirrored
/// for selling. Absent when either side has no fills.
std::optional<double> price_advantage(const ExecReport& agent, const ExecReport& benchmark);

/// Toy execution environment: a noise-flow session with one buying TWAP agent
/// and a paired benchmark run of the L1-P0.9 configuration.
struct ExecEnvConfig {
  NoiseFlowParams flow;
  Ticks open_reference{10000};
  TwapConfig twap{Side::Buy, 3000, kMillisPerMinute, 5 * kMillisPerMinute, 30'000, 25'000, 0.9, 1};
  int horizon_minutes{7};
  RewardConfig reward;
};

struct EpisodeResult {
  double reward{0.0};
  double fulfillment{0.0};
  std::optional<double> price_advantage;
  std::vector<Transition> transitions;
  ExecReport report;
};

/// The benchmark leg is cached per seed by callers that need it; this runs both.
EpisodeResult run_episode(const ExecEnvConfig& env, const ActionChooser& chooser, std::uint64_t seed);
/// Same, reusing a benchmark report computed earlier for this seed.
EpisodeResult run_episode(const ExecEnvConfig& env, const ActionChooser& chooser, std::uint64_t seed,
                          const ExecReport& benchmark);
ExecReport run_benchmark(const ExecEnvConfig& env, std::uint64_t seed);

struct TrainConfig {
  int iterations{50};
  int episodes_per_batch{16};
  double lr{4e-5};
  double temperature{1.0};
  std::uint64_t seed{1};
};

struct TrainResult {
  Policy policy;
  std::vector<double> mean_rewards; // per iteration
  int rejected_updates{0};
};

TrainResult train_policy(const ExecEnvConfig& env, const TrainConfig& cfg, Policy init = {});
/// Mean reward over `episodes` seeds starting at `seed`, sampling actions
/// from the policy with its own stream.
double evaluate_policy(const ExecEnvConfig& env, const Policy& policy, int episodes, std::uint64_t seed);

} // namespace mars
