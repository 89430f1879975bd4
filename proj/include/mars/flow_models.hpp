#pragma once

#include "mars/batch_model.hpp"
#include "mars/count_model.hpp"
#include "mars/order_book.hpp"
#include "mars/order_image.hpp"
#include "mars/random.hpp"
#include "mars/token_codec.hpp"

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mars {

enum class ControlKind : std::uint8_t { None, ReplayCurve, Scenario };

/// Per-minute target returns steering batch selection. For scenarios the first
/// `context_minutes` returns describe history and the rest are generated.
struct ControlSignal {
  ControlKind kind{ControlKind::None};
  std::vector<double> returns;
  int context_minutes{0};

  /// Target return for a minute index, absent past the end or when kind is None.
  std::optional<double> target(std::int64_t minute) const noexcept;
  /// Throws on non-finite returns.
  void validate() const;
};

/// Which tokens the matching engine can accept given the current book: Cancel tokens need
/// resting volume inside their price bucket; limit tokens need a positive
/// price and volume inside their buckets.
class FeasibilityMask {
public:
  static FeasibilityMask build(const LimitOrderBook& book, Ticks mid, const CodecConfig& cfg);

  bool allowed(OrderToken token) const noexcept;
  bool allowed(const TokenFields& f) const noexcept;
  /// Resting prices that fall in a price bucket, ascending.
  const std::vector<Ticks>& cancel_prices(int price_bucket) const noexcept {
    return cancel_prices_[static_cast<std::size_t>(price_bucket)];
  }

private:
  std::array<std::array<bool, kPriceBuckets>, kKindCount> kind_price_{};
  std::array<bool, kVolumeBuckets> volume_ok_{};
  std::array<std::vector<Ticks>, kPriceBuckets> cancel_prices_;
};

/// Model distribution with infeasible tokens zeroed and the rest renormalized.
/// Throws if everything is masked.
std::vector<double> next_distribution(const CountModel& model, const TokenContext& ctx, const FeasibilityMask& mask);
std::vector<double> next_distribution(const CountModel& model, const TokenContext& ctx, const LimitOrderBook& book,
                                      Ticks mid, const CodecConfig& cfg);

/// Exponential tilt toward a target image:
/// p'(t) ~ p(t) * exp(lambda * log(1 + target cell of t's kind/volume/price slots)).
std::vector<double> ensemble_reweight(std::span<const double> dist, const OrderImage& target, double lambda);
/// Tilt factor (1 + cell)^lambda of a single token.
double ensemble_weight(OrderToken token, const OrderImage& target, double lambda) noexcept;

/// Turns a feasible token into a concrete order: interval, price and volume
/// drawn uniformly inside the buckets; cancels pick a resting price in the
/// bucket and never exceed its resting volume.
Order realize_token(OrderToken token, const FeasibilityMask& mask, const LimitOrderBook& book, Ticks mid,
                    const CodecConfig& cfg, Rng& rng);

/// Draws a token from next_distribution (optionally tilted toward `target`)
/// by rejection from the model's mixture, then realizes it.
Order sample_order(const CountModel& model, const TokenContext& ctx, const LimitOrderBook& book, Ticks mid,
                   const CodecConfig& cfg, Rng& rng, const OrderImage* target = nullptr, double lambda = 0.0);
OrderToken sample_token(const CountModel& model, const TokenContext& ctx, const FeasibilityMask& mask, Rng& rng,
                        const OrderImage* target = nullptr, double lambda = 0.0);

/// Control-driven pick among candidates: uniform (seeded) without a target,
/// else the smallest |implied return - target|, ties to the lowest index.
std::size_t select_batch(std::span<const OrderImage> candidates, const ControlSignal& control, std::int64_t minute,
                         const BatchModel& model, Rng& rng);

struct GenerationContext {
  const LimitOrderBook* book{nullptr};
  Ticks mid{0};
  LobState state;
  TimeMs clock{0};
  const OrderImage* target{nullptr}; // ensemble target for the current minute
  double lambda{0.0};
};

/// Per-session generation state. `observe` sees every order the session
/// matches (generated and injected) together with the mid it arrived into.
class OrderGenerator {
public:
  virtual ~OrderGenerator() = default;
  /// Next order, or nothing when the source is exhausted.
  virtual std::optional<Order> next(const GenerationContext& ctx, Rng& rng) = 0;
  virtual void observe(const Order& /*order*/, Ticks /*mid*/) {}
};

/// Immutable, thread-shareable flow model; each session starts its own generator.
class OrderFlowModel {
public:
  virtual ~OrderFlowModel() = default;
  virtual std::unique_ptr<OrderGenerator> start(const CodecConfig& codec) const = 0;
  virtual const BatchModel* batch_model() const noexcept { return nullptr; }
  virtual std::string name() const = 0;
};

/// Re-emits a historical order stream verbatim.
class ReplayFlowModel final : public OrderFlowModel {
public:
  explicit ReplayFlowModel(std::vector<Order> orders);
  std::unique_ptr<OrderGenerator> start(const CodecConfig& codec) const override;
  std::string name() const override { return "replay"; }
  const std::vector<Order>& orders() const noexcept { return *orders_; }

private:
  std::shared_ptr<const std::vector<Order>> orders_;
};

struct NoiseFlowParams {
  double mean_interval_ms{400.0};
  double cancel_probability{0.35};
  double marketable_probability{0.08};
  double mean_offset_ticks{2.0};
  double mean_volume{300.0};
  Volume lot{100};
  std::size_t cancel_depth{10};
};

/// Zero-intelligence Poisson order flow around the touch; synthetic data source
/// for corpora, tests and the execution training environment.
class NoiseFlowModel final : public OrderFlowModel {
public:
  explicit NoiseFlowModel(NoiseFlowParams params = {}) : params_(params) {}
  std::unique_ptr<OrderGenerator> start(const CodecConfig& codec) const override;
  std::string name() const override { return "noise"; }
  const NoiseFlowParams& params() const noexcept { return params_; }

private:
  NoiseFlowParams params_;
};

/// Count-model order flow, optionally steered by a batch model's selected
/// minute images through ensemble reweighting.
class CountFlowModel final : public OrderFlowModel {
public:
  CountFlowModel(std::shared_ptr<const CountModel> model, std::shared_ptr<const BatchModel> batches = nullptr);
  std::unique_ptr<OrderGenerator> start(const CodecConfig& codec) const override;
  const BatchModel* batch_model() const noexcept override { return batches_.get(); }
  std::string name() const override { return "count"; }
  const CountModel& model() const noexcept { return *model_; }

private:
  std::shared_ptr<const CountModel> model_;
  std::shared_ptr<const BatchModel> batches_;
};

} // namespace mars
