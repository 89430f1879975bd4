#include "mars/flow_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mars {

std::optional<double> ControlSignal::target(std::int64_t minute) const noexcept {
  if (kind == ControlKind::None || minute < 0 || static_cast<std::size_t>(minute) >= returns.size()) return std::nullopt;
  return returns[static_cast<std::size_t>(minute)];
}

void ControlSignal::validate() const {
  for (double r : returns)
    if (!std::isfinite(r)) throw Error("control signal: non-finite target return");
  if (context_minutes < 0) throw Error("control signal: negative context length");
}

FeasibilityMask FeasibilityMask::build(const LimitOrderBook& book, Ticks mid, const CodecConfig& cfg) {
  FeasibilityMask m;
  for (int vb = 0; vb < kVolumeBuckets; ++vb) {
    const auto b = static_cast<std::size_t>(vb);
    const Volume hi = b + 1 < cfg.volume_edges.size() ? cfg.volume_edges[b + 1] - 1 : cfg.volume_edges[b];
    m.volume_ok_[b] = hi >= 1 || b + 1 == cfg.volume_edges.size();
  }
  for (int pb = 0; pb < kPriceBuckets; ++pb) {
    const auto [lo, hi] = cfg.price_range(pb, mid);
    // price_range clamps at 1 tick; the bucket is reachable only if that price maps back into it
    const bool ok = cfg.price_bucket(hi, mid) == pb && cfg.price_bucket(lo, mid) == pb;
    m.kind_price_[static_cast<std::size_t>(OrderKind::Ask)][static_cast<std::size_t>(pb)] = ok;
    m.kind_price_[static_cast<std::size_t>(OrderKind::Bid)][static_cast<std::size_t>(pb)] = ok;
  }
  auto collect = [&](const auto& levels) {
    for (const auto& [price, level] : levels) {
      if (level.total <= 0) continue;
      m.cancel_prices_[static_cast<std::size_t>(cfg.price_bucket(price, mid))].push_back(price);
    }
  };
  collect(book.asks());
  collect(book.bids());
  for (int pb = 0; pb < kPriceBuckets; ++pb) {
    auto& prices = m.cancel_prices_[static_cast<std::size_t>(pb)];
    std::sort(prices.begin(), prices.end());
    m.kind_price_[static_cast<std::size_t>(OrderKind::Cancel)][static_cast<std::size_t>(pb)] = !prices.empty();
  }
  return m;
}

bool FeasibilityMask::allowed(const TokenFields& f) const noexcept {
  return kind_price_[static_cast<std::size_t>(f.kind)][static_cast<std::size_t>(f.price_bucket)] &&
         volume_ok_[static_cast<std::size_t>(f.volume_bucket)];
}

bool FeasibilityMask::allowed(OrderToken token) const noexcept { return allowed(decode_token(token)); }

std::vector<double> next_distribution(const CountModel& model, const TokenContext& ctx, const FeasibilityMask& mask) {
  auto p = model.distribution(ctx);
  double sum = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!mask.allowed(OrderToken::from_index(static_cast<std::int64_t>(t)))) p[t] = 0.0;
    sum += p[t];
  }
  if (!(sum > 0.0)) throw Error("next_distribution: every token is infeasible");
  for (auto& x : p) x /= sum;
  return p;
}

std::vector<double> next_distribution(const CountModel& model, const TokenContext& ctx, const LimitOrderBook& book,
                                      Ticks mid, const CodecConfig& cfg) {
  return next_distribution(model, ctx, FeasibilityMask::build(book, mid, cfg));
}

double ensemble_weight(OrderToken token, const OrderImage& target, double lambda) noexcept {
  if (lambda == 0.0) return 1.0;
  const auto f = decode_token(token);
  const double cell = target.at(image_channel(f.kind), f.volume_bucket, f.price_bucket);
  return std::exp(lambda * std::log1p(cell));
}

std::vector<double> ensemble_reweight(std::span<const double> dist, const OrderImage& target, double lambda) {
  if (lambda < 0.0) throw Error("ensemble_reweight: lambda must be non-negative");
  std::vector<double> out(dist.begin(), dist.end());
  if (lambda == 0.0) return out;
  double sum = 0.0;
  bool tilted = false;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double w = ensemble_weight(OrderToken::from_index(static_cast<std::int64_t>(t)), target, lambda);
    tilted = tilted || (w != 1.0 && out[t] > 0.0);
    out[t] *= w;
    sum += out[t];
  }
  // no token touched: return the input bit for bit rather than renormalize it
  if (!tilted) return std::vector<double>(dist.begin(), dist.end());
  if (sum > 0.0)
    for (auto& x : out) x /= sum;
  return out;
}

Order realize_token(OrderToken token, const FeasibilityMask& mask, const LimitOrderBook& book, Ticks mid,
                    const CodecConfig& cfg, Rng& rng) {
  const auto f = decode_token(token);
  Order o;
  o.kind = f.kind;
  o.source = OrderSource::Generated;
  const auto [ilo, ihi] = cfg.interval_range(f.interval_bucket);
  o.interval = uniform_int(rng, ilo, ihi);
  const auto [vlo, vhi] = cfg.volume_range(f.volume_bucket);
  o.volume = uniform_int(rng, vlo, vhi);
  if (f.kind == OrderKind::Cancel) {
    const auto& prices = mask.cancel_prices(f.price_bucket);
    if (prices.empty()) throw Error("realize_token: cancel token without resting volume");
    o.price = prices[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(prices.size()) - 1))];
    o.volume = std::min(o.volume, book.volume_at(o.price));
  } else {
    const auto [plo, phi] = cfg.price_range(f.price_bucket, mid);
    o.price = uniform_int(rng, plo, phi);
  }
  return o;
}

OrderToken sample_token(const CountModel& model, const TokenContext& ctx, const FeasibilityMask& mask, Rng& rng,
                        const OrderImage* target, double lambda) {
  const bool tilt = target != nullptr && lambda > 0.0;
  double wmax = 1.0;
  if (tilt) {
    const auto peak = *std::max_element(target->cells.begin(), target->cells.end());
    wmax = std::exp(lambda * std::log1p(static_cast<double>(peak)));
  }
  constexpr int kMaxTries = 512;
  for (int tries = 0; tries < kMaxTries; ++tries) {
    const auto t = model.sample(ctx, rng);
    if (!mask.allowed(t)) continue;
    if (tilt && uniform01(rng) * wmax >= ensemble_weight(t, *target, lambda)) continue;
    return t;
  }
  // Rare: feasible mass is tiny. Draw exactly from the masked, tilted vector.
  auto p = next_distribution(model, ctx, mask);
  if (tilt) p = ensemble_reweight(p, *target, lambda);
  double u = uniform01(rng);
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (u < p[t]) return OrderToken::from_index(static_cast<std::int64_t>(t));
    u -= p[t];
  }
  for (std::size_t t = p.size(); t-- > 0;)
    if (p[t] > 0.0) return OrderToken::from_index(static_cast<std::int64_t>(t));
  throw Error("sample_token: empty distribution");
}

Order sample_order(const CountModel& model, const TokenContext& ctx, const LimitOrderBook& book, Ticks mid,
                   const CodecConfig& cfg, Rng& rng, const OrderImage* target, double lambda) {
  const auto mask = FeasibilityMask::build(book, mid, cfg);
  const auto token = sample_token(model, ctx, mask, rng, target, lambda);
  return realize_token(token, mask, book, mid, cfg, rng);
}

std::size_t select_batch(std::span<const OrderImage> candidates, const ControlSignal& control, std::int64_t minute,
                         const BatchModel& model, Rng& rng) {
  if (candidates.empty()) throw Error("select_batch: no candidates");
  if (candidates.size() == 1) return 0;
  const auto target = control.target(minute);
  if (!target) return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(candidates.size()) - 1));
  std::size_t best = 0;
  double best_gap = std::abs(model.implied_return(candidates[0]) - *target);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double gap = std::abs(model.implied_return(candidates[i]) - *target);
    if (gap < best_gap) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

namespace {

class ReplayGenerator final : public OrderGenerator {
public:
  explicit ReplayGenerator(std::shared_ptr<const std::vector<Order>> orders) : orders_(std::move(orders)) {}
  std::optional<Order> next(const GenerationContext&, Rng&) override {
    if (cursor_ >= orders_->size()) return std::nullopt;
    return (*orders_)[cursor_++];
  }

private:
  std::shared_ptr<const std::vector<Order>> orders_;
  std::size_t cursor_{0};
};

class NoiseGenerator final : public OrderGenerator {
public:
  explicit NoiseGenerator(NoiseFlowParams p) : p_(p) {}

  std::optional<Order> next(const GenerationContext& ctx, Rng& rng) override {
    const auto& book = *ctx.book;
    Order o;
    o.source = OrderSource::Generated;
    o.interval = 1 + static_cast<TimeMs>(exponential(rng, p_.mean_interval_ms));
    const bool buy = uniform01(rng) < 0.5;
    if (!book.empty() && uniform01(rng) < p_.cancel_probability) {
      const bool use_bids = book.asks().empty() || (!book.bids().empty() && buy);
      auto pick = [&](const auto& levels) {
        const auto depth = std::min(levels.size(), p_.cancel_depth);
        auto it = levels.begin();
        std::advance(it, uniform_int(rng, 0, static_cast<std::int64_t>(depth) - 1));
        o.kind = OrderKind::Cancel;
        o.price = it->first;
        o.volume = uniform_int(rng, 1, it->second.total);
      };
      if (use_bids) {
        pick(book.bids());
      } else {
        pick(book.asks());
      }
      return o;
    }
    const auto lots = std::max<Volume>(1, static_cast<Volume>(std::llround(exponential(rng, p_.mean_volume / static_cast<double>(p_.lot)))));
    o.volume = lots * p_.lot;
    const auto offset = static_cast<Ticks>(exponential(rng, p_.mean_offset_ticks)) - 1;
    const bool marketable = uniform01(rng) < p_.marketable_probability;
    if (buy) {
      o.kind = OrderKind::Bid;
      const auto ask = book.best_ask();
      if (marketable && ask) {
        o.price = *ask + uniform_int(rng, 0, 2);
      } else {
        o.price = book.best_bid().value_or(ctx.mid) - offset;
        if (ask) o.price = std::min(o.price, *ask - 1);
      }
    } else {
      o.kind = OrderKind::Ask;
      const auto bid = book.best_bid();
      if (marketable && bid) {
        o.price = *bid - uniform_int(rng, 0, 2);
      } else {
        o.price = book.best_ask().value_or(ctx.mid + 1) + offset;
        if (bid) o.price = std::max(o.price, *bid + 1);
      }
    }
    o.price = std::max<Ticks>(o.price, 1);
    return o;
  }

private:
  NoiseFlowParams p_;
};

class CountGenerator final : public OrderGenerator {
public:
  CountGenerator(std::shared_ptr<const CountModel> model, CodecConfig codec)
      : model_(std::move(model)), codec_(std::move(codec)) {}

  std::optional<Order> next(const GenerationContext& ctx, Rng& rng) override {
    TokenContext tc{recent_, ctx.state};
    return sample_order(*model_, tc, *ctx.book, ctx.mid, codec_, rng, ctx.target, ctx.lambda);
  }

  void observe(const Order& order, Ticks mid) override {
    recent_.push_back(encode_order(order, mid, codec_));
    if (recent_.size() > static_cast<std::size_t>(model_->depth())) recent_.erase(recent_.begin());
  }

private:
  std::shared_ptr<const CountModel> model_;
  CodecConfig codec_;
  std::vector<OrderToken> recent_;
};

} // namespace

ReplayFlowModel::ReplayFlowModel(std::vector<Order> orders)
    : orders_(std::make_shared<const std::vector<Order>>(std::move(orders))) {}

std::unique_ptr<OrderGenerator> ReplayFlowModel::start(const CodecConfig&) const {
  return std::make_unique<ReplayGenerator>(orders_);
}

std::unique_ptr<OrderGenerator> NoiseFlowModel::start(const CodecConfig&) const {
  return std::make_unique<NoiseGenerator>(params_);
}

CountFlowModel::CountFlowModel(std::shared_ptr<const CountModel> model, std::shared_ptr<const BatchModel> batches)
    : model_(std::move(model)), batches_(std::move(batches)) {
  if (!model_) throw Error("count flow: missing count model");
}

std::unique_ptr<OrderGenerator> CountFlowModel::start(const CodecConfig& codec) const {
  return std::make_unique<CountGenerator>(model_, codec);
}

} // namespace mars
