#include "mars/token_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mars {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) noexcept { return -floor_div(-a, b); }

template <typename T>
int bucket_of(const std::vector<T>& edges, T value) noexcept {
  auto it = std::upper_bound(edges.begin(), edges.end(), value);
  if (it == edges.begin()) return 0;
  return static_cast<int>(it - edges.begin()) - 1;
}

template <typename T>
std::vector<T> geometric_edges(T first, double lo, double hi, std::size_t count) {
  // edges[0] = first, edges[1..count-1] geometric from lo to hi
  std::vector<T> edges{first};
  const double ratio = std::pow(hi / lo, 1.0 / static_cast<double>(count - 2));
  double v = lo;
  for (std::size_t i = 1; i < count; ++i, v *= ratio) {
    auto e = static_cast<T>(std::llround(v));
    edges.push_back(std::max(e, edges.back() + 1));
  }
  return edges;
}

template <typename T>
std::vector<T> quantile_edges(std::span<const T> values, T first, std::size_t count) {
  std::vector<T> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<T> edges{first};
  for (std::size_t i = 1; i < count; ++i) {
    T q = first;
    if (!sorted.empty()) {
      const auto pos = (i * sorted.size()) / count;
      q = sorted[std::min(pos, sorted.size() - 1)];
    }
    edges.push_back(std::max(q, edges.back() + 1));
  }
  return edges;
}

template <typename T>
void check_edges(const std::vector<T>& edges, std::size_t expected, const char* name) {
  if (edges.size() != expected)
    throw Error(std::string("codec: ") + name + " needs " + std::to_string(expected) + " edges, got " +
                std::to_string(edges.size()));
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw Error(std::string("codec: ") + name + " edges not strictly increasing");
}

} // namespace

OrderToken OrderToken::from_index(std::int64_t index) {
  if (index < 0 || index >= kVocabularySize)
    throw Error("token index " + std::to_string(index) + " outside [0, " + std::to_string(kVocabularySize) + ")");
  return OrderToken(static_cast<std::uint32_t>(index));
}

CodecConfig CodecConfig::defaults() {
  CodecConfig cfg;
  cfg.volume_edges = geometric_edges<Volume>(1, 2.0, 100'000.0, kVolumeBuckets);
  cfg.interval_edges = geometric_edges<TimeMs>(0, 1.0, 60'000.0, kIntervalBuckets);
  return cfg;
}

CodecConfig CodecConfig::calibrate(std::span<const Volume> volumes, std::span<const TimeMs> intervals) {
  CodecConfig cfg;
  cfg.volume_edges = quantile_edges<Volume>(volumes, 1, kVolumeBuckets);
  cfg.interval_edges = quantile_edges<TimeMs>(intervals, 0, kIntervalBuckets);
  cfg.validate();
  return cfg;
}

void CodecConfig::validate() const {
  if (half_width < 1) throw Error("codec: half_width must be >= 1");
  check_edges(volume_edges, kVolumeBuckets, "volume");
  check_edges(interval_edges, kIntervalBuckets, "interval");
}

int CodecConfig::price_bucket(Ticks price, Ticks mid) const noexcept {
  const auto slot = floor_div((price - mid) * (kPriceBuckets / 2), half_width) + kPriceBuckets / 2;
  return static_cast<int>(std::clamp<std::int64_t>(slot, 0, kPriceBuckets - 1));
}

int CodecConfig::volume_bucket(Volume volume) const noexcept { return bucket_of(volume_edges, volume); }

int CodecConfig::interval_bucket(TimeMs interval) const noexcept { return bucket_of(interval_edges, interval); }

std::pair<Ticks, Ticks> CodecConfig::price_range(int bucket, Ticks mid) const noexcept {
  constexpr std::int64_t half = kPriceBuckets / 2;
  const std::int64_t b = bucket - half;
  Ticks lo = bucket == 0 ? -2 * half_width : ceil_div(b * half_width, half);
  Ticks hi = bucket == kPriceBuckets - 1 ? 2 * half_width : ceil_div((b + 1) * half_width, half) - 1;
  lo = std::max<Ticks>(mid + lo, 1);
  hi = std::max<Ticks>(mid + hi, lo);
  return {lo, hi};
}

std::pair<Volume, Volume> CodecConfig::volume_range(int bucket) const noexcept {
  const auto b = static_cast<std::size_t>(bucket);
  const Volume lo = std::max<Volume>(volume_edges[b], 1);
  const Volume hi = b + 1 < volume_edges.size() ? volume_edges[b + 1] - 1 : 2 * volume_edges[b];
  return {lo, std::max(lo, hi)};
}

std::pair<TimeMs, TimeMs> CodecConfig::interval_range(int bucket) const noexcept {
  const auto b = static_cast<std::size_t>(bucket);
  const TimeMs lo = std::max<TimeMs>(interval_edges[b], 0);
  const TimeMs hi = b + 1 < interval_edges.size() ? interval_edges[b + 1] - 1 : 2 * interval_edges[b];
  return {lo, std::max(lo, hi)};
}

nlohmann::json to_json(const CodecConfig& cfg) {
  return nlohmann::json{{"half_width", cfg.half_width},
                        {"volume_edges", cfg.volume_edges},
                        {"interval_edges", cfg.interval_edges}};
}

CodecConfig codec_from_json(const nlohmann::json& j) {
  CodecConfig cfg;
  cfg.half_width = j.value("half_width", Ticks{16});
  cfg.volume_edges = j.at("volume_edges").get<std::vector<Volume>>();
  cfg.interval_edges = j.at("interval_edges").get<std::vector<TimeMs>>();
  cfg.validate();
  return cfg;
}

OrderToken make_token(const TokenFields& f) {
  const auto kind = static_cast<std::int64_t>(f.kind);
  return OrderToken::from_index(((kind * kPriceBuckets + f.price_bucket) * kVolumeBuckets + f.volume_bucket) *
                                    kIntervalBuckets +
                                f.interval_bucket);
}

OrderToken encode_order(const Order& order, Ticks mid, const CodecConfig& cfg) {
  return make_token(TokenFields{order.kind, cfg.price_bucket(order.price, mid), cfg.volume_bucket(order.volume),
                                cfg.interval_bucket(order.interval)});
}

TokenFields decode_token(OrderToken token) noexcept {
  auto i = static_cast<int>(token.index());
  TokenFields f;
  f.interval_bucket = i % kIntervalBuckets;
  i /= kIntervalBuckets;
  f.volume_bucket = i % kVolumeBuckets;
  i /= kVolumeBuckets;
  f.price_bucket = i % kPriceBuckets;
  f.kind = static_cast<OrderKind>(i / kPriceBuckets);
  return f;
}

TokenFields decode_index(std::int64_t index) { return decode_token(OrderToken::from_index(index)); }

LobFeature encode_lob(const LobSnapshot& snapshot, Ticks open_mid, const CodecConfig& cfg,
                      std::optional<Ticks> last_trade, std::optional<Ticks> reference) {
  LobFeature f;
  for (std::size_t i = 0; i < snapshot.ask_count; ++i)
    f.volume_bins[i] = static_cast<std::uint8_t>(cfg.volume_bucket(snapshot.asks[i].volume));
  for (std::size_t i = 0; i < snapshot.bid_count; ++i)
    f.volume_bins[kSnapshotDepth + i] = static_cast<std::uint8_t>(cfg.volume_bucket(snapshot.bids[i].volume));
  f.mid_offset = mid_ticks(twice_mid(snapshot, last_trade, reference)) - open_mid;
  return f;
}

} // namespace mars
