#pragma once

#include "mars/order_book.hpp"
#include "mars/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mars {

inline constexpr int kKindCount = 3;
inline constexpr int kPriceBuckets = 32;
inline constexpr int kVolumeBuckets = 32;
inline constexpr int kIntervalBuckets = 16;
inline constexpr int kVocabularySize = kKindCount * kPriceBuckets * kVolumeBuckets * kIntervalBuckets;

/// Index of one (kind, price, volume, interval) tuple in [0, 49152).
class OrderToken {
public:
  constexpr OrderToken() = default;
  /// Throws when index is outside the vocabulary.
  static OrderToken from_index(std::int64_t index);

  constexpr std::uint32_t index() const noexcept { return index_; }
  friend constexpr bool operator==(OrderToken, OrderToken) = default;
  friend constexpr auto operator<=>(OrderToken, OrderToken) = default;

private:
  constexpr explicit OrderToken(std::uint32_t index) : index_(index) {}
  std::uint32_t index_{0};
};

struct TokenFields {
  OrderKind kind{OrderKind::Ask};
  int price_bucket{0};
  int volume_bucket{0};
  int interval_bucket{0};

  friend bool operator==(const TokenFields&, const TokenFields&) = default;
};

/// Bucket edges are lower bounds: bucket i holds values in [edges[i], edges[i+1]).
/// Values below edges[0] fall in bucket 0; the last bucket is open-ended.
struct CodecConfig {
  Ticks half_width{16};
  std::vector<Volume> volume_edges;
  std::vector<TimeMs> interval_edges;

  /// Log-spaced defaults: volumes 1..1e5 shares, intervals 0 and 1..60000 ms.
  static CodecConfig defaults();
  /// Equal-mass edges from a corpus (quantile sweep), forced strictly increasing.
  static CodecConfig calibrate(std::span<const Volume> volumes, std::span<const TimeMs> intervals);

  /// Throws unless sizes are 32/16, edges strictly increasing and half_width >= 1.
  void validate() const;

  int price_bucket(Ticks price, Ticks mid) const noexcept;
  int volume_bucket(Volume volume) const noexcept;
  int interval_bucket(TimeMs interval) const noexcept;

  /// Inclusive value ranges covered by a bucket. The outermost price buckets
  /// and the last volume/interval buckets are open-ended; the returned range
  /// is a finite stand-in used for sampling.
  std::pair<Ticks, Ticks> price_range(int bucket, Ticks mid) const noexcept;
  std::pair<Volume, Volume> volume_range(int bucket) const noexcept;
  std::pair<TimeMs, TimeMs> interval_range(int bucket) const noexcept;

  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

nlohmann::json to_json(const CodecConfig& cfg);
CodecConfig codec_from_json(const nlohmann::json& j);

OrderToken make_token(const TokenFields& f);

/// Mixed-radix index ((kind*32 + price)*32 + volume)*16 + interval, with the
/// price bucket taken relative to `mid` and clamped into the window.
OrderToken encode_order(const Order& order, Ticks mid, const CodecConfig& cfg);
TokenFields decode_token(OrderToken token) noexcept;
TokenFields decode_index(std::int64_t index);

/// floor(twice_mid / 2): the integer mid used for price buckets.
inline constexpr Ticks mid_ticks(Ticks twice_mid) noexcept {
  return twice_mid >= 0 ? twice_mid / 2 : -((-twice_mid + 1) / 2);
}

inline constexpr std::size_t kLobFeatureBins = 2 * kSnapshotDepth;

/// Bucketed 10-level volumes (asks 0..9 then bids 0..9) and the mid offset
/// in ticks from the session's opening mid.
struct LobFeature {
  std::array<std::uint8_t, kLobFeatureBins> volume_bins{};
  Ticks mid_offset{0};

  friend bool operator==(const LobFeature&, const LobFeature&) = default;
};

LobFeature encode_lob(const LobSnapshot& snapshot, Ticks open_mid, const CodecConfig& cfg,
                      std::optional<Ticks> last_trade = std::nullopt,
                      std::optional<Ticks> reference = std::nullopt);

} // namespace mars
