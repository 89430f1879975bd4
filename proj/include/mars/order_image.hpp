#pragma once

#include "mars/token_codec.hpp"
#include "mars/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace mars {

inline constexpr int kImageChannels = 3;
inline constexpr int kImageHeight = kVolumeBuckets; // volume slots
inline constexpr int kImageWidth = kPriceBuckets;   // price slots
inline constexpr int kImageCells = kImageChannels * kImageHeight * kImageWidth;
inline constexpr std::uint8_t kMaxCellCount = 100;

/// Image channels: Bid = 0, Ask = 1, Cancel = 2.
int image_channel(OrderKind kind) noexcept;
OrderKind channel_kind(int channel) noexcept;

/// One minute of orders as a 3x32x32 count grid, clipped to [0, 100] per cell.
struct OrderImage {
  std::array<std::uint8_t, kImageCells> cells{};
  Ticks ref_mid{0};
  std::int64_t minute{0};

  static constexpr std::size_t offset(int channel, int h, int w) noexcept {
    return static_cast<std::size_t>((channel * kImageHeight + h) * kImageWidth + w);
  }
  std::uint8_t at(int channel, int h, int w) const noexcept { return cells[offset(channel, h, w)]; }
  std::uint8_t& at(int channel, int h, int w) noexcept { return cells[offset(channel, h, w)]; }
  std::int64_t total() const noexcept;

  friend bool operator==(const OrderImage&, const OrderImage&) = default;
};

OrderImage batch_to_image(std::span<const Order> orders, Ticks ref_mid, const CodecConfig& cfg,
                          std::int64_t minute = 0);

/// Emits `value` orders per cell with prices and volumes drawn uniformly inside
/// the slot ranges, then shuffles arrival order. Intervals spread the batch
/// evenly over one minute.
std::vector<Order> image_to_batch(const OrderImage& img, std::uint64_t seed, const CodecConfig& cfg);

struct ImageStats {
  std::int64_t order_count{0};
  std::optional<double> buy_ratio;
  double net_pressure{0.0};
};

/// order_count = sum of cells; buy_ratio = bids / (bids + asks);
/// net_pressure = sum over Bid cells of v*(w-16) minus the same over Ask cells.
ImageStats implied_stats(const OrderImage& img) noexcept;

/// Raw 3*32*32 byte grid plus `<path>.json` sidecar holding ref_mid and minute.
void write_image(const std::filesystem::path& path, const OrderImage& img);
OrderImage read_image(const std::filesystem::path& path);

/// Debug export: channels mapped to R/G/B, one pixel per cell (scaled 0..100 -> 0..250).
void write_image_png(const std::filesystem::path& path, const OrderImage& img);

} // namespace mars
