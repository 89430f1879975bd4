#pragma once

#include "mars/order_image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mars {

/// One realized minute: its orders and the mids bracketing it (integer ticks).
struct MinuteBatch {
  std::vector<Order> orders;
  Ticks open_mid{0};
  Ticks close_mid{0};
  std::int64_t minute{0};
};

inline constexpr std::size_t kBatchKeyDims = 5;
using BatchKey = std::array<double, kBatchKeyDims>;

/// Retrieval key of a minute: log1p(count), buy ratio (0.5 when undefined),
/// net pressure per order, cancel share, minute return in bp.
BatchKey summarize_minute(const OrderImage& img, double minute_return) noexcept;
inline double minute_return(Ticks open_mid, Ticks close_mid) noexcept {
  return open_mid > 0 ? static_cast<double>(close_mid - open_mid) / static_cast<double>(open_mid) : 0.0;
}

/// Library of minute transitions (summary of minute m -> image of minute m+1),
/// sampled by nearest-neighbour retrieval plus a multiplicative cell jitter.
class BatchModel {
public:
  struct Entry {
    BatchKey key{};
    OrderImage successor;
    double successor_return{0.0};
  };

  BatchModel() = default;
  BatchModel(std::vector<Entry> entries, double perturbation);

  static BatchModel build(std::span<const MinuteBatch> minutes, const CodecConfig& cfg, double perturbation = 0.1);

  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  double perturbation() const noexcept { return perturbation_; }
  void set_perturbation(double p) noexcept { perturbation_ = p; }

  /// Library indices ordered by scaled distance to `query`, ties by index.
  std::vector<std::size_t> rank(const BatchKey& query) const;

  /// Candidate i is the (i mod L)-th nearest successor, jittered with its own
  /// seed derived from (seed, i). Throws on an empty library.
  std::vector<OrderImage> generate_candidates(const BatchKey& query, int n, std::uint64_t seed) const;

  /// Linear map from an image's net pressure to a minute return, fit by least
  /// squares on the library's successor images.
  double implied_return(const OrderImage& img) const noexcept;
  double calibration_intercept() const noexcept { return intercept_; }
  double calibration_slope() const noexcept { return slope_; }

  /// Binary "MARSBM1" file plus `<path>.json` manifest.
  void save(const std::filesystem::path& path) const;
  static BatchModel load(const std::filesystem::path& path);

private:
  void calibrate();

  std::vector<Entry> entries_;
  BatchKey scale_{};
  double perturbation_{0.1};
  double intercept_{0.0};
  double slope_{0.0};
};

} // namespace mars
