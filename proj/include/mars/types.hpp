#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mars {

using Ticks = std::int64_t;
using Volume = std::int64_t;
using TimeMs = std::int64_t;
using OrderId = std::uint64_t;
using InstrumentId = std::uint32_t;

inline constexpr TimeMs kMillisPerMinute = 60'000;

enum class OrderKind : std::uint8_t { Ask = 0, Bid = 1, Cancel = 2 };
enum class OrderSource : std::uint8_t { Generated = 0, Injected = 1, Replay = 2 };
enum class Side : std::uint8_t { Buy = 0, Sell = 1 };

/// One market event. Prices are integer ticks; `interval` is the time since
/// the previous event. A Cancel with a nonzero `target` removes volume from
/// that specific resting order instead of the oldest order at `price`.
struct Order {
  OrderId id{0};
  InstrumentId instrument{0};
  OrderKind kind{OrderKind::Bid};
  Ticks price{0};
  Volume volume{0};
  TimeMs interval{0};
  OrderSource source{OrderSource::Generated};
  OrderId target{0};

  friend bool operator==(const Order&, const Order&) = default;
};

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

char kind_code(OrderKind kind) noexcept;
OrderKind kind_from_code(char code);
std::string_view source_name(OrderSource source) noexcept;
OrderSource source_from_name(std::string_view name);

inline Side side_of(OrderKind kind) noexcept {
  return kind == OrderKind::Bid ? Side::Buy : Side::Sell;
}

} // namespace mars
