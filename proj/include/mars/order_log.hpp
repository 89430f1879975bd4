#pragma once

#include "mars/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mars {

/// One row of an order log: `seq,timestamp_ms,kind,price_ticks,volume`.
struct LogRecord {
  std::uint64_t seq{0};
  std::uint64_t timestamp{0};
  OrderKind kind{OrderKind::Bid};
  Ticks price{0};
  Volume volume{0};

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

inline constexpr std::size_t kBinaryRecordSize = 8 + 8 + 1 + 8 + 8;

std::vector<LogRecord> read_order_log_csv(std::istream& in);
std::vector<LogRecord> read_order_log_csv(const std::filesystem::path& path);
void write_order_log_csv(std::ostream& out, const std::vector<LogRecord>& records);
void write_order_log_csv(const std::filesystem::path& path, const std::vector<LogRecord>& records);

/// Fixed-width little-endian records: u64 seq, u64 ts, u8 kind, i64 price, u64 volume.
std::vector<LogRecord> read_order_log_binary(std::istream& in);
std::vector<LogRecord> read_order_log_binary(const std::filesystem::path& path);
void write_order_log_binary(std::ostream& out, const std::vector<LogRecord>& records);
void write_order_log_binary(const std::filesystem::path& path, const std::vector<LogRecord>& records);

/// Reads either format, chosen by extension (`.bin` is binary, anything else CSV).
std::vector<LogRecord> read_order_log(const std::filesystem::path& path);

/// Converts log rows to orders. Intervals are measured from `origin`
/// (defaults to the first row's timestamp); ids are the row sequence numbers.
std::vector<Order> to_orders(const std::vector<LogRecord>& records,
                             std::optional<std::uint64_t> origin = std::nullopt,
                             OrderSource source = OrderSource::Replay);

/// Inverse of to_orders: timestamps accumulate intervals from `origin`.
std::vector<LogRecord> to_records(const std::vector<Order>& orders, std::uint64_t origin = 0);

} // namespace mars
