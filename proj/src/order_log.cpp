#include "mars/order_log.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace mars {

namespace {

constexpr std::string_view kHeader = "seq,timestamp_ms,kind,price_ticks,volume";

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw Error("order log line " + std::to_string(line) + ": bad " + name + " '" + std::string(field) + "'");
  return value;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf{};
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xffU);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

} // namespace

std::vector<LogRecord> read_order_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("order log: missing header '" + std::string(kHeader) + "'");
  // extra trailing columns (simulate's events.csv) are allowed and ignored
  const std::string_view head = trim_cr(line);
  if (head != kHeader && !(head.starts_with(kHeader) && head[kHeader.size()] == ','))
    throw Error("order log: missing header '" + std::string(kHeader) + "'");
  const auto columns = static_cast<std::size_t>(std::count(head.begin(), head.end(), ',')) + 1;
  std::vector<LogRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view rest = trim_cr(line);
    if (rest.empty()) continue;
    std::array<std::string_view, 5> f;
    for (std::size_t i = 0; i < columns; ++i) {
      const auto comma = rest.find(',');
      if ((comma == std::string_view::npos) != (i + 1 == columns))
        throw Error("order log line " + std::to_string(lineno) + ": expected " + std::to_string(columns) + " fields");
      if (i < f.size()) f[i] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (f[2].size() != 1)
      throw Error("order log line " + std::to_string(lineno) + ": bad kind '" + std::string(f[2]) + "'");
    LogRecord r;
    r.seq = parse_field<std::uint64_t>(f[0], lineno, "seq");
    r.timestamp = parse_field<std::uint64_t>(f[1], lineno, "timestamp_ms");
    r.kind = kind_from_code(f[2][0]);
    r.price = parse_field<Ticks>(f[3], lineno, "price_ticks");
    r.volume = parse_field<Volume>(f[4], lineno, "volume");
    out.push_back(r);
  }
  return out;
}

std::vector<LogRecord> read_order_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open order log " + path.string());
  return read_order_log_csv(in);
}

void write_order_log_csv(std::ostream& out, const std::vector<LogRecord>& records) {
  out << kHeader << '\n';
  for (const auto& r : records)
    out << r.seq << ',' << r.timestamp << ',' << kind_code(r.kind) << ',' << r.price << ',' << r.volume << '\n';
}

void write_order_log_csv(const std::filesystem::path& path, const std::vector<LogRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write order log " + path.string());
  write_order_log_csv(out, records);
}

std::vector<LogRecord> read_order_log_binary(std::istream& in) {
  std::vector<LogRecord> out;
  std::array<unsigned char, kBinaryRecordSize> buf{};
  while (true) {
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    if (got != buf.size()) throw Error("order log: truncated binary record " + std::to_string(out.size()));
    LogRecord r;
    r.seq = get_le<std::uint64_t>(buf.data());
    r.timestamp = get_le<std::uint64_t>(buf.data() + 8);
    const auto kind = buf[16];
    if (kind > 2) throw Error("order log: bad binary kind " + std::to_string(kind));
    r.kind = static_cast<OrderKind>(kind);
    r.price = get_le<std::int64_t>(buf.data() + 17);
    r.volume = static_cast<Volume>(get_le<std::uint64_t>(buf.data() + 25));
    out.push_back(r);
  }
  return out;
}

std::vector<LogRecord> read_order_log_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open order log " + path.string());
  return read_order_log_binary(in);
}

void write_order_log_binary(std::ostream& out, const std::vector<LogRecord>& records) {
  for (const auto& r : records) {
    put_le<std::uint64_t>(out, r.seq);
    put_le<std::uint64_t>(out, r.timestamp);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.kind));
    put_le<std::int64_t>(out, r.price);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.volume));
  }
}

void write_order_log_binary(const std::filesystem::path& path, const std::vector<LogRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write order log " + path.string());
  write_order_log_binary(out, records);
}

std::vector<LogRecord> read_order_log(const std::filesystem::path& path) {
  if (path.extension() == ".bin") return read_order_log_binary(path);
  return read_order_log_csv(path);
}

std::vector<Order> to_orders(const std::vector<LogRecord>& records, std::optional<std::uint64_t> origin,
                             OrderSource source) {
  std::vector<Order> out;
  out.reserve(records.size());
  std::uint64_t prev = origin.value_or(records.empty() ? 0 : records.front().timestamp);
  for (const auto& r : records) {
    if (r.timestamp < prev) throw Error("order log: timestamps decrease at seq " + std::to_string(r.seq));
    Order o;
    o.id = r.seq;
    o.kind = r.kind;
    o.price = r.price;
    o.volume = r.volume;
    o.interval = static_cast<TimeMs>(r.timestamp - prev);
    o.source = source;
    out.push_back(o);
    prev = r.timestamp;
  }
  return out;
}

std::vector<LogRecord> to_records(const std::vector<Order>& orders, std::uint64_t origin) {
  std::vector<LogRecord> out;
  out.reserve(orders.size());
  std::uint64_t ts = origin;
  for (const auto& o : orders) {
    ts += static_cast<std::uint64_t>(o.interval);
    out.push_back(LogRecord{o.id, ts, o.kind, o.price, o.volume});
  }
  return out;
}

} // namespace mars
