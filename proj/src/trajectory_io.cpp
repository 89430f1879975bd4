#include "mars/trajectory_io.hpp"

#include "mars/csv.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace mars {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw Error("bad hex digest '" + s + "'");
  return v;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return in;
}

template <typename T>
std::string opt(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(*v);
  } else {
    return std::to_string(*v);
  }
}

// Reads rows after checking the header; `fn` gets the split fields.
template <typename Fn>
void read_rows(const std::filesystem::path& p, const char* header, std::size_t fields, Fn fn) {
  auto in = open_in(p);
  std::string line;
  if (!std::getline(in, line)) throw Error(p.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw Error(p.string() + ": unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != fields)
      throw Error(p.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(fields) + " fields");
    try {
      fn(f);
    } catch (const std::exception& e) {
      throw Error(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

} // namespace

void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "events.csv");
    out << kEventsHeader << '\n';
    for (const auto& e : traj.events) {
      out << e.seq << ',' << e.time << ',' << kind_code(e.order.kind) << ',' << e.order.price << ',' << e.order.volume
          << ',' << source_name(e.order.source) << ',' << e.order.target << ',' << e.order.id << ','
          << e.order.interval << '\n';
    }
  }
  {
    auto out = open_out(dir / "trades.csv");
    out << kTradesHeader << '\n';
    for (const auto& t : traj.trades) {
      out << t.trade.sequence << ',' << t.time << ',' << t.trade.price << ',' << t.trade.volume << ','
          << (t.trade.aggressor == Side::Buy ? "buy" : "sell") << ',' << t.trade.maker << ',' << t.trade.taker << '\n';
    }
  }
  {
    auto out = open_out(dir / "minutes.csv");
    out << kMinutesHeader << '\n';
    for (const auto& m : traj.minutes) {
      out << m.minute << ',' << m.open_mid2 << ',' << m.close_mid2 << ',' << m.volume << ',' << m.agent_volume << ','
          << m.trade_count << ',' << opt(m.last_trade) << ',' << opt(m.mean_trade) << ',' << m.orders << ',' << m.bids
          << ',' << m.asks << ',' << m.cancels << ',' << m.injected << ',' << m.ask_depth << ',' << m.bid_depth << ','
          << opt(m.implied_return) << ',' << opt(m.control_target) << '\n';
    }
  }
  {
    auto out = open_out(dir / "spreads.csv");
    out << "minute,spread_ticks\n";
    for (const auto& m : traj.minutes)
      for (auto s : m.spreads) out << m.minute << ',' << s << '\n';
  }
  {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& m : traj.minutes) keys.push_back(m.key ? nlohmann::json(*m.key) : nlohmann::json(nullptr));
    nlohmann::json j = {{"format", "mars-trajectory"},
                        {"version", 1},
                        {"instrument", traj.instrument},
                        {"seed", traj.seed},
                        {"config_hash", hex64(traj.config_hash)},
                        {"horizon_minutes", traj.horizon_minutes},
                        {"starting_events", traj.starting_events},
                        {"events", traj.events.size()},
                        {"trades", traj.trades.size()},
                        {"final_book_hash", hex64(traj.final_book_hash)},
                        {"minute_keys", keys}};
    auto out = open_out(dir / "trajectory.json");
    out << j.dump(2) << '\n';
  }
}

Trajectory read_trajectory(const std::filesystem::path& dir) {
  Trajectory t;
  nlohmann::json j;
  {
    auto in = open_in(dir / "trajectory.json");
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw Error((dir / "trajectory.json").string() + ": " + e.what());
    }
  }
  if (j.value("format", "") != "mars-trajectory") throw Error((dir / "trajectory.json").string() + ": not a trajectory manifest");
  t.instrument = j.at("instrument").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.config_hash = parse_hex64(j.at("config_hash").get<std::string>());
  t.horizon_minutes = j.at("horizon_minutes").get<int>();
  t.starting_events = j.at("starting_events").get<std::size_t>();
  t.final_book_hash = parse_hex64(j.at("final_book_hash").get<std::string>());

  read_rows(dir / "events.csv", kEventsHeader, 9, [&](const std::vector<std::string>& f) {
    Event e;
    e.seq = static_cast<std::uint64_t>(parse_int(f[0]));
    e.time = parse_int(f[1]);
    if (f[2].size() != 1) throw Error("bad kind '" + f[2] + "'");
    e.order.kind = kind_from_code(f[2][0]);
    e.order.price = parse_int(f[3]);
    e.order.volume = parse_int(f[4]);
    e.order.source = source_from_name(f[5]);
    e.order.target = static_cast<OrderId>(std::stoull(f[6]));
    e.order.id = static_cast<OrderId>(std::stoull(f[7]));
    e.order.interval = parse_int(f[8]);
    t.events.push_back(e);
  });
  read_rows(dir / "trades.csv", kTradesHeader, 7, [&](const std::vector<std::string>& f) {
    TimedTrade tr;
    tr.trade.sequence = static_cast<std::uint64_t>(parse_int(f[0]));
    tr.time = parse_int(f[1]);
    tr.trade.price = parse_int(f[2]);
    tr.trade.volume = parse_int(f[3]);
    if (f[4] != "buy" && f[4] != "sell") throw Error("bad aggressor '" + f[4] + "'");
    tr.trade.aggressor = f[4] == "buy" ? Side::Buy : Side::Sell;
    tr.trade.maker = static_cast<OrderId>(std::stoull(f[5]));
    tr.trade.taker = static_cast<OrderId>(std::stoull(f[6]));
    t.trades.push_back(tr);
  });
  read_rows(dir / "minutes.csv", kMinutesHeader, 17, [&](const std::vector<std::string>& f) {
    MinuteRecord m;
    m.minute = parse_int(f[0]);
    m.open_mid2 = parse_int(f[1]);
    m.close_mid2 = parse_int(f[2]);
    m.volume = parse_int(f[3]);
    m.agent_volume = parse_int(f[4]);
    m.trade_count = static_cast<std::uint64_t>(parse_int(f[5]));
    if (!f[6].empty()) m.last_trade = parse_int(f[6]);
    if (!f[7].empty()) m.mean_trade = parse_double(f[7]);
    m.orders = static_cast<std::uint64_t>(parse_int(f[8]));
    m.bids = static_cast<std::uint64_t>(parse_int(f[9]));
    m.asks = static_cast<std::uint64_t>(parse_int(f[10]));
    m.cancels = static_cast<std::uint64_t>(parse_int(f[11]));
    m.injected = static_cast<std::uint64_t>(parse_int(f[12]));
    m.ask_depth = parse_int(f[13]);
    m.bid_depth = parse_int(f[14]);
    if (!f[15].empty()) m.implied_return = parse_double(f[15]);
    if (!f[16].empty()) m.control_target = parse_double(f[16]);
    t.minutes.push_back(m);
  });
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < t.minutes.size(); ++i) index[t.minutes[i].minute] = i;
  read_rows(dir / "spreads.csv", "minute,spread_ticks", 2, [&](const std::vector<std::string>& f) {
    auto it = index.find(parse_int(f[0]));
    if (it == index.end()) throw Error("spread for unknown minute " + f[0]);
    t.minutes[it->second].spreads.push_back(parse_int(f[1]));
  });
  if (const auto& keys = j.value("minute_keys", nlohmann::json::array()); keys.size() == t.minutes.size()) {
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (!keys[i].is_null()) t.minutes[i].key = keys[i].get<BatchKey>();
  }
  return t;
}

} // namespace mars
