#pragma once

#include "mars/sim_engine.hpp"

#include <json.hpp>

#include <filesystem>

namespace mars {

/// Writes events.csv, trades.csv, minutes.csv, spreads.csv and
/// trajectory.json into `dir` (created if needed). The content is a pure
/// function of the trajectory, so identical runs give identical bytes.
void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& dir);

/// Order-log columns, then source, cancel target, order id and interval.
inline constexpr const char* kEventsHeader =
    "seq,timestamp_ms,kind,price_ticks,volume,source,target_id,order_id,interval_ms";
inline constexpr const char* kTradesHeader = "seq,timestamp_ms,price_ticks,volume,aggressor,maker_id,taker_id";
inline constexpr const char* kMinutesHeader =
    "minute,open_mid2,close_mid2,volume,agent_volume,trades,last_trade,mean_trade,orders,bids,asks,cancels,injected,"
    "ask_depth,bid_depth,implied_return,control_target";

/// Hex form of a 64-bit digest, as used in manifests.
std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(const std::string& s);

} // namespace mars
