#pragma once

#include "mars/analytics.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mars {

struct StylizedConfig {
  int max_lag{10};
  int coarse_interval{5};     // aggregation step for the Gaussianity check
  double extreme_quantile{0.99};
  std::size_t fano_window{100};
  double heavy_tail_kurtosis{1.0}; // excess kurtosis above this counts as heavy
  int timescale_block{5};     // returns per fine/coarse volatility block
  int timescale_lags{10};
};

struct FactResult {
  int number{0};
  std::string name;
  std::vector<std::pair<std::string, double>> statistics;
  std::optional<bool> present; // absent when the data cannot decide
  std::string note;

  std::optional<double> statistic(const std::string& key) const;
};

struct StylizedReport {
  std::string instrument;
  std::size_t observations{0};
  std::vector<FactResult> facts; // always 11, numbered 1..11

  const FactResult& fact(int number) const;
};

/// Evaluates all 11 facts on one return series. Missing inputs (volumes,
/// minute-of-day slots, too few points) make the affected facts absent.
StylizedReport stylized_report(const ReturnSeries& r, const StylizedConfig& cfg = {});
/// Per-instrument reports averaged statistic-wise; a fact is present when a
/// strict majority of the instruments that could decide show it.
StylizedReport aggregate_reports(std::span<const StylizedReport> reports);

/// Returns divided by the standard deviation of their minute-of-day slot.
/// Slots with fewer than two observations or zero spread are dropped.
std::vector<double> normalize_by_slot(std::span<const double> x, std::span<const int> slots);

nlohmann::json to_json(const StylizedReport& r);

} // namespace mars
