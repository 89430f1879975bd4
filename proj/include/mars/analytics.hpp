#pragma once

#include "mars/sim_engine.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mars {

enum class PriceBasis : std::uint8_t { LastTrade, MeanTrade };

struct ReturnSeries {
  std::string instrument;
  int interval_minutes{1};
  PriceBasis basis{PriceBasis::LastTrade};
  std::vector<double> values;       // log returns
  std::vector<double> volumes;      // traded volume over each return, optional
  std::vector<int> minute_of_day;   // slot of each return, optional
};

/// Log returns between consecutive minute prices of a trajectory. Minutes
/// without trades carry the previous price; before the first trade the
/// close mid is used.
ReturnSeries returns_from(const Trajectory& traj, PriceBasis basis = PriceBasis::LastTrade);
/// Sums non-overlapping blocks of k returns (volumes summed, slot of the first kept).
ReturnSeries aggregate_returns(const ReturnSeries& r, int k);

std::optional<double> mean(std::span<const double> x);
/// Sample variance with n - 1 in the denominator.
std::optional<double> variance(std::span<const double> x);
/// Pearson correlation; absent on zero variance or length < 2.
std::optional<double> correlation(std::span<const double> x, std::span<const double> y);
/// Linear interpolation between order statistics (numpy's default).
double quantile(std::span<const double> x, double q);

/// Sample autocorrelation at lags 1..max_lag (index 0 is lag 1), using the
/// full-sample mean and variance. Every entry is absent for a constant series.
std::vector<std::optional<double>> autocorr(std::span<const double> x, int max_lag);
/// autocorr of |x|.
std::vector<std::optional<double>> volatility_clustering(std::span<const double> x, int max_lag);

struct Moments {
  double excess_kurtosis{0.0}; // Fisher: normal -> 0
  double skewness{0.0};
};
/// Absent with fewer than four values or no variance.
std::optional<Moments> moments(std::span<const double> x);

/// Extreme events are |x| above the q-quantile of |x|; returns variance/mean
/// of their counts over non-overlapping windows. Absent with fewer than two
/// windows or no events.
std::optional<double> fano_factor(std::span<const double> x, double q, std::size_t window);
std::optional<double> fano_factor_counts(std::span<const double> counts);

struct Histogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<double> masses; // sum to 1
};

inline constexpr int kDefaultBins = 64;
/// Histogram of `x` over fixed edges; values outside are clamped into the end bins.
Histogram histogram(std::span<const double> x, std::span<const double> edges);
/// Equal-width edges over the pooled min..max of both samples.
std::vector<double> pooled_edges(std::span<const double> a, std::span<const double> b, int bins = kDefaultBins);
/// Sum of bin-wise minima. Throws when the edges differ.
double overlap_coefficient(const Histogram& a, const Histogram& b);

enum class Level : std::uint8_t { Low, Medium, High };
struct ThreeClass {
  double low{0.0};  // values below are Low
  double high{0.0}; // values above are High
  Level classify(double v) const noexcept;
};
/// Thresholds at the empirical tertiles. Throws if the train set is empty or degenerate.
ThreeClass three_class(std::span<const double> train);

enum class Trend : std::uint8_t { Down, Flat, Up };
std::string trend_name(Trend t);
/// (mean of m_1..m_n - m_0) / m_0. Throws on m_0 <= 0 or n < 1.
double forecast_label(std::span<const double> mids);
Trend classify_trend(double label, const ThreeClass& thresholds) noexcept;
/// Majority vote; any tie for the top count resolves to Flat.
Trend aggregate_forecast(std::span<const Trend> votes);

inline constexpr double kDefaultAnomalyThreshold = 0.87;
struct AnomalyResult {
  double score{1.0};
  bool flag{false};
};
AnomalyResult detect_anomaly(const Histogram& sim, const Histogram& replay, double threshold = kDefaultAnomalyThreshold);

} // namespace mars
