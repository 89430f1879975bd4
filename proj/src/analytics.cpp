#include "mars/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mars {

ReturnSeries returns_from(const Trajectory& traj, PriceBasis basis) {
  ReturnSeries r;
  r.instrument = traj.instrument;
  r.basis = basis;
  std::optional<double> prev;
  std::optional<double> carried;
  for (const auto& m : traj.minutes) {
    std::optional<double> p;
    if (basis == PriceBasis::LastTrade && m.last_trade) p = static_cast<double>(*m.last_trade);
    if (basis == PriceBasis::MeanTrade && m.mean_trade) p = *m.mean_trade;
    if (p) carried = p;
    const double price = carried.value_or(m.close_mid());
    if (prev && *prev > 0.0 && price > 0.0) {
      r.values.push_back(std::log(price / *prev));
      r.volumes.push_back(static_cast<double>(m.volume));
      r.minute_of_day.push_back(static_cast<int>(m.minute));
    }
    prev = price;
  }
  return r;
}

ReturnSeries aggregate_returns(const ReturnSeries& r, int k) {
  if (k < 1) throw Error("aggregate_returns: k must be >= 1");
  ReturnSeries out;
  out.instrument = r.instrument;
  out.basis = r.basis;
  out.interval_minutes = r.interval_minutes * k;
  const auto uk = static_cast<std::size_t>(k);
  const bool vols = r.volumes.size() == r.values.size();
  const bool slots = r.minute_of_day.size() == r.values.size();
  for (std::size_t i = 0; i + uk <= r.values.size(); i += uk) {
    double s = 0.0, v = 0.0;
    for (std::size_t j = i; j < i + uk; ++j) {
      s += r.values[j];
      if (vols) v += r.volumes[j];
    }
    out.values.push_back(s);
    if (vols) out.volumes.push_back(v);
    if (slots) out.minute_of_day.push_back(r.minute_of_day[i]);
  }
  return out;
}

std::optional<double> mean(std::span<const double> x) {
  if (x.empty()) return std::nullopt;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::optional<double> variance(std::span<const double> x) {
  if (x.size() < 2) return std::nullopt;
  const double m = *mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

std::optional<double> correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("correlation: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double mx = *mean(x), my = *mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw Error("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile: q outside [0,1]");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double h = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::vector<std::optional<double>> autocorr(std::span<const double> x, int max_lag) {
  if (max_lag < 1) throw Error("autocorr: max_lag must be >= 1");
  std::vector<std::optional<double>> out(static_cast<std::size_t>(max_lag));
  if (x.size() <= static_cast<std::size_t>(max_lag)) throw Error("autocorr: series shorter than max lag + 1");
  // exact test: the mean of a constant series can be off by an ulp
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return out;
  const double m = *mean(x);
  double denom = 0.0;
  for (double v : x) denom += (v - m) * (v - m);
  if (!(denom > 0.0)) return out;
  for (int h = 1; h <= max_lag; ++h) {
    double s = 0.0;
    for (std::size_t t = static_cast<std::size_t>(h); t < x.size(); ++t) s += (x[t] - m) * (x[t - static_cast<std::size_t>(h)] - m);
    out[static_cast<std::size_t>(h - 1)] = s / denom;
  }
  return out;
}

std::vector<std::optional<double>> volatility_clustering(std::span<const double> x, int max_lag) {
  std::vector<double> a(x.size());
  std::transform(x.begin(), x.end(), a.begin(), [](double v) { return std::abs(v); });
  return autocorr(a, max_lag);
}

std::optional<Moments> moments(std::span<const double> x) {
  if (x.size() < 4) return std::nullopt;
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double m = *mean(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) return std::nullopt;
  return Moments{m4 / (m2 * m2) - 3.0, m3 / std::pow(m2, 1.5)};
}

std::optional<double> fano_factor_counts(std::span<const double> counts) {
  if (counts.size() < 2) return std::nullopt;
  const double m = *mean(counts);
  if (!(m > 0.0)) return std::nullopt;
  return *variance(counts) / m;
}

std::optional<double> fano_factor(std::span<const double> x, double q, std::size_t window) {
  if (window < 1) throw Error("fano_factor: window must be >= 1");
  if (x.empty()) return std::nullopt;
  std::vector<double> a(x.size());
  std::transform(x.begin(), x.end(), a.begin(), [](double v) { return std::abs(v); });
  const double thr = quantile(a, q);
  std::vector<double> counts;
  for (std::size_t i = 0; i + window <= a.size(); i += window) {
    double c = 0.0;
    for (std::size_t j = i; j < i + window; ++j) c += a[j] > thr ? 1.0 : 0.0;
    counts.push_back(c);
  }
  return fano_factor_counts(counts);
}

std::vector<double> pooled_edges(std::span<const double> a, std::span<const double> b, int bins) {
  if (bins < 1) throw Error("pooled_edges: bins must be >= 1");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto s : {a, b})
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) throw Error("pooled_edges: both samples empty");
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  edges.back() = hi;
  return edges;
}

Histogram histogram(std::span<const double> x, std::span<const double> edges) {
  if (edges.size() < 2) throw Error("histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw Error("histogram: edges must be strictly increasing");
  if (x.empty()) throw Error("histogram: empty sample");
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.masses.assign(edges.size() - 1, 0.0);
  for (double v : x) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto bin = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.masses.size()) - 1);
    h.masses[static_cast<std::size_t>(bin)] += 1.0;
  }
  for (auto& m : h.masses) m /= static_cast<double>(x.size());
  return h;
}

double overlap_coefficient(const Histogram& a, const Histogram& b) {
  if (a.edges != b.edges || a.masses.size() != b.masses.size()) throw Error("overlap_coefficient: histograms do not share edges");
  double s = 0.0;
  for (std::size_t i = 0; i < a.masses.size(); ++i) s += std::min(a.masses[i], b.masses[i]);
  return std::clamp(s, 0.0, 1.0);
}

Level ThreeClass::classify(double v) const noexcept {
  if (v < low) return Level::Low;
  if (v > high) return Level::High;
  return Level::Medium;
}

ThreeClass three_class(std::span<const double> train) {
  if (train.empty()) throw Error("three_class: empty training set");
  ThreeClass t{quantile(train, 1.0 / 3.0), quantile(train, 2.0 / 3.0)};
  if (!(t.high > t.low)) throw Error("three_class: degenerate training distribution (tertiles coincide)");
  return t;
}

std::string trend_name(Trend t) {
  switch (t) {
  case Trend::Down: return "down";
  case Trend::Flat: return "flat";
  case Trend::Up: return "up";
  }
  return "flat";
}

double forecast_label(std::span<const double> mids) {
  if (mids.size() < 2) throw Error("forecast_label: need m_0 and at least one future mid");
  const double m0 = mids[0];
  if (!(m0 > 0.0)) throw Error("forecast_label: m_0 must be positive");
  const double future = std::accumulate(mids.begin() + 1, mids.end(), 0.0) / static_cast<double>(mids.size() - 1);
  return (future - m0) / m0;
}

Trend classify_trend(double label, const ThreeClass& thresholds) noexcept {
  switch (thresholds.classify(label)) {
  case Level::Low: return Trend::Down;
  case Level::High: return Trend::Up;
  case Level::Medium: return Trend::Flat;
  }
  return Trend::Flat;
}

Trend aggregate_forecast(std::span<const Trend> votes) {
  if (votes.empty()) throw Error("aggregate_forecast: no votes");
  std::array<int, 3> n{};
  for (auto v : votes) ++n[static_cast<std::size_t>(v)];
  const int top = *std::max_element(n.begin(), n.end());
  if (std::count(n.begin(), n.end(), top) > 1) return Trend::Flat;
  return static_cast<Trend>(std::max_element(n.begin(), n.end()) - n.begin());
}

AnomalyResult detect_anomaly(const Histogram& sim, const Histogram& replay, double threshold) {
  const double s = overlap_coefficient(sim, replay);
  return AnomalyResult{s, s < threshold};
}

} // namespace mars
