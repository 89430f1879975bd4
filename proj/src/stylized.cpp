#include "mars/stylized.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mars {

std::optional<double> FactResult::statistic(const std::string& key) const {
  for (const auto& [k, v] : statistics)
    if (k == key) return v;
  return std::nullopt;
}

const FactResult& StylizedReport::fact(int number) const {
  for (const auto& f : facts)
    if (f.number == number) return f;
  throw Error("stylized report: no fact #" + std::to_string(number));
}

std::vector<double> normalize_by_slot(std::span<const double> x, std::span<const int> slots) {
  if (x.size() != slots.size()) throw Error("normalize_by_slot: length mismatch");
  std::map<int, std::vector<double>> by_slot;
  for (std::size_t i = 0; i < x.size(); ++i) by_slot[slots[i]].push_back(x[i]);
  std::map<int, double> sd;
  for (const auto& [s, v] : by_slot) {
    if (v.size() < 2) continue;
    const double var = *variance(v);
    if (var > 0.0) sd[s] = std::sqrt(var);
  }
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (auto it = sd.find(slots[i]); it != sd.end()) out.push_back(x[i] / it->second);
  return out;
}

namespace {

const char* const kNames[11] = {"Absence of autocorrelations",
                                "Heavy tails",
                                "Gain/loss asymmetry",
                                "Aggregational Gaussianity",
                                "Intermittency",
                                "Volatility clustering",
                                "Conditional heavy tails",
                                "Slow decay of autocorrelation in absolute returns",
                                "Leverage effect",
                                "Volume/volatility correlation",
                                "Asymmetry in timescales"};

FactResult make_fact(int n) {
  FactResult f;
  f.number = n;
  f.name = kNames[n - 1];
  return f;
}

std::vector<double> abs_of(std::span<const double> x) {
  std::vector<double> a(x.size());
  std::transform(x.begin(), x.end(), a.begin(), [](double v) { return std::abs(v); });
  return a;
}

// corr(x_t, y_{t+h}) for h >= 0, corr(x_{t-h}, y_t) style for h < 0 handled by swapping.
std::optional<double> lagged_corr(std::span<const double> x, std::span<const double> y, int h) {
  if (h < 0) return lagged_corr(y, x, -h);
  const auto uh = static_cast<std::size_t>(h);
  if (x.size() <= uh + 1) return std::nullopt;
  return correlation(x.subspan(0, x.size() - uh), y.subspan(uh, y.size() - uh));
}

} // namespace

StylizedReport stylized_report(const ReturnSeries& r, const StylizedConfig& cfg) {
  StylizedReport rep;
  rep.instrument = r.instrument;
  rep.observations = r.values.size();
  const std::span<const double> x = r.values;
  const double n = static_cast<double>(x.size());
  const double bound = n > 0 ? 3.0 / std::sqrt(n) : 0.0;
  const bool enough = x.size() > static_cast<std::size_t>(cfg.max_lag) + 1 && x.size() >= 4;
  for (int i = 1; i <= 11; ++i) rep.facts.push_back(make_fact(i));
  auto& f = rep.facts;
  if (!enough) {
    for (auto& fact : f) fact.note = "too few observations";
    return rep;
  }

  const auto ac = autocorr(x, cfg.max_lag);
  const auto vc = volatility_clustering(x, cfg.max_lag);
  const auto mom = moments(x);

  // 1: every lag inside the white-noise band
  if (ac[0]) {
    double worst = 0.0;
    for (std::size_t h = 0; h < ac.size(); ++h) {
      f[0].statistics.emplace_back("acf_lag" + std::to_string(h + 1), ac[h].value_or(0.0));
      worst = std::max(worst, std::abs(ac[h].value_or(0.0)));
    }
    f[0].statistics.emplace_back("max_abs_acf", worst);
    f[0].statistics.emplace_back("bound", bound);
    f[0].present = worst < bound;
  } else {
    f[0].note = "zero variance";
  }

  if (mom) {
    const double se_s = std::sqrt(6.0 / n);
    f[1].statistics = {{"excess_kurtosis", mom->excess_kurtosis}, {"threshold", cfg.heavy_tail_kurtosis}};
    f[1].present = mom->excess_kurtosis > cfg.heavy_tail_kurtosis;
    f[2].statistics = {{"skewness", mom->skewness}, {"threshold", -3.0 * se_s}};
    f[2].present = mom->skewness < -3.0 * se_s;

    // 4: coarser returns are no more heavy-tailed than fine ones
    const auto coarse = aggregate_returns(r, cfg.coarse_interval);
    if (coarse.values.size() >= 4) {
      if (const auto mc = moments(coarse.values)) {
        const double se_c = std::sqrt(24.0 / static_cast<double>(coarse.values.size()));
        f[3].statistics = {{"kurtosis_fine", mom->excess_kurtosis}, {"kurtosis_coarse", mc->excess_kurtosis},
                           {"se_coarse", se_c}};
        f[3].present = std::abs(mc->excess_kurtosis) <= std::abs(mom->excess_kurtosis) + 4.0 * se_c;
      }
    } else {
      f[3].note = "too few coarse returns";
    }

    // 7: kurtosis after dividing by minute-of-day volatility
    if (r.minute_of_day.size() == x.size()) {
      const auto z = normalize_by_slot(x, r.minute_of_day);
      if (z.size() >= 4) {
        if (const auto mz = moments(z)) {
          f[6].statistics = {{"kurtosis_normalized", mz->excess_kurtosis}, {"kurtosis_unconditional", mom->excess_kurtosis}};
          f[6].present = mz->excess_kurtosis > 3.0 * std::sqrt(24.0 / static_cast<double>(z.size())) &&
                         mz->excess_kurtosis < mom->excess_kurtosis;
        }
      } else {
        f[6].note = "too few repeated minute slots";
      }
    } else {
      f[6].note = "no minute-of-day slots";
    }
  } else {
    f[1].note = f[2].note = f[3].note = f[6].note = "zero variance";
  }

  // 5: Fano factor of extreme-event counts
  if (const auto F = fano_factor(x, cfg.extreme_quantile, cfg.fano_window)) {
    const double windows = std::floor(n / static_cast<double>(cfg.fano_window));
    const double thr = 1.0 + 3.0 * std::sqrt(2.0 / std::max(1.0, windows - 1.0));
    f[4].statistics = {{"fano", *F}, {"threshold", thr}, {"windows", windows}};
    f[4].present = *F > thr;
  } else {
    f[4].note = "fewer than two windows or no extreme events";
  }

  if (vc[0]) {
    f[5].statistics = {{"abs_acf_lag1", *vc[0]}, {"bound", bound}};
    f[5].present = *vc[0] > bound;
    bool all = true;
    for (std::size_t h = 0; h < vc.size(); ++h) {
      f[7].statistics.emplace_back("abs_acf_lag" + std::to_string(h + 1), vc[h].value_or(0.0));
      all = all && vc[h].value_or(0.0) > bound;
    }
    f[7].statistics.emplace_back("bound", bound);
    f[7].present = all;
  } else {
    f[5].note = f[7].note = "zero variance of absolute returns";
  }

  // 9: corr(r_t, |r_{t+h}|) averaged over lags
  {
    const auto a = abs_of(x);
    double sum = 0.0;
    int k = 0;
    for (int h = 1; h <= cfg.max_lag; ++h)
      if (const auto c = lagged_corr(x, a, h)) {
        sum += *c;
        ++k;
      }
    if (k > 0) {
      f[8].statistics = {{"mean_return_future_vol_corr", sum / k}, {"bound", -bound}};
      f[8].present = sum / k < -bound;
    } else {
      f[8].note = "undefined correlation";
    }
  }

  if (r.volumes.size() == x.size()) {
    const auto a = abs_of(x);
    if (const auto c = correlation(r.volumes, a)) {
      f[9].statistics = {{"volume_abs_return_corr", *c}, {"bound", bound}};
      f[9].present = *c > bound;
    } else {
      f[9].note = "undefined correlation";
    }
  } else {
    f[9].note = "no volumes";
  }

  // 11: coarse volatility |sum r| vs fine volatility sum |r| over blocks;
  // A(tau) = corr(coarse_{t+tau}, fine_t) - corr(coarse_{t-tau}, fine_t).
  {
    const auto b = static_cast<std::size_t>(cfg.timescale_block);
    std::vector<double> coarse, fine;
    for (std::size_t i = 0; i + b <= x.size(); i += b) {
      double s = 0.0, sa = 0.0;
      for (std::size_t j = i; j < i + b; ++j) {
        s += x[j];
        sa += std::abs(x[j]);
      }
      coarse.push_back(std::abs(s));
      fine.push_back(sa);
    }
    const double blocks = static_cast<double>(coarse.size());
    double sum = 0.0;
    int k = 0;
    for (int tau = 1; tau <= cfg.timescale_lags; ++tau) {
      const auto fwd = lagged_corr(fine, coarse, tau);  // coarse after fine
      const auto back = lagged_corr(coarse, fine, tau); // coarse before fine
      if (fwd && back) {
        const double a_tau = *fwd - *back;
        f[10].statistics.emplace_back("asymmetry_lag" + std::to_string(tau), a_tau);
        sum += a_tau;
        ++k;
      }
    }
    if (k > 0 && blocks > 0) {
      const double thr = 3.0 / std::sqrt(blocks);
      f[10].statistics.emplace_back("mean_asymmetry", sum / k);
      f[10].statistics.emplace_back("bound", -thr);
      f[10].present = sum / k < -thr;
    } else {
      f[10].note = "too few blocks";
    }
  }
  return rep;
}

StylizedReport aggregate_reports(std::span<const StylizedReport> reports) {
  if (reports.empty()) throw Error("aggregate_reports: no reports");
  StylizedReport out;
  out.instrument = "aggregate";
  for (int i = 1; i <= 11; ++i) out.facts.push_back(make_fact(i));
  for (const auto& r : reports) out.observations += r.observations;
  for (int i = 0; i < 11; ++i) {
    int yes = 0, decided = 0;
    std::vector<std::pair<std::string, std::pair<double, int>>> sums;
    for (const auto& r : reports) {
      const auto& f = r.facts[static_cast<std::size_t>(i)];
      if (f.present) {
        ++decided;
        yes += *f.present ? 1 : 0;
      }
      for (const auto& [k, v] : f.statistics) {
        auto it = std::find_if(sums.begin(), sums.end(), [&](const auto& e) { return e.first == k; });
        if (it == sums.end()) {
          sums.push_back({k, {v, 1}});
        } else {
          it->second.first += v;
          ++it->second.second;
        }
      }
    }
    auto& f = out.facts[static_cast<std::size_t>(i)];
    for (const auto& [k, s] : sums) f.statistics.emplace_back(k, s.first / s.second);
    f.statistics.emplace_back("instruments_present", yes);
    f.statistics.emplace_back("instruments_decided", decided);
    if (decided > 0) f.present = 2 * yes > decided;
  }
  return out;
}

nlohmann::json to_json(const StylizedReport& r) {
  nlohmann::json facts = nlohmann::json::array();
  for (const auto& f : r.facts) {
    nlohmann::json stats = nlohmann::json::object();
    for (const auto& [k, v] : f.statistics) stats[k] = v;
    nlohmann::json j = {{"fact", f.number}, {"name", f.name}, {"statistics", stats}};
    j["present"] = f.present ? nlohmann::json(*f.present) : nlohmann::json(nullptr);
    if (!f.note.empty()) j["note"] = f.note;
    facts.push_back(j);
  }
  return {{"instrument", r.instrument}, {"observations", r.observations}, {"facts", facts}};
}

} // namespace mars
