#include "mars/impact_lab.hpp"

#include "mars/analytics.hpp"
#include "mars/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mars {

void FactorConfig::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(alpha)) throw Error("factor config: alpha must be in (0,1)");
  if (!open_unit(beta)) throw Error("factor config: beta must be in (0,1)");
  if (!(epsilon > 0.0)) throw Error("factor config: epsilon must be positive");
  if (!gamma.empty()) {
    double s = 0.0;
    for (double g : gamma) {
      if (!open_unit(g) && !(gamma.size() == 1 && g == 1.0)) throw Error("factor config: every gamma must be in (0,1)");
      s += g;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error("factor config: gammas must sum to 1");
  }
}

ImpactRecord measure_impact(const Trajectory& with_agent, const Trajectory& counterfactual, const ImpactWindow& window,
                            const FactorConfig& cfg, std::string config_id) {
  if (with_agent.config_hash != counterfactual.config_hash)
    throw Error("measure_impact: trajectories are not paired (config hash mismatch)");
  const auto minutes = static_cast<std::int64_t>(with_agent.minutes.size());
  if (static_cast<std::int64_t>(counterfactual.minutes.size()) != minutes)
    throw Error("measure_impact: trajectories have different lengths");
  if (window.start_minute < 0 || window.end_minute <= window.start_minute || window.end_minute > minutes)
    throw Error("measure_impact: window outside the trajectory");
  if (window.lookback < 1) throw Error("measure_impact: lookback must be >= 1");

  auto gap = [&](std::int64_t m) {
    const auto& a = with_agent.minutes[static_cast<std::size_t>(m)];
    const auto& b = counterfactual.minutes[static_cast<std::size_t>(m)];
    // a difference of logs keeps the measure exactly antisymmetric
    return 1e4 * (std::log(static_cast<double>(a.close_mid2)) - std::log(static_cast<double>(b.close_mid2)));
  };

  ImpactRecord r;
  r.config_id = std::move(config_id);
  double sum = 0.0;
  for (auto m = window.start_minute; m < window.end_minute; ++m) {
    sum += gap(m);
    const auto& a = with_agent.minutes[static_cast<std::size_t>(m)];
    r.q += static_cast<double>(a.agent_volume);
    r.v += static_cast<double>(a.volume);
    r.replay_volume += static_cast<double>(counterfactual.minutes[static_cast<std::size_t>(m)].volume);
  }
  r.delta_bp = sum / static_cast<double>(window.end_minute - window.start_minute);
  r.rollout_volume = r.v;
  for (auto m = window.end_minute; m < minutes; ++m) r.y.push_back(gap(m));

  const auto first = std::max<std::int64_t>(0, window.start_minute - window.lookback);
  std::vector<double> rets;
  for (auto m = first; m < window.start_minute; ++m) {
    const auto& rec = with_agent.minutes[static_cast<std::size_t>(m)];
    r.pre_mids.push_back(rec.close_mid());
    rets.push_back(minute_return(rec.open_mid2, rec.close_mid2));
  }
  r.sigma = rets.size() >= 2 ? std::sqrt(*variance(rets)) : 0.0;
  if (window.start_minute > 0) {
    const auto& last = with_agent.minutes[static_cast<std::size_t>(window.start_minute - 1)];
    r.mid_pre = last.close_mid();
    r.lob_ask_volume = static_cast<double>(last.ask_depth);
    r.lob_bid_volume = static_cast<double>(last.bid_depth);
  } else {
    r.mid_pre = with_agent.minutes.front().open_mid();
    r.pre_mids.push_back(r.mid_pre);
  }
  r.factors = compute_factors(r, cfg);
  return r;
}

Factors compute_factors(const ImpactRecord& record, const FactorConfig& cfg) {
  cfg.validate();
  Factors f;
  const auto& mids = record.pre_mids;
  if (mids.size() >= 2 && mids.back() > 0.0) {
    const std::size_t k = mids.size() - 1;
    if (!cfg.gamma.empty() && cfg.gamma.size() != k)
      throw Error("compute_factors: gamma has " + std::to_string(cfg.gamma.size()) + " weights for " +
                  std::to_string(k) + " pre-trade mids");
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += (cfg.gamma.empty() ? 1.0 / static_cast<double>(k) : cfg.gamma[t]) * mids[t];
    f.moment = s / mids.back() - 1.0;
    f.resiliency = 1.0 - std::log(std::max(std::abs(*f.moment), cfg.epsilon));
  }
  const double a = record.q;
  const double ask = record.lob_ask_volume;
  const double bid = record.lob_bid_volume;
  if (a + ask > 0.0) f.agent_trans_ask = a / (a + ask);
  if (a + bid > 0.0) f.agent_trans_bid = a / (a + bid);
  if (ask + bid > 0.0) f.lob_imbalance = std::abs(ask - bid) / (ask + bid);
  if (f.agent_trans_ask && f.agent_trans_bid && f.lob_imbalance)
    f.lob_pressure = (cfg.alpha * *f.agent_trans_ask + (1.0 - cfg.alpha) * *f.agent_trans_bid) * *f.lob_imbalance;
  if (const double d = cfg.beta * ask + (1.0 - cfg.beta) * bid; d > 0.0) f.lob_depth = std::log(d);
  if (record.rollout_volume > 0.0) f.agent_rollout = a / record.rollout_volume;
  if (record.replay_volume > 0.0) f.agent_replay = a / record.replay_volume;
  return f;
}

SqrtLawFit fit_sqrt_law(std::span<const ImpactRecord> records) {
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    if (!(r.delta_bp > 0.0) || !(r.sigma > 0.0) || !(r.v > 0.0)) continue;
    const double ratio = r.q / r.v;
    if (!(ratio > 0.0 && ratio < 1.0)) continue;
    xs.push_back(std::log(ratio));
    ys.push_back(std::log(r.delta_bp / r.sigma));
  }
  if (xs.size() < 30)
    throw Error("fit_sqrt_law: need at least 30 valid records, have " + std::to_string(xs.size()));
  const double mx = *mean(xs), my = *mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("fit_sqrt_law: Q/V does not vary");
  SqrtLawFit fit;
  fit.gamma = sxy / sxx;
  fit.c = std::exp(my - fit.gamma * mx);
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.used = xs.size();
  return fit;
}

std::string decay_name(DecayBasis b) { return b == DecayBasis::InverseT ? "1/t" : "1/sqrt(t)"; }

double decay_integral(DecayBasis b, double t) {
  return b == DecayBasis::InverseT ? std::log(t) : 2.0 * (std::sqrt(t) - 1.0);
}

OdeModel OdeModel::defaults() {
  OdeModel m;
  m.factors = {"sqrt_qv", "mid_price", "agent_replay", "agent_rollout", "lob_depth", "lob_pressure", "resiliency"};
  m.w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.decay.size()), static_cast<Eigen::Index>(m.factors.size()));
  return m;
}

OdeFit fit_long_term_ode(std::span<const OdeSample> samples, const OdeModel& model) {
  const auto m = static_cast<Eigen::Index>(model.factors.size());
  const auto n = static_cast<Eigen::Index>(model.decay.size());
  if (m == 0 || n == 0) throw Error("fit_long_term_ode: empty factor or decay list");
  if (samples.empty()) throw Error("fit_long_term_ode: no samples");
  Eigen::Index rows = 0;
  for (const auto& s : samples) {
    if (static_cast<Eigen::Index>(s.x.size()) != m) throw Error("fit_long_term_ode: factor count mismatch");
    if (s.y.empty()) throw Error("fit_long_term_ode: empty Y(t)");
    rows += static_cast<Eigen::Index>(s.y.size()) - 1;
  }
  if (rows == 0) throw Error("fit_long_term_ode: need Y(t) beyond t = 1");

  Eigen::MatrixXd x(rows, n * m);
  Eigen::VectorXd y(rows);
  Eigen::Index row = 0;
  for (const auto& s : samples) {
    for (std::size_t k = 1; k < s.y.size(); ++k, ++row) {
      const double t = static_cast<double>(k + 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double integral = decay_integral(model.decay[static_cast<std::size_t>(i)], t);
        for (Eigen::Index j = 0; j < m; ++j) x(row, i * m + j) = s.x[static_cast<std::size_t>(j)] * integral;
      }
      y(row) = s.y[k] - s.y[0];
    }
  }

  OdeFit fit;
  fit.condition = condition_number(x);
  if (model.l1 == 0.0 && !(fit.condition < 1e12)) {
    std::ostringstream msg;
    msg << "fit_long_term_ode: design is singular without L1 (condition number " << fit.condition << ", "
        << rows << " rows x " << n * m << " columns)";
    throw Error(msg.str());
  }
  const auto res = lasso(x, y, LassoOptions{model.l1});
  fit.sweeps = res.sweeps;
  fit.converged = res.converged;
  fit.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(res.coef.data(), n, m);
  const Eigen::VectorXd pred = x * res.coef;
  const double sst = (y.array() - y.mean()).square().sum();
  const double sse = (y - pred).squaredNorm();
  fit.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
  return fit;
}

double ode_predict(const OdeModel& model, const Eigen::MatrixXd& w, std::span<const double> x, double y1, double t) {
  double y = y1;
  for (std::size_t i = 0; i < model.decay.size(); ++i) {
    const double integral = decay_integral(model.decay[i], t);
    for (std::size_t j = 0; j < x.size(); ++j)
      y += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j] * integral;
  }
  return y;
}

std::optional<std::vector<double>> default_factor_values(const ImpactRecord& r) {
  const auto& f = r.factors;
  if (!(r.v > 0.0) || !f.agent_replay || !f.agent_rollout || !f.lob_depth || !f.lob_pressure || !f.resiliency)
    return std::nullopt;
  return std::vector<double>{std::sqrt(r.q / r.v), r.mid_pre,       *f.agent_replay, *f.agent_rollout,
                             *f.lob_depth,          *f.lob_pressure, *f.resiliency};
}

std::vector<OdeSample> ode_samples(std::span<const ImpactRecord> records) {
  std::vector<OdeSample> out;
  for (const auto& r : records) {
    if (r.y.size() < 2) continue;
    if (auto x = default_factor_values(r)) out.push_back(OdeSample{std::move(*x), r.y});
  }
  return out;
}

double cv_r2(std::span<const double> target, std::span<const std::vector<double>> columns, int folds) {
  const auto n = target.size();
  if (folds < 2) throw Error("cv_r2: need at least two folds");
  if (n < static_cast<std::size_t>(folds)) throw Error("cv_r2: fewer records than folds");
  for (const auto& c : columns)
    if (c.size() != n) throw Error("cv_r2: column length mismatch");
  const auto p = static_cast<Eigen::Index>(columns.size()) + 1;
  const double ybar = *mean(target);
  double sse = 0.0, sst = 0.0;
  for (int k = 0; k < folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (static_cast<int>(i % static_cast<std::size_t>(folds)) == k ? test : train).push_back(i);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(train.size()), p);
    Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      x(ri, 0) = 1.0;
      for (std::size_t c = 0; c < columns.size(); ++c) x(ri, static_cast<Eigen::Index>(c) + 1) = columns[c][train[r]];
      y(ri) = target[train[r]];
    }
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    for (auto i : test) {
      double pred = beta(0);
      for (std::size_t c = 0; c < columns.size(); ++c) pred += beta(static_cast<Eigen::Index>(c) + 1) * columns[c][i];
      sse += (target[i] - pred) * (target[i] - pred);
      sst += (target[i] - ybar) * (target[i] - ybar);
    }
  }
  if (!(sst > 0.0)) throw Error("cv_r2: target has zero variance");
  return 1.0 - sse / sst;
}

SearchResult search_factors(std::span<const double> target, std::span<const Candidate> dictionary, int folds,
                            double min_gain) {
  if (dictionary.empty()) throw Error("search_factors: empty dictionary");
  if (target.size() < static_cast<std::size_t>(std::max(folds, 2)))
    throw Error("search_factors: fewer records than folds");
  SearchResult out;
  std::vector<std::vector<double>> chosen;
  std::vector<bool> used(dictionary.size(), false);
  double current = cv_r2(target, chosen, folds);
  out.baseline_r2 = current;
  while (true) {
    std::optional<std::size_t> best;
    double best_r2 = current;
    for (std::size_t c = 0; c < dictionary.size(); ++c) {
      if (used[c]) continue;
      auto cols = chosen;
      cols.push_back(dictionary[c].values);
      const double r2 = cv_r2(target, cols, folds);
      if (!best || r2 > best_r2) {
        best = c;
        best_r2 = r2;
      }
    }
    if (!best || best_r2 - current < min_gain) break;
    used[*best] = true;
    chosen.push_back(dictionary[*best].values);
    out.selected.push_back(SelectedFactor{dictionary[*best].name, best_r2, best_r2 - current});
    current = best_r2;
  }
  return out;
}

std::vector<std::vector<std::optional<double>>> factor_correlation_matrix(std::span<const ImpactRecord> records) {
  std::vector<std::vector<double>> cols(kCorrelationFactors.size());
  for (const auto& r : records) {
    const auto& f = r.factors;
    if (!(r.v > 0.0) || !f.resiliency || !f.lob_pressure || !f.lob_depth) continue;
    cols[0].push_back(std::sqrt(r.q / r.v));
    cols[1].push_back(r.sigma);
    cols[2].push_back(*f.resiliency);
    cols[3].push_back(*f.lob_pressure);
    cols[4].push_back(*f.lob_depth);
  }
  if (cols[0].size() < 2) throw Error("factor_correlation_matrix: need at least two complete records");
  std::vector<std::vector<std::optional<double>>> m(cols.size(), std::vector<std::optional<double>>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    for (std::size_t j = i; j < cols.size(); ++j) {
      auto c = correlation(cols[i], cols[j]);
      if (i == j && c) c = 1.0;
      m[i][j] = m[j][i] = c;
    }
  return m;
}

namespace {

const char* const kRecordHeader =
    "delta_bp,sigma,q,v,resiliency,lob_pressure,lob_depth,agent_replay,agent_rollout,mid_pre,y_t_json,config_id";

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }
std::optional<double> opt_parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

} // namespace

void write_impact_records(const std::filesystem::path& path, std::span<const ImpactRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    nlohmann::json y = r.y;
    out << format_double(r.delta_bp) << ',' << format_double(r.sigma) << ',' << format_double(r.q) << ','
        << format_double(r.v) << ',' << opt_field(r.factors.resiliency) << ',' << opt_field(r.factors.lob_pressure)
        << ',' << opt_field(r.factors.lob_depth) << ',' << opt_field(r.factors.agent_replay) << ','
        << opt_field(r.factors.agent_rollout) << ',' << format_double(r.mid_pre) << ',' << csv_field(y.dump()) << ','
        << csv_field(r.config_id) << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<ImpactRecord> read_impact_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordHeader) throw Error(path.string() + ": unexpected header");
  std::vector<ImpactRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 12) throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 12 fields");
    try {
      ImpactRecord r;
      r.delta_bp = parse_double(f[0]);
      r.sigma = parse_double(f[1]);
      r.q = parse_double(f[2]);
      r.v = parse_double(f[3]);
      r.factors.resiliency = opt_parse(f[4]);
      r.factors.lob_pressure = opt_parse(f[5]);
      r.factors.lob_depth = opt_parse(f[6]);
      r.factors.agent_replay = opt_parse(f[7]);
      r.factors.agent_rollout = opt_parse(f[8]);
      r.mid_pre = parse_double(f[9]);
      r.y = nlohmann::json::parse(f[10]).get<std::vector<double>>();
      r.config_id = f[11];
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

} // namespace mars
