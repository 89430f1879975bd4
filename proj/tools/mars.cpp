// mars: command-line driver for the simulator, analyzers and experiments.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include "mars/analytics.hpp"
#include "mars/csv.hpp"
#include "mars/exec_agents.hpp"
#include "mars/hash.hpp"
#include "mars/impact_lab.hpp"
#include "mars/minute_returns.hpp"
#include "mars/order_log.hpp"
#include "mars/session_config.hpp"
#include "mars/stylized.hpp"
#include "mars/trajectory_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mars;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// manifest.json next to the outputs; created_at is the only volatile field
void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t config_hash, std::uint64_t seed,
                    json extra = json::object()) {
  extra["tool"] = "mars";
  extra["version"] = kToolVersion;
  extra["command"] = command;
  extra["config_hash"] = hex64(config_hash);
  extra["seed"] = seed;
  extra["created_at"] = utc_now();
  write_json(dir / "manifest.json", extra);
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return json_hash(json(bytes));
}

std::string rollout_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rollout_%04d", i);
  return buf;
}

// Collects successful rollouts; failures are reported and make the command fail.
std::vector<Trajectory> unwrap(std::vector<RolloutResult> results, const std::string& what) {
  std::vector<Trajectory> out;
  std::string errors;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].trajectory) {
      out.push_back(std::move(*results[i].trajectory));
    } else {
      errors += "\n  " + what + " rollout " + std::to_string(i) + ": " + results[i].error;
    }
  }
  if (!errors.empty()) throw Error(what + " rollouts failed:" + errors);
  return out;
}

// ---- replay ----

struct ReplayOpts {
  std::string log, out, instrument{"SYN"};
  int minutes{0};
  bool check{false};
};

int cmd_replay(const ReplayOpts& o) {
  const auto records = read_order_log(o.log);
  if (records.empty()) throw Error("replay: " + o.log + " has no events");
  SessionConfig cfg;
  cfg.instrument = o.instrument;
  cfg.start_time_ms = static_cast<std::int64_t>(records.front().timestamp);
  auto orders = to_orders(records);
  cfg.flow = std::make_shared<ReplayFlowModel>(orders);
  cfg.horizon_minutes =
      o.minutes > 0 ? o.minutes
                    : static_cast<int>((records.back().timestamp - records.front().timestamp) / kMillisPerMinute) + 1;
  const auto traj = run(cfg);
  write_trajectory(o.out, traj);

  json extra = {{"log", o.log}, {"horizon_minutes", cfg.horizon_minutes}, {"events", traj.events.size()},
                {"trades", traj.trades.size()}};
  if (o.check) {
    // feed the same orders straight into a book and compare the trade tapes
    LimitOrderBook book;
    std::vector<Trade> direct;
    TimeMs clock = 0;
    const TimeMs end = static_cast<TimeMs>(cfg.horizon_minutes) * kMillisPerMinute;
    for (const auto& ord : orders) {
      clock += ord.interval;
      if (clock >= end) break;
      for (const auto& t : book.submit(ord).trades) direct.push_back(t);
    }
    bool same = direct.size() == traj.trades.size();
    for (std::size_t i = 0; same && i < direct.size(); ++i) same = direct[i] == traj.trades[i].trade;
    same = same && book.hash() == traj.final_book_hash;
    extra["fidelity_check"] = same;
    if (!same) throw Error("replay: session trades differ from direct matching");
    std::cout << "replay fidelity: ok (" << direct.size() << " trades)\n";
  }
  write_manifest(o.out, "replay", traj.config_hash, 0, extra);
  std::cout << "replayed " << traj.events.size() << " events over " << traj.minutes.size() << " minutes -> " << o.out
            << '\n';
  return 0;
}

// ---- simulate ----

struct SimulateOpts {
  std::string config, out;
  int rollouts{1};
  std::optional<std::uint64_t> seed;
  int threads{0};
};

int cmd_simulate(const SimulateOpts& o) {
  const auto lc = load_session_config(o.config);
  const auto base = o.seed.value_or(lc.session.seed);
  auto results = run_rollouts(lc.session, o.rollouts, base, o.threads);
  fs::create_directories(o.out);

  auto summary = open_out(fs::path(o.out) / "summary.csv");
  summary << "rollout,seed,status,minutes,events,trades,open_mid,close_mid,final_book_hash\n";
  std::string errors;
  std::uint64_t pairing = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto seed = base + i;
    const auto& r = results[i];
    if (!r.trajectory) {
      summary << i << ',' << seed << ",error,,,,,,\n";
      errors += "\n  rollout " + std::to_string(i) + ": " + r.error;
      continue;
    }
    const auto& t = *r.trajectory;
    pairing = t.config_hash;
    write_trajectory(fs::path(o.out) / rollout_name(static_cast<int>(i)), t);
    const auto open = t.minutes.empty() ? 0.0 : t.minutes.front().open_mid();
    const auto close = t.minutes.empty() ? 0.0 : t.minutes.back().close_mid();
    summary << i << ',' << seed << ",ok," << t.minutes.size() << ',' << t.events.size() << ',' << t.trades.size() << ','
            << format_double(open) << ',' << format_double(close) << ',' << hex64(t.final_book_hash) << '\n';
  }
  write_manifest(o.out, "simulate", lc.document_hash, base,
                 {{"config", lc.document},
                  {"pairing_hash", hex64(pairing)},
                  {"rollouts", o.rollouts},
                  {"failed", std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.trajectory; })}});
  if (!errors.empty()) throw Error("simulate: some rollouts failed:" + errors);
  std::cout << "simulated " << o.rollouts << " rollout(s) -> " << o.out << '\n';
  return 0;
}

// ---- forecast ----

struct ForecastOpts {
  std::string config, out;
  int rollouts{128};
  std::optional<std::uint64_t> seed;
  int threads{0};
  double low{-2e-4}, high{2e-4};
};

int cmd_forecast(const ForecastOpts& o) {
  if (!(o.low < o.high)) throw Error("forecast: --low must be below --high");
  const auto lc = load_session_config(o.config);
  const auto base = o.seed.value_or(lc.session.seed);
  const auto trajs = unwrap(run_rollouts(lc.session, o.rollouts, base, o.threads), "forecast");
  const ThreeClass thresholds{o.low, o.high};
  std::vector<Trend> votes;
  json labels = json::array();
  for (const auto& t : trajs) {
    if (t.minutes.empty()) throw Error("forecast: horizon_minutes must be positive");
    std::vector<double> mids{t.minutes.front().open_mid()};
    for (const auto& m : t.minutes) mids.push_back(m.close_mid());
    const double label = forecast_label(mids);
    labels.push_back(label);
    votes.push_back(classify_trend(label, thresholds));
  }
  const auto result = aggregate_forecast(votes);
  json counts = {{"down", 0}, {"flat", 0}, {"up", 0}};
  for (auto v : votes) counts[trend_name(v)] = counts[trend_name(v)].get<int>() + 1;
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "forecast.json", {{"forecast", trend_name(result)},
                                                  {"votes", counts},
                                                  {"thresholds", {{"low", o.low}, {"high", o.high}}},
                                                  {"labels", labels}});
  write_manifest(o.out, "forecast", lc.document_hash, base, {{"config", lc.document}, {"rollouts", o.rollouts}});
  std::cout << "forecast: " << trend_name(result) << " (down " << counts["down"] << ", flat " << counts["flat"]
            << ", up " << counts["up"] << ")\n";
  return 0;
}

// ---- impact ----

struct ImpactOpts {
  std::string config, with_dir, without_dir, out;
  int rollouts{32};
  std::optional<std::uint64_t> seed;
  int threads{0};
  std::optional<std::int64_t> start_minute, end_minute;
  int lookback{30};
};

// A trajectory directory, or a `simulate` output holding rollout_* directories.
std::vector<fs::path> trajectory_dirs(const fs::path& dir) {
  if (fs::exists(dir / "trajectory.json")) return {dir};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "trajectory.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(dir.string() + ": no trajectories found");
  return out;
}

int cmd_impact(const ImpactOpts& o) {
  std::vector<Trajectory> with_runs, cf_runs;
  ImpactWindow window;
  window.lookback = o.lookback;
  std::string config_id;
  json extra;
  std::uint64_t hash = 0, base = 0;

  if (!o.config.empty()) {
    const auto lc = load_session_config(o.config);
    if (lc.twaps.empty()) throw Error("impact: the config needs at least one agent");
    auto without = lc.session;
    without.agents.clear();
    base = o.seed.value_or(lc.session.seed);
    with_runs = unwrap(run_rollouts(lc.session, o.rollouts, base, o.threads), "agent");
    cf_runs = unwrap(run_rollouts(without, o.rollouts, base, o.threads), "counterfactual");
    const auto& first = lc.twaps.front();
    window.start_minute = o.start_minute.value_or(first.start / kMillisPerMinute);
    window.end_minute =
        o.end_minute.value_or((first.start + first.duration + kMillisPerMinute - 1) / kMillisPerMinute);
    for (const auto& t : lc.twaps) config_id += (config_id.empty() ? "" : "+") + t.id();
    hash = lc.document_hash;
    extra = {{"config", lc.document}, {"rollouts", o.rollouts}};
  } else {
    if (o.with_dir.empty()) throw CLI::ValidationError("impact", "give --config, or --with and --without");
    if (!o.start_minute || !o.end_minute)
      throw CLI::ValidationError("impact", "--with/--without need --window-start and --window-end");
    const auto a = trajectory_dirs(o.with_dir), b = trajectory_dirs(o.without_dir);
    if (a.size() != b.size()) throw Error("impact: --with and --without hold different numbers of trajectories");
    for (std::size_t i = 0; i < a.size(); ++i) {
      with_runs.push_back(read_trajectory(a[i]));
      cf_runs.push_back(read_trajectory(b[i]));
    }
    window.start_minute = *o.start_minute;
    window.end_minute = *o.end_minute;
    config_id = "external";
    hash = with_runs.front().config_hash;
    base = with_runs.front().seed;
    extra = {{"with", o.with_dir}, {"without", o.without_dir}};
  }

  std::vector<ImpactRecord> records;
  double sum = 0.0;
  for (std::size_t i = 0; i < with_runs.size(); ++i) {
    records.push_back(measure_impact(with_runs[i], cf_runs[i], window, {}, config_id));
    sum += records.back().delta_bp;
  }
  fs::create_directories(o.out);
  write_impact_records(fs::path(o.out) / "records.csv", records);
  const double mean_delta = records.empty() ? 0.0 : sum / static_cast<double>(records.size());
  extra["window"] = {{"start_minute", window.start_minute}, {"end_minute", window.end_minute}};
  extra["pairing_hash"] = hex64(cf_runs.empty() ? 0 : cf_runs.front().config_hash);
  extra["mean_delta_bp"] = mean_delta;
  write_manifest(o.out, "impact", hash, base, extra);
  std::cout << "impact: " << records.size() << " paired rollouts, mean delta " << format_double(mean_delta)
            << " bp -> " << o.out << '\n';
  return 0;
}

// ---- impact-fit ----

struct ImpactFitOpts {
  std::string records, out, mode{"all"};
  double l1{0.0};
  int folds{5};
  double min_gain{0.01};
};

// Base dictionary for the factor search: classic pre-trade volume and price terms.
std::vector<Candidate> factor_dictionary(std::span<const ImpactRecord> recs) {
  std::vector<Candidate> dict{{"sqrt_qv", {}},    {"sigma", {}},      {"sigma_sqrt_qv", {}}, {"q_over_v", {}},
                              {"log_v", {}},      {"resiliency", {}}, {"lob_pressure", {}},  {"lob_depth", {}},
                              {"agent_replay", {}}, {"agent_rollout", {}}};
  for (const auto& r : recs) {
    const double qv = r.v > 0.0 ? r.q / r.v : 0.0;
    const auto& f = r.factors;
    const double vals[] = {std::sqrt(qv),
                           r.sigma,
                           r.sigma * std::sqrt(qv),
                           qv,
                           r.v > 0.0 ? std::log(r.v) : 0.0,
                           f.resiliency.value_or(0.0),
                           f.lob_pressure.value_or(0.0),
                           f.lob_depth.value_or(0.0),
                           f.agent_replay.value_or(0.0),
                           f.agent_rollout.value_or(0.0)};
    for (std::size_t k = 0; k < dict.size(); ++k) dict[k].values.push_back(vals[k]);
  }
  return dict;
}

int cmd_impact_fit(const ImpactFitOpts& o) {
  const auto recs = read_impact_records(o.records);
  json result = {{"records", recs.size()}, {"mode", o.mode}};
  const bool all = o.mode == "all";
  if (all || o.mode == "sqrt") try {
    const auto fit = fit_sqrt_law(recs);
    result["sqrt_law"] = {{"c", fit.c}, {"gamma", fit.gamma}, {"r2", fit.r2}, {"used", fit.used}};
    std::cout << "square-root law: gamma " << format_double(fit.gamma) << ", r2 " << format_double(fit.r2) << '\n';
  } catch (const Error& e) {
    result["sqrt_law"] = {{"error", e.what()}};
    std::cerr << "square-root law skipped: " << e.what() << '\n';
  }
  if (all || o.mode == "search") {
    std::vector<double> target;
    for (const auto& r : recs) target.push_back(r.delta_bp);
    const auto dict = factor_dictionary(recs);
    const auto sr = search_factors(target, dict, o.folds, o.min_gain);
    json sel = json::array();
    for (const auto& f : sr.selected) sel.push_back({{"factor", f.name}, {"cv_r2", f.r2}, {"gain", f.gain}});
    result["search"] = {{"method", sr.method}, {"baseline_r2", sr.baseline_r2}, {"selected", sel}};
    std::cout << "factor search: " << sr.selected.size() << " factor(s) selected\n";
  }
  const auto samples = (all || o.mode == "ode") ? ode_samples(recs) : std::vector<OdeSample>{};
  if (o.mode == "ode" && samples.empty()) throw Error("impact-fit: no record has all seven ODE factors");
  if (!samples.empty()) {
    auto model = OdeModel::defaults();
    model.l1 = o.l1;
    try {
      const auto fit = fit_long_term_ode(samples, model);
      json w = json::object();
      for (std::size_t i = 0; i < model.decay.size(); ++i)
        for (std::size_t j = 0; j < model.factors.size(); ++j)
          w[decay_name(model.decay[i]) + ":" + model.factors[j]] =
              fit.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      result["ode"] = {{"l1", o.l1},         {"w", w},           {"r2", fit.r2},
                       {"sweeps", fit.sweeps}, {"converged", fit.converged}, {"condition", fit.condition}};
      std::cout << "long-term ODE: r2 " << format_double(fit.r2) << " over " << samples.size() << " record(s)\n";
    } catch (const Error& e) {
      result["ode"] = {{"error", e.what()}};
      std::cerr << "long-term ODE skipped: " << e.what() << '\n';
    }
  }
  json corr = json::array();
  for (const auto& row : factor_correlation_matrix(recs)) {
    json r = json::array();
    for (const auto& v : row) r.push_back(v ? json(*v) : json(nullptr));
    corr.push_back(r);
  }
  result["factor_correlation"] = {{"factors", kCorrelationFactors}, {"matrix", corr}};
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "fit.json", result);
  write_manifest(o.out, "impact-fit", file_hash(o.records), 0, {{"records", o.records}});
  return 0;
}

// ---- stylized ----

struct StylizedOpts {
  std::string returns, out, report, basis{"last"};
  std::vector<std::string> trajectories;
};

int cmd_stylized(const StylizedOpts& o) {
  if (o.returns.empty() == o.trajectories.empty())
    throw CLI::ValidationError("stylized", "give exactly one of --returns or --in");
  if (o.out.empty() && o.report.empty()) throw CLI::ValidationError("stylized", "give --out or --report");
  std::vector<StylizedReport> reports;
  std::uint64_t hash = 0;
  if (!o.returns.empty()) {
    const auto m = load_minute_returns(o.returns);
    hash = file_hash(o.returns);
    for (std::size_t c = 0; c < m.instruments.size(); ++c) {
      ReturnSeries r;
      r.instrument = m.instruments[c];
      for (std::size_t row = 0; row < m.rows(); ++row) {
        r.values.push_back(m.values[row][c]);
        r.minute_of_day.push_back(m.minutes[row]);
      }
      reports.push_back(stylized_report(r));
    }
  } else {
    const auto basis = o.basis == "mean" ? PriceBasis::MeanTrade : PriceBasis::LastTrade;
    Hasher h;
    std::vector<fs::path> dirs;
    for (const auto& d : o.trajectories)
      for (auto& p : trajectory_dirs(d)) dirs.push_back(std::move(p));
    for (const auto& dir : dirs) {
      const auto t = read_trajectory(dir);
      h.add(t.config_hash);
      h.add(t.seed);
      auto r = returns_from(t, basis);
      r.instrument = t.instrument + "@" + std::to_string(t.seed);
      reports.push_back(stylized_report(r));
    }
    hash = h.h;
  }
  const auto agg = aggregate_reports(reports);
  json per = json::array();
  for (const auto& r : reports) per.push_back(to_json(r));
  const fs::path report = o.report.empty() ? fs::path(o.out) / "stylized.json" : fs::path(o.report);
  const fs::path dir = o.out.empty() ? report.parent_path() : fs::path(o.out);
  if (!dir.empty()) fs::create_directories(dir);
  if (!report.parent_path().empty()) fs::create_directories(report.parent_path());
  write_json(report, {{"instruments", per}, {"aggregate", to_json(agg)}});
  write_manifest(dir.empty() ? fs::path(".") : dir, "stylized", hash, 0, {{"report", report.string()}});
  for (const auto& f : agg.facts)
    std::cout << f.number << ". " << f.name << ": " << (f.present ? (*f.present ? "yes" : "no") : "undecided")
              << '\n';
  return 0;
}

// ---- detect ----

struct DetectOpts {
  std::string sim, replay, out;
  double threshold{kDefaultAnomalyThreshold};
  int bins{kDefaultBins};
};

std::vector<double> spreads_of(const Trajectory& t) {
  std::vector<double> out;
  for (const auto& m : t.minutes)
    for (auto s : m.spreads) out.push_back(static_cast<double>(s));
  return out;
}

int cmd_detect(const DetectOpts& o) {
  const auto sim = read_trajectory(o.sim);
  const auto rep = read_trajectory(o.replay);
  const auto a = spreads_of(sim), b = spreads_of(rep);
  if (a.empty() || b.empty()) throw Error("detect: both trajectories need two-sided spreads");
  const auto edges = pooled_edges(a, b, o.bins);
  const auto res = detect_anomaly(histogram(a, edges), histogram(b, edges), o.threshold);
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "detect.json", {{"score", res.score},
                                                {"flag", res.flag},
                                                {"threshold", o.threshold},
                                                {"bins", o.bins},
                                                {"sim_spreads", a.size()},
                                                {"replay_spreads", b.size()}});
  Hasher h;
  h.add(sim.config_hash);
  h.add(rep.config_hash);
  write_manifest(o.out, "detect", h.h, sim.seed, {{"sim", o.sim}, {"replay", o.replay}});
  std::cout << "overlap " << format_double(res.score) << (res.flag ? " -> anomalous\n" : " -> normal\n");
  return 0;
}

// ---- rl-train ----

struct TrainOpts {
  std::string config, out;
  std::optional<int> iterations, episodes, batch;
  std::optional<double> lr, temperature;
  std::optional<std::uint64_t> seed;
  int eval_episodes{32};
};

int cmd_rl_train(const TrainOpts& o) {
  ExecEnvConfig env;
  TrainConfig tc;
  json doc = {{"version", kConfigVersion}};
  if (!o.config.empty()) {
    doc = read_versioned_json(o.config);
    try {
      if (doc.contains("flow")) env.flow = noise_from_json(doc["flow"]);
      if (doc.contains("twap")) env.twap = twap_from_json(doc["twap"]);
      env.horizon_minutes = doc.value("horizon_minutes", env.horizon_minutes);
      env.open_reference = doc.value("open_reference", env.open_reference);
      env.reward.knee = doc.value("knee", env.reward.knee);
      if (doc.contains("train")) {
        const auto& t = doc["train"];
        tc.iterations = t.value("iterations", tc.iterations);
        tc.episodes_per_batch = t.value("episodes_per_batch", tc.episodes_per_batch);
        tc.lr = t.value("lr", tc.lr);
        tc.temperature = t.value("temperature", tc.temperature);
        tc.seed = t.value("seed", tc.seed);
      }
    } catch (const json::exception& e) {
      throw Error(std::string("rl-train config: ") + e.what());
    }
  }
  if (o.batch) tc.episodes_per_batch = *o.batch;
  if (o.episodes) tc.iterations = (*o.episodes + tc.episodes_per_batch - 1) / tc.episodes_per_batch;
  if (o.iterations) tc.iterations = *o.iterations;
  if (o.lr) tc.lr = *o.lr;
  if (o.temperature) tc.temperature = *o.temperature;
  if (o.seed) tc.seed = *o.seed;
  env.reward.validate();
  env.twap.validate();

  Policy init;
  init.temperature = tc.temperature;
  const auto result = train_policy(env, tc, init);
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "policy.json", to_json(result.policy));
  {
    auto curve = open_out(fs::path(o.out) / "curve.csv");
    curve << "iteration,mean_reward\n";
    for (std::size_t i = 0; i < result.mean_rewards.size(); ++i)
      curve << i << ',' << format_double(result.mean_rewards[i]) << '\n';
  }
  // held-out seeds, disjoint from training
  const std::uint64_t eval_seed = tc.seed + 1'000'000;
  const double trained = evaluate_policy(env, result.policy, o.eval_episodes, eval_seed);
  const double uniform = evaluate_policy(env, init, o.eval_episodes, eval_seed);
  json cfg_used = {{"iterations", tc.iterations}, {"episodes_per_batch", tc.episodes_per_batch}, {"lr", tc.lr},
                   {"temperature", tc.temperature}, {"seed", tc.seed}};
  write_manifest(o.out, "rl-train", json_hash(doc), tc.seed,
                 {{"config", doc},
                  {"train", cfg_used},
                  {"rejected_updates", result.rejected_updates},
                  {"eval", {{"episodes", o.eval_episodes}, {"trained", trained}, {"uniform", uniform}}}});
  std::cout << "rl-train: mean reward " << format_double(trained) << " (uniform " << format_double(uniform) << ")\n";
  return 0;
}

// ---- scenario-filter ----

struct ScenarioOpts {
  std::string returns, out, tag{"sharp-drop"};
  int window{25};
  std::optional<double> threshold;
  std::size_t max_samples{30};
  int context{15};
};

int cmd_scenario(const ScenarioOpts& o) {
  const auto m = load_minute_returns(o.returns);
  ScenarioQuery q;
  q.tag = scenario_from_name(o.tag);
  q.window = o.window;
  q.max_samples = o.max_samples;
  q.threshold = o.threshold.value_or(q.tag == ScenarioTag::SharpDrop ? -0.05 : 0.05);
  const auto samples = scenario_filter(m, q);

  fs::create_directories(fs::path(o.out) / "controls");
  auto out = open_out(fs::path(o.out) / "samples.csv");
  out << "date,start,end,instrument,window_return,tag\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out << csv_field(s.date) << ',' << format_clock(s.start_minute) << ',' << format_clock(s.end_minute) << ','
        << csv_field(s.instrument) << ',' << format_double(s.window_return) << ',' << scenario_name(s.tag) << '\n';
    const auto control = scenario_to_control(s, m, std::min(o.context, q.window));
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.json", i);
    write_json(fs::path(o.out) / "controls" / name,
               {{"kind", "scenario"}, {"returns", control.returns}, {"context_minutes", control.context_minutes}});
  }
  write_manifest(o.out, "scenario-filter", file_hash(o.returns), 0,
                 {{"returns", o.returns},
                  {"query",
                   {{"tag", o.tag}, {"window", q.window}, {"threshold", q.threshold}, {"max_samples", q.max_samples}}},
                  {"samples", samples.size()}});
  std::cout << "scenario-filter: " << samples.size() << " sample(s) -> " << o.out << '\n';
  return 0;
}

// ---- tokenize ----

struct TokenizeOpts {
  std::string log, out;
  std::optional<Ticks> reference;
  bool calibrate{false}, fit{false}, images{false};
  int depth{3};
  double alpha{0.1}, perturbation{0.1};
};

int cmd_tokenize(const TokenizeOpts& o) {
  const auto records = read_order_log(o.log);
  if (records.empty()) throw Error("tokenize: " + o.log + " has no events");
  const auto orders = to_orders(records);
  CodecConfig codec = CodecConfig::defaults();
  if (o.calibrate) {
    std::vector<Volume> volumes;
    std::vector<TimeMs> intervals;
    for (const auto& ord : orders) {
      volumes.push_back(ord.volume);
      intervals.push_back(ord.interval);
    }
    codec = CodecConfig::calibrate(volumes, intervals);
  }
  const Ticks reference = o.reference.value_or(records.front().price);
  const auto tokens = tokenize(orders, codec, reference);

  const fs::path out(o.out);
  fs::create_directories(out);
  write_json(out / "codec.json", to_json(codec));
  {
    auto f = open_out(out / "tokens.csv");
    f << "seq,token,kind,price_bucket,volume_bucket,interval_bucket,state\n";
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto d = decode_token(tokens[i].token);
      f << records[i].seq << ',' << tokens[i].token.index() << ',' << kind_code(d.kind) << ',' << d.price_bucket << ','
        << d.volume_bucket << ',' << d.interval_bucket << ',' << tokens[i].state.code() << '\n';
    }
  }
  json extra = {{"log", o.log}, {"tokens", tokens.size()}, {"reference", reference}};
  if (o.fit || o.images) {
    // minute batches come from replaying the log through the session engine
    SessionConfig cfg;
    cfg.flow = std::make_shared<ReplayFlowModel>(orders);
    cfg.codec = codec;
    cfg.open_reference = reference;
    cfg.horizon_minutes =
        static_cast<int>((records.back().timestamp - records.front().timestamp) / kMillisPerMinute) + 1;
    const auto batches = minute_batches(run(cfg));
    if (o.fit) {
      const std::vector<std::vector<ContextualToken>> corpus{tokens};
      CountModel::fit(corpus, o.depth, o.alpha).save(out / "count.cm");
      BatchModel::build(batches, codec, o.perturbation).save(out / "batches.bm");
      write_json(out / "simulate.json", {{"version", kConfigVersion},
                                         {"instrument", "SYN"},
                                         {"seed", 1},
                                         {"horizon_minutes", 30},
                                         {"open_reference", reference},
                                         {"codec", to_json(codec)},
                                         {"flow", {{"type", "count"}, {"model", "count.cm"}, {"batches", "batches.bm"}}}});
      extra["models"] = {"count.cm", "batches.bm", "simulate.json"};
    }
    if (o.images) {
      fs::create_directories(out / "images");
      for (const auto& b : batches) {
        char name[32];
        std::snprintf(name, sizeof name, "minute_%04lld.png", static_cast<long long>(b.minute));
        write_image_png(out / "images" / name, batch_to_image(b.orders, b.open_mid, codec, b.minute));
      }
      extra["images"] = batches.size();
    }
  }
  write_manifest(out, "tokenize", file_hash(o.log), 0, extra);
  std::cout << "tokenized " << tokens.size() << " orders -> " << o.out << '\n';
  return 0;
}

void log_error(const std::string& command, const std::string& message) {
  std::cerr << json{{"level", "error"}, {"command", command}, {"message", message}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mars: order-flow market simulator and analysis tools"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  ReplayOpts replay;
  auto* c_replay = app.add_subcommand("replay", "Replay a historical order log through the session engine");
  c_replay->add_option("--log", replay.log, "Order log (CSV, or .bin)")->required()->check(CLI::ExistingFile);
  c_replay->add_option("--out", replay.out, "Output directory")->required();
  c_replay->add_option("--minutes", replay.minutes, "Horizon in minutes (default: whole log)");
  c_replay->add_option("--instrument", replay.instrument, "Instrument label");
  c_replay->add_flag("--check", replay.check, "Verify trades against direct matching");

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Run seeded rollouts of a session config");
  c_sim->add_option("--config", sim.config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--rollouts", sim.rollouts, "Number of rollouts")->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "Base seed (default: config seed)");
  c_sim->add_option("--threads", sim.threads, "Worker threads (0 = MARS_THREADS or hardware)")->check(CLI::NonNegativeNumber);

  ForecastOpts fc;
  auto* c_fc = app.add_subcommand("forecast", "Majority-vote trend forecast over rollouts");
  c_fc->add_option("--config", fc.config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
  c_fc->add_option("--out", fc.out, "Output directory")->required();
  c_fc->add_option("--rollouts", fc.rollouts, "Number of rollouts")->check(CLI::PositiveNumber);
  c_fc->add_option("--seed", fc.seed, "Base seed");
  c_fc->add_option("--threads", fc.threads, "Worker threads")->check(CLI::NonNegativeNumber);
  c_fc->add_option("--low", fc.low, "Labels below this are Down");
  c_fc->add_option("--high", fc.high, "Labels above this are Up");

  ImpactOpts imp;
  auto* c_imp = app.add_subcommand("impact", "Paired-seed market impact of the configured agents");
  auto* imp_cfg =
      c_imp->add_option("--config", imp.config, "Session config with agents (JSON)")->check(CLI::ExistingFile);
  auto* imp_with = c_imp->add_option("--with", imp.with_dir, "Trajectories with the agent")->check(CLI::ExistingDirectory);
  auto* imp_without =
      c_imp->add_option("--without", imp.without_dir, "Counterfactual trajectories")->check(CLI::ExistingDirectory);
  imp_with->needs(imp_without);
  imp_without->needs(imp_with);
  imp_cfg->excludes(imp_with);
  c_imp->add_option("--out", imp.out, "Output directory")->required();
  c_imp->add_option("--rollouts", imp.rollouts, "Number of paired rollouts")->check(CLI::PositiveNumber);
  c_imp->add_option("--seed", imp.seed, "Base seed");
  c_imp->add_option("--threads", imp.threads, "Worker threads")->check(CLI::NonNegativeNumber);
  c_imp->add_option("--window-start", imp.start_minute, "First minute of the trading window");
  c_imp->add_option("--window-end", imp.end_minute, "Minute after the trading window");
  c_imp->add_option("--lookback", imp.lookback, "Minutes of history for sigma and moments")->check(CLI::PositiveNumber);

  ImpactFitOpts fit;
  auto* c_fit = app.add_subcommand("impact-fit", "Fit the square-root law and the long-term impact ODE");
  c_fit->add_option("--records", fit.records, "records.csv from `impact`")->required()->check(CLI::ExistingFile);
  c_fit->add_option("--out", fit.out, "Output directory")->required();
  c_fit->add_option("--mode", fit.mode, "What to fit")->check(CLI::IsMember({"all", "sqrt", "ode", "search"}));
  c_fit->add_option("--l1", fit.l1, "Lasso penalty for the ODE fit")->check(CLI::NonNegativeNumber);
  c_fit->add_option("--folds", fit.folds, "Cross-validation folds for the factor search")->check(CLI::Range(2, 100));
  c_fit->add_option("--min-gain", fit.min_gain, "Smallest held-out R^2 gain that adds a factor");

  StylizedOpts sty;
  auto* c_sty = app.add_subcommand("stylized", "Stylized-fact report of return series");
  c_sty->add_option("--returns", sty.returns, "Minute-return matrix CSV")->check(CLI::ExistingFile);
  c_sty->add_option("--in,--trajectory", sty.trajectories, "Trajectory or simulate output directory (repeatable)")
      ->check(CLI::ExistingDirectory);
  c_sty->add_option("--basis", sty.basis, "Trade price basis for trajectories")->check(CLI::IsMember({"last", "mean"}));
  c_sty->add_option("--out", sty.out, "Output directory");
  c_sty->add_option("--report", sty.report, "Report path (default <out>/stylized.json)");

  DetectOpts det;
  auto* c_det = app.add_subcommand("detect", "Spread-distribution anomaly check of a simulation against a replay");
  c_det->add_option("--sim", det.sim, "Simulated trajectory directory")->required()->check(CLI::ExistingDirectory);
  c_det->add_option("--replay", det.replay, "Replay trajectory directory")->required()->check(CLI::ExistingDirectory);
  c_det->add_option("--threshold", det.threshold, "Flag when the overlap is below this")->check(CLI::Range(0.0, 1.0));
  c_det->add_option("--bins", det.bins, "Histogram bins")->check(CLI::PositiveNumber);
  c_det->add_option("--out", det.out, "Output directory")->required();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("rl-train", "Train the execution policy with REINFORCE");
  c_tr->add_option("--config", tr.config, "Training config (JSON)")->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->add_option("--episodes", tr.episodes, "Total training episodes")->check(CLI::PositiveNumber);
  c_tr->add_option("--batch", tr.batch, "Episodes per policy update")->check(CLI::PositiveNumber);
  c_tr->add_option("--iterations", tr.iterations, "Policy updates (overrides --episodes)")->check(CLI::PositiveNumber);
  c_tr->add_option("--lr", tr.lr, "Learning rate");
  c_tr->add_option("--temperature", tr.temperature, "Softmax temperature")->check(CLI::PositiveNumber);
  c_tr->add_option("--seed", tr.seed, "Training seed");
  c_tr->add_option("--eval-episodes", tr.eval_episodes, "Held-out evaluation episodes")->check(CLI::PositiveNumber);

  ScenarioOpts sc;
  auto* c_sc = app.add_subcommand("scenario-filter", "Find scenario windows in minute-return data");
  c_sc->add_option("--returns", sc.returns, "Minute-return matrix CSV")->required()->check(CLI::ExistingFile);
  c_sc->add_option("--out", sc.out, "Output directory")->required();
  c_sc->add_option("--tag", sc.tag, "Scenario")->check(CLI::IsMember({"sharp-drop", "sharp-rise", "trend-reversal"}));
  c_sc->add_option("--window", sc.window, "Window length in minutes");
  c_sc->add_option("--threshold", sc.threshold, "Return threshold (default -0.05 for drops, 0.05 otherwise)");
  c_sc->add_option("--max-samples", sc.max_samples, "Sample cap");
  c_sc->add_option("--context", sc.context, "Context minutes in each emitted control")->check(CLI::NonNegativeNumber);

  TokenizeOpts tk;
  auto* c_tk = app.add_subcommand("tokenize", "Tokenize an order log and optionally fit flow models");
  c_tk->add_option("--log", tk.log, "Order log (CSV, or .bin)")->required()->check(CLI::ExistingFile);
  c_tk->add_option("--out", tk.out, "Output directory")->required();
  c_tk->add_option("--reference", tk.reference, "Reference price in ticks (default: first order)");
  c_tk->add_flag("--calibrate", tk.calibrate, "Calibrate volume/interval edges from the log");
  c_tk->add_flag("--fit", tk.fit, "Fit count and batch models and write a simulate config");
  c_tk->add_flag("--images", tk.images, "Write per-minute order images as PNG");
  c_tk->add_option("--depth", tk.depth, "Count-model context depth")->check(CLI::Range(0, 8));
  c_tk->add_option("--alpha", tk.alpha, "Unigram smoothing")->check(CLI::PositiveNumber);
  c_tk->add_option("--perturbation", tk.perturbation, "Batch-model cell jitter")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (sub == c_replay) return cmd_replay(replay);
    if (sub == c_sim) return cmd_simulate(sim);
    if (sub == c_fc) return cmd_forecast(fc);
    if (sub == c_imp) return cmd_impact(imp);
    if (sub == c_fit) return cmd_impact_fit(fit);
    if (sub == c_sty) return cmd_stylized(sty);
    if (sub == c_det) return cmd_detect(det);
    if (sub == c_tr) return cmd_rl_train(tr);
    if (sub == c_sc) return cmd_scenario(sc);
    if (sub == c_tk) return cmd_tokenize(tk);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n' << sub->help();
    return 2;
  } catch (const std::exception& e) {
    log_error(name, e.what());
    return 1;
  }
  return 2;
}
