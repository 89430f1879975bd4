#include "mars/exec_agents.hpp"
#include "mars/policy.hpp"
#include "mars/sim_engine.hpp"
#include "support/reference_matcher.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>

using namespace mars;

namespace {

// Runs one buying TWAP against a fixed replay stream and returns its report.
ExecReport twap_on_replay(TwapConfig twap, std::uint64_t stream_seed = 21) {
  SessionConfig cfg;
  cfg.seed = 1;
  cfg.horizon_minutes = 7;
  auto orders = testing::StreamGenerator(stream_seed).take(6000);
  cfg.flow = std::make_shared<ReplayFlowModel>(orders);
  auto report = std::make_shared<ExecReport>();
  cfg.agents.push_back(twap_factory(twap, report));
  run(cfg);
  return *report;
}

TwapConfig base_twap(Volume total, double pvr, int ap) {
  TwapConfig t;
  t.total = total;
  t.start = kMillisPerMinute;
  t.pvr = pvr;
  t.ap = ap;
  return t;
}

ExecReport filled_at(double vwap, Volume q) {
  ExecReport r;
  r.executed = q;
  r.target = q;
  r.notional = vwap * static_cast<double>(q);
  r.fills.push_back(Fill{0, static_cast<Ticks>(vwap), q});
  return r;
}

} // namespace

TEST_SUITE("exec-agents") {

TEST_CASE("ten equal slices with remainder on the last") {
  auto t = base_twap(1000, 0.9, 1);
  CHECK(t.intervals() == 10);
  for (int i = 0; i < 10; ++i) CHECK(t.slice(i) == 100);
  CHECK(t.scheduled_through(4) == 500);
  t.total = 1005;
  CHECK(t.slice(9) == 105);
  CHECK(t.scheduled_through(9) == 1005);
  CHECK(t.id() == "L1-P0.9");
  CHECK(base_twap(10, 0.0, 5).id() == "L5-P0.0");
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(base_twap(1000, 0.3, 2).validate());
  CHECK_THROWS_AS(base_twap(1000, 0.35, 2).validate(), Error);
  CHECK_THROWS_AS(base_twap(1000, 0.3, 6).validate(), Error);
  CHECK_THROWS_AS(base_twap(0, 0.3, 2).validate(), Error);
  auto odd = base_twap(1000, 0.3, 2);
  odd.duration = 100'000;
  CHECK_THROWS_AS(odd.validate(), Error);
}

TEST_CASE("twap respects its caps on a replay stream") {
  const auto r = twap_on_replay(base_twap(1000, 0.9, 1));
  CHECK(r.executed <= 1000);
  CHECK(r.max_committed <= 1000);
  CHECK(r.fulfillment() >= 0.0);
  CHECK(r.fulfillment() <= 1.0);
  CHECK(r.passive_orders > 0);
  Volume filled = 0;
  for (const auto& f : r.fills) filled += f.volume;
  CHECK(filled == r.executed);
}

TEST_CASE("PVR zero posts nothing passive") {
  const auto r = twap_on_replay(base_twap(1000, 0.0, 2));
  CHECK(r.passive_orders == 0);
  CHECK(r.aggressive_orders > 0);
}

TEST_CASE("AP zero never crosses") {
  const auto r = twap_on_replay(base_twap(1000, 0.5, 0));
  CHECK(r.aggressive_orders == 0);
  CHECK(r.passive_orders > 0);
}

TEST_CASE("fulfillment does not drop with a more aggressive level") {
  for (std::uint64_t s : {21u, 22u, 23u}) {
    double prev = -1.0;
    for (int ap = 1; ap <= 5; ++ap) {
      const double fr = twap_on_replay(base_twap(3000, 0.5, ap), s).fulfillment();
      CHECK(fr >= prev);
      prev = fr;
    }
  }
}

TEST_CASE("reward") {
  CHECK(reward(0.90, 3.0) == doctest::Approx(3.90).epsilon(1e-12));
  CHECK(reward(1.0, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(reward(0.975, 0.0) == doctest::Approx(0.4875).epsilon(1e-12));
  CHECK(fulfillment_alpha(0.5) == 1.0);
  CHECK(fulfillment_alpha(1.0) == 0.0);
  // continuity of alpha * fr at the knee
  const double above = std::nextafter(0.95, 1.0);
  CHECK(std::abs(reward(above, 0.0) - reward(0.95, 0.0)) < 1e-12);
  CHECK_THROWS_AS(RewardConfig{1.0}.validate(), Error);
}

TEST_CASE("price advantage") {
  const auto bench = filled_at(10000.0, 100);
  CHECK(*price_advantage(bench, bench) == 0.0);
  CHECK(*price_advantage(filled_at(9990.0, 100), bench) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_FALSE(price_advantage(filled_at(9990.0, 100), ExecReport{}));
  auto sell = filled_at(10010.0, 50);
  sell.side = Side::Sell;
  auto sell_bench = bench;
  sell_bench.side = Side::Sell;
  CHECK(*price_advantage(sell, sell_bench) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("policy probabilities and json") {
  Policy p;
  Rng rng(4);
  for (auto& row : p.weights)
    for (auto& w : row) w = standard_normal(rng);
  const Features x{1.0, 0.4, 0.7, -0.2, 1.0};
  const auto probs = p.probabilities(x);
  double s = 0.0;
  for (double q : probs) s += q;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  const auto back = policy_from_json(nlohmann::json::parse(to_json(p).dump()));
  CHECK(back.weights == p.weights);
  CHECK(back.temperature == p.temperature);
  CHECK(action_of(action_index(9, 1)).ap == 1);
  CHECK(action_of(action_index(9, 1)).pvr == doctest::Approx(0.9));
}

TEST_CASE("analytic gradient matches finite differences") {
  Policy p;
  p.temperature = 0.7;
  Rng rng(12);
  for (auto& row : p.weights)
    for (auto& w : row) w = 0.5 * standard_normal(rng);
  const Features x{1.0, 0.3, 0.8, 0.25, 0.0};
  for (int action : {0, 17, 65}) {
    const auto g = p.grad_log_probability(x, action);
    for (int a = 0; a < kActionCount; a += 5)
      for (int f = 0; f < kFeatureCount; ++f) {
        const double h = 1e-5;
        Policy up = p, dn = p;
        up.weights[a][f] += h;
        dn.weights[a][f] -= h;
        const double fd = (up.log_probability(x, action) - dn.log_probability(x, action)) / (2 * h);
        const double an = g[a][f];
        if (an == 0.0 && fd == 0.0) continue;
        REQUIRE(std::abs(fd - an) <= 1e-6 * std::max(std::abs(an), 1e-3));
      }
  }
}

TEST_CASE("equal returns give a zero update and constants do not matter") {
  Policy p;
  std::vector<Transition> batch;
  Rng rng(2);
  for (int i = 0; i < 32; ++i)
    batch.push_back(Transition{{1.0, uniform01(rng), uniform01(rng), 0.0, 0.0}, static_cast<int>(uniform_int(rng, 0, 65)), 3.0});
  const auto same = policy_gradient_update(p, batch, 0.1);
  CHECK(same.applied);
  CHECK(same.policy.weights == p.weights);

  for (auto& t : batch) t.ret = standard_normal(rng);
  auto shifted = batch;
  for (auto& t : shifted) t.ret += 1000.0;
  const auto a = policy_gradient_update(p, batch, 0.1);
  const auto b = policy_gradient_update(p, shifted, 0.1);
  for (int k = 0; k < kActionCount; ++k)
    for (int f = 0; f < kFeatureCount; ++f) CHECK(a.policy.weights[k][f] == doctest::Approx(b.policy.weights[k][f]).epsilon(1e-9));

  batch[0].ret = std::nan("");
  const auto bad = policy_gradient_update(p, batch, 0.1);
  CHECK_FALSE(bad.applied);
  CHECK_FALSE(bad.diagnostics.empty());
  CHECK(bad.policy.weights == p.weights);
}

TEST_CASE("bandit: the dominant action gains probability every update") {
  Policy p;
  const Features x{1.0, 0.0, 0.0, 0.0, 0.0};
  constexpr int best = 40;
  Rng rng(9);
  double prev = p.probabilities(x)[best];
  for (int it = 0; it < 50; ++it) {
    std::vector<Transition> batch;
    for (int i = 0; i < 64; ++i) {
      const int a = p.sample(x, rng);
      batch.push_back({x, a, a == best ? 1.0 : 0.0});
    }
    p = policy_gradient_update(p, batch, 2.0).policy;
    const double now = p.probabilities(x)[best];
    CHECK(now >= prev);
    prev = now;
  }
  CHECK(prev > 1.0 / kActionCount);
}

TEST_CASE("execution episode is reproducible") {
  ExecEnvConfig env;
  const ActionChooser fixed = [](const ExecState&) { return action_index(9, 1); };
  const auto a = run_episode(env, fixed, 5);
  const auto b = run_episode(env, fixed, 5);
  CHECK(a.reward == b.reward);
  CHECK(a.transitions.size() == 10);
  // the fixed chooser reproduces the benchmark configuration exactly
  REQUIRE(a.price_advantage);
  CHECK(*a.price_advantage == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.fulfillment >= 0.0);
  CHECK(a.fulfillment <= 1.0);
}

} // TEST_SUITE
