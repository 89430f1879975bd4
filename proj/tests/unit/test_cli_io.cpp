#include "mars/analytics.hpp"
#include "mars/minute_returns.hpp"
#include "mars/order_log.hpp"
#include "mars/sim_engine.hpp"
#include "support/reference_matcher.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace mars;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mars_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int mars_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MARS_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MinuteReturnMatrix parse(const std::string& text) {
  std::istringstream in(text);
  return parse_minute_returns(in, "t.csv");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// One day, one instrument: every minute of both sessions at `base`, with
// overrides for selected minutes.
MinuteReturnMatrix day(const std::string& date, const std::vector<std::string>& names,
                       const std::map<int, std::vector<double>>& overrides = {}) {
  MinuteReturnMatrix m;
  m.instruments = names;
  for (const auto& [a, b] : TradingSessions{}.ranges)
    for (int t = a; t <= b; ++t) {
      m.dates.push_back(date);
      m.minutes.push_back(t);
      auto it = overrides.find(t);
      m.values.push_back(it != overrides.end() ? it->second : std::vector<double>(names.size(), 0.0));
    }
  return m;
}

void append(MinuteReturnMatrix& m, const MinuteReturnMatrix& more) {
  m.dates.insert(m.dates.end(), more.dates.begin(), more.dates.end());
  m.minutes.insert(m.minutes.end(), more.minutes.begin(), more.minutes.end());
  m.values.insert(m.values.end(), more.values.begin(), more.values.end());
}

} // namespace

TEST_SUITE("cli-io") {

TEST_CASE("minute-return parsing errors") {
  CHECK(error_of("").find("missing header") != std::string::npos);
  CHECK(error_of("when,minute,A\n").find("missing header") != std::string::npos);
  CHECK(parse("date,minute,A\n2024-01-02,09:31,0.001\n").rows() == 1);
  CHECK(parse("date,minute,A\n2024-01-02,09:31:00,0.001\n").minutes[0] == 9 * 60 + 31);

  const auto lunch = error_of("date,minute,A\n2024-01-02,09:31,0.001\n2024-01-02,12:00,0.001\n");
  CHECK(lunch.find("t.csv:3") != std::string::npos);
  CHECK(lunch.find("outside trading sessions") != std::string::npos);

  // every bad row is reported with its line number
  const auto many = error_of("date,minute,A,B\n2024-01-02,09:31,x,0.1\n2024-01-02,09:32,0.1\n2024-01-02,25:00,0,0\n");
  CHECK(many.find("3 malformed row(s)") != std::string::npos);
  CHECK(many.find("t.csv:2: column A: non-numeric cell 'x'") != std::string::npos);
  CHECK(many.find("t.csv:3: expected 4 fields") != std::string::npos);
  CHECK(many.find("t.csv:4: bad time") != std::string::npos);
  CHECK_FALSE(error_of("date,minute,A\n2024-01-02,09:31,1\n2024-01-02,09:31,2\n").empty());
  CHECK_THROWS_AS(parse_clock("9h31"), Error);
  CHECK(format_clock(9 * 60 + 31) == "09:31:00");
}

TEST_CASE("minute-return files round trip") {
  const auto dir = scratch("returns");
  auto m = day("2024-01-02", {"A", "B,quoted"}, {{9 * 60 + 40, {0.0012345678901, -3e-7}}});
  write_minute_returns(dir / "r.csv", m);
  CHECK(load_minute_returns(dir / "r.csv") == m);
  fs::remove_all(dir);
}

TEST_CASE("scenario filter examples") {
  // a -6% minute at 10:00; the earliest window holding it ends there
  auto m = day("2024-01-02", {"A"}, {{600, {-0.06}}});
  const auto hits = scenario_filter(m, ScenarioQuery{});
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].start_minute == 576);
  CHECK(hits[0].end_minute == 600);
  CHECK(hits[0].window_return == -0.06);

  // a -4% drop is not enough
  std::map<int, std::vector<double>> small;
  for (int t = 600; t < 625; ++t) small[t] = {-0.04 / 25.0};
  CHECK(scenario_filter(day("2024-01-02", {"A"}, small), ScenarioQuery{}).empty());

  // a drop split across the lunch break never forms a window
  std::map<int, std::vector<double>> lunch;
  for (int t = 11 * 60 + 18; t <= 11 * 60 + 30; ++t) lunch[t] = {-0.003};
  for (int t = 13 * 60 + 1; t <= 13 * 60 + 12; ++t) lunch[t] = {-0.003};
  CHECK(scenario_filter(day("2024-01-02", {"A"}, lunch), ScenarioQuery{}).empty());

  // overlapping windows on one date collapse to the earliest
  std::map<int, std::vector<double>> deep;
  for (int t = 600; t < 640; ++t) deep[t] = {-0.01};
  CHECK(scenario_filter(day("2024-01-02", {"A"}, deep), ScenarioQuery{}).size() == 1);

  ScenarioQuery wide;
  wide.window = 200;
  CHECK_THROWS_AS(scenario_filter(m, wide), Error);
  ScenarioQuery wrong_sign;
  wrong_sign.threshold = 0.05;
  CHECK_THROWS_AS(scenario_filter(m, wrong_sign), Error);
}

TEST_CASE("scenario filter ignores column order") {
  std::map<int, std::vector<double>> d1, d2;
  for (int t = 600; t < 625; ++t) d1[t] = {-0.003, 0.0, -0.0025};
  for (int t = 800; t < 825; ++t) d2[t] = {0.0, -0.004, 0.0};
  auto m = day("2024-01-02", {"A", "B", "C"}, d1);
  append(m, day("2024-01-03", {"A", "B", "C"}, d2));
  auto swapped = m;
  swapped.instruments = {"C", "B", "A"};
  for (auto& row : swapped.values) std::swap(row[0], row[2]);
  const auto a = scenario_filter(m, ScenarioQuery{});
  const auto b = scenario_filter(swapped, ScenarioQuery{});
  CHECK(a == b);
  REQUIRE(a.size() == 2);
  CHECK(a[0].date == "2024-01-02");
  CHECK(a[1].instrument == "B");
}

TEST_CASE("scenario controls") {
  std::map<int, std::vector<double>> drop;
  for (int t = 600; t < 625; ++t) drop[t] = {-0.0001 * (t - 590)};
  const auto m = day("2024-01-02", {"A"}, drop);
  const auto hits = scenario_filter(m, ScenarioQuery{});
  REQUIRE(hits.size() == 1);
  const auto c = scenario_to_control(hits[0], m);
  CHECK(c.kind == ControlKind::Scenario);
  REQUIRE(c.returns.size() == 25);
  CHECK(c.context_minutes == 15);
  const int first = hits[0].start_minute;
  CHECK(c.returns[0] == (first < 600 ? 0.0 : -0.0001 * (first - 590)));
  CHECK(c.returns[24] == -0.0001 * (hits[0].end_minute - 590));
  CHECK_THROWS_AS(scenario_to_control(hits[0], m, 26), Error);
}

TEST_CASE("a replayed day is its own scenario") {
  SessionConfig cfg;
  cfg.horizon_minutes = 40;
  cfg.flow = std::make_shared<ReplayFlowModel>(testing::StreamGenerator(41).take(40000));
  const auto traj = run(cfg);
  const auto r = returns_from(traj);
  REQUIRE(r.values.size() >= 30);

  MinuteReturnMatrix m;
  m.instruments = {"SYN"};
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    m.dates.push_back("2024-01-02");
    m.minutes.push_back(9 * 60 + 31 + static_cast<int>(i));
    m.values.push_back({r.values[i]});
  }
  ScenarioSample s{"2024-01-02", 9 * 60 + 31, 9 * 60 + 55, "SYN", 0.0, ScenarioTag::SharpDrop};
  const auto c = scenario_to_control(s, m);
  const std::vector<double> head(r.values.begin(), r.values.begin() + 25);
  CHECK(c.returns == head);
  CHECK(*correlation(c.returns, head) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*trajectory_correlation(traj, run(cfg)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("command-line exit codes") {
  const auto dir = scratch("exit");
  const auto log = dir / "log.txt";
  CHECK(mars_cli("--help", log) == 0);
  CHECK(mars_cli("simulate --help", log) == 0);
  CHECK(mars_cli("simulate --out \"" + (dir / "o").string() + "\"", log) == 2);
  CHECK(mars_cli("simulate --bogus-flag", log) == 2);
  CHECK(mars_cli("no-such-command", log) == 2);

  // a syntactically valid call that fails at run time
  {
    std::ofstream bad(dir / "records.csv");
    bad << "not,a,records,file\n";
  }
  CHECK(mars_cli("impact-fit --records \"" + (dir / "records.csv").string() + "\" --out \"" + (dir / "fit").string() + "\"",
                 log) == 1);
  const auto err = slurp(log);
  CHECK(err.find("unexpected header") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("repeated runs give identical files") {
  const auto dir = scratch("repeat");
  {
    std::ofstream cfg(dir / "noise.json");
    cfg << R"({"version": 1, "instrument": "SYN", "seed": 5, "horizon_minutes": 4, "open_reference": 10000,
               "flow": {"type": "noise", "mean_interval_ms": 500}})";
  }
  const auto log = dir / "log.txt";
  for (const char* out : {"a", "b"})
    REQUIRE(mars_cli("simulate --config \"" + (dir / "noise.json").string() + "\" --rollouts 2 --out \"" +
                         (dir / out).string() + "\"",
                     log) == 0);

  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    const auto other = dir / "b" / rel;
    REQUIRE(fs::exists(other));
    if (rel == "manifest.json") {
      auto ja = nlohmann::json::parse(slurp(e.path()));
      auto jb = nlohmann::json::parse(slurp(other));
      ja.erase("created_at");
      jb.erase("created_at");
      CHECK(ja == jb);
    } else {
      CHECK(slurp(e.path()) == slurp(other));
    }
    ++compared;
  }
  CHECK(compared >= 11); // summary, manifest and five files per rollout
  fs::remove_all(dir);
}

} // TEST_SUITE
