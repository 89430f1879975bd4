#pragma once

#include "mars/flow_models.hpp"

#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace mars {

/// Inclusive minute-of-day ranges of the trading sessions (minute label =
/// end of the one-minute bar). Defaults: 09:31-11:30 and 13:01-15:00.
struct TradingSessions {
  std::vector<std::pair<int, int>> ranges{{9 * 60 + 31, 11 * 60 + 30}, {13 * 60 + 1, 15 * 60}};
  /// Index of the session containing the minute, or -1.
  int session_of(int minute_of_day) const noexcept;
  int longest() const noexcept;
};

struct MinuteReturnMatrix {
  std::vector<std::string> instruments;
  std::vector<std::string> dates;          // per row, as written (YYYY-MM-DD)
  std::vector<int> minutes;                // per row, minutes since midnight
  std::vector<std::vector<double>> values; // rows x instruments

  std::size_t rows() const noexcept { return dates.size(); }
  friend bool operator==(const MinuteReturnMatrix&, const MinuteReturnMatrix&) = default;
};

/// "HH:MM" or "HH:MM:SS" to minutes since midnight; throws otherwise.
int parse_clock(const std::string& s);
std::string format_clock(int minute_of_day);

/// Reads the date,minute,<instrument>... layout. Every problem (bad header,
/// non-numeric cells, ragged rows, out-of-session minutes) is collected with
/// its line number and reported in one error.
MinuteReturnMatrix parse_minute_returns(std::istream& in, const std::string& name = "<input>",
                                        const TradingSessions& sessions = {});
MinuteReturnMatrix load_minute_returns(const std::filesystem::path& path, const TradingSessions& sessions = {});
void write_minute_returns(const std::filesystem::path& path, const MinuteReturnMatrix& m);

enum class ScenarioTag : std::uint8_t { SharpDrop, SharpRise, TrendReversal };
std::string scenario_name(ScenarioTag t);
ScenarioTag scenario_from_name(const std::string& s);

struct ScenarioSample {
  std::string date;
  int start_minute{0}; // first minute label in the window
  int end_minute{0};   // last minute label in the window
  std::string instrument;
  double window_return{0.0};
  ScenarioTag tag{ScenarioTag::SharpDrop};
  friend bool operator==(const ScenarioSample&, const ScenarioSample&) = default;
};

struct ScenarioQuery {
  int window{25};
  double threshold{-0.05};
  std::size_t max_samples{30};
  ScenarioTag tag{ScenarioTag::SharpDrop};
};

/// Windows of consecutive minutes inside one session of one day whose summed
/// return meets the scenario: SharpDrop sum <= threshold (< 0), SharpRise
/// sum >= threshold (> 0), TrendReversal first half >= threshold and second
/// half <= -threshold (threshold > 0). Candidates are scanned by date, end
/// minute and instrument; a sample is kept only if its date, instrument and
/// start minute are all unused.
std::vector<ScenarioSample> scenario_filter(const MinuteReturnMatrix& m, const ScenarioQuery& q,
                                            const TradingSessions& sessions = {});

/// The sample window's returns as a Scenario control; the first
/// `context_minutes` are history and the rest steer generation.
ControlSignal scenario_to_control(const ScenarioSample& s, const MinuteReturnMatrix& m, int context_minutes = 15);

} // namespace mars
