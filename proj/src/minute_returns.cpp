#include "mars/minute_returns.hpp"

#include "mars/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mars {

int TradingSessions::session_of(int minute_of_day) const noexcept {
  for (std::size_t i = 0; i < ranges.size(); ++i)
    if (minute_of_day >= ranges[i].first && minute_of_day <= ranges[i].second) return static_cast<int>(i);
  return -1;
}

int TradingSessions::longest() const noexcept {
  int best = 0;
  for (const auto& [a, b] : ranges) best = std::max(best, b - a + 1);
  return best;
}

int parse_clock(const std::string& s) {
  int h = 0, m = 0, sec = 0;
  char tail = 0;
  const int n = std::sscanf(s.c_str(), "%d:%d:%d%c", &h, &m, &sec, &tail);
  if (n == 2 || n == 3) {
    if (h >= 0 && h < 24 && m >= 0 && m < 60 && sec >= 0 && sec < 60 && (n == 2 || sec == 0)) return h * 60 + m;
  }
  throw Error("bad time '" + s + "' (expected HH:MM or HH:MM:00)");
}

std::string format_clock(int minute_of_day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d:00", minute_of_day / 60, minute_of_day % 60);
  return buf;
}

MinuteReturnMatrix parse_minute_returns(std::istream& in, const std::string& name, const TradingSessions& sessions) {
  MinuteReturnMatrix m;
  std::string line;
  if (!std::getline(in, line) || line.empty() || line == "\r") throw Error(name + ": missing header");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "date" || header[1] != "minute")
    throw Error(name + ":1: missing header (expected date,minute,<instrument>...)");
  m.instruments.assign(header.begin() + 2, header.end());
  {
    std::set<std::string> seen;
    for (const auto& s : m.instruments)
      if (s.empty() || !seen.insert(s).second) throw Error(name + ":1: empty or duplicate instrument column '" + s + "'");
  }

  std::vector<std::string> errors;
  std::set<std::pair<std::string, int>> keys;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    const std::string where = name + ":" + std::to_string(lineno) + ": ";
    if (f.size() != header.size()) {
      errors.push_back(where + "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
      continue;
    }
    int minute = 0;
    try {
      minute = parse_clock(f[1]);
    } catch (const Error& e) {
      errors.push_back(where + e.what());
      continue;
    }
    if (sessions.session_of(minute) < 0) {
      errors.push_back(where + "minute " + f[1] + " outside trading sessions");
      continue;
    }
    if (f[0].empty()) {
      errors.push_back(where + "empty date");
      continue;
    }
    if (!keys.insert({f[0], minute}).second) {
      errors.push_back(where + "duplicate row for " + f[0] + " " + f[1]);
      continue;
    }
    std::vector<double> row;
    bool ok = true;
    for (std::size_t c = 2; c < f.size(); ++c) {
      try {
        const double v = parse_double(f[c]);
        if (!std::isfinite(v)) throw Error("non-finite value");
        row.push_back(v);
      } catch (const Error&) {
        errors.push_back(where + "column " + header[c] + ": non-numeric cell '" + f[c] + "'");
        ok = false;
      }
    }
    if (!ok) continue;
    m.dates.push_back(f[0]);
    m.minutes.push_back(minute);
    m.values.push_back(std::move(row));
  }
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << name << ": " << errors.size() << " malformed row(s)";
    for (const auto& e : errors) msg << "\n  " << e;
    throw Error(msg.str());
  }
  return m;
}

MinuteReturnMatrix load_minute_returns(const std::filesystem::path& path, const TradingSessions& sessions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return parse_minute_returns(in, path.string(), sessions);
}

void write_minute_returns(const std::filesystem::path& path, const MinuteReturnMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "date,minute";
  for (const auto& s : m.instruments) out << ',' << csv_field(s);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << csv_field(m.dates[r]) << ',' << format_clock(m.minutes[r]);
    for (double v : m.values[r]) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::string scenario_name(ScenarioTag t) {
  switch (t) {
  case ScenarioTag::SharpDrop: return "sharp-drop";
  case ScenarioTag::SharpRise: return "sharp-rise";
  case ScenarioTag::TrendReversal: return "trend-reversal";
  }
  return "sharp-drop";
}

ScenarioTag scenario_from_name(const std::string& s) {
  if (s == "sharp-drop") return ScenarioTag::SharpDrop;
  if (s == "sharp-rise") return ScenarioTag::SharpRise;
  if (s == "trend-reversal") return ScenarioTag::TrendReversal;
  throw Error("unknown scenario '" + s + "' (sharp-drop, sharp-rise, trend-reversal)");
}

namespace {

// Row indices grouped by (date, session), ordered by minute.
std::map<std::pair<std::string, int>, std::vector<std::size_t>> session_rows(const MinuteReturnMatrix& m,
                                                                             const TradingSessions& sessions) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const int s = sessions.session_of(m.minutes[r]);
    if (s >= 0) out[{m.dates[r], s}].push_back(r);
  }
  for (auto& [k, rows] : out)
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return m.minutes[a] < m.minutes[b]; });
  return out;
}

} // namespace

std::vector<ScenarioSample> scenario_filter(const MinuteReturnMatrix& m, const ScenarioQuery& q,
                                            const TradingSessions& sessions) {
  if (q.window < 2) throw Error("scenario_filter: window must be at least 2 minutes");
  if (q.window > sessions.longest())
    throw Error("scenario_filter: window of " + std::to_string(q.window) + " minutes exceeds the longest session (" +
                std::to_string(sessions.longest()) + ")");
  switch (q.tag) {
  case ScenarioTag::SharpDrop:
    if (!(q.threshold < 0.0)) throw Error("scenario_filter: sharp-drop threshold must be negative");
    break;
  case ScenarioTag::SharpRise:
  case ScenarioTag::TrendReversal:
    if (!(q.threshold > 0.0)) throw Error("scenario_filter: " + scenario_name(q.tag) + " threshold must be positive");
    break;
  }

  const auto w = static_cast<std::size_t>(q.window);
  const std::size_t half = w / 2;
  std::vector<ScenarioSample> candidates;
  for (const auto& [key, rows] : session_rows(m, sessions)) {
    for (std::size_t i = 0; i + w <= rows.size(); ++i) {
      // consecutive minutes only: a gap in the data breaks the window
      if (m.minutes[rows[i + w - 1]] - m.minutes[rows[i]] != q.window - 1) continue;
      for (std::size_t c = 0; c < m.instruments.size(); ++c) {
        double first = 0.0, second = 0.0;
        for (std::size_t k = 0; k < w; ++k) (k < half ? first : second) += m.values[rows[i + k]][c];
        const double total = first + second;
        bool hit = false;
        switch (q.tag) {
        case ScenarioTag::SharpDrop: hit = total <= q.threshold; break;
        case ScenarioTag::SharpRise: hit = total >= q.threshold; break;
        case ScenarioTag::TrendReversal: hit = first >= q.threshold && second <= -q.threshold; break;
        }
        if (hit)
          candidates.push_back(ScenarioSample{key.first, m.minutes[rows[i]], m.minutes[rows[i + w - 1]],
                                              m.instruments[c], total, q.tag});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const ScenarioSample& a, const ScenarioSample& b) {
    return std::tie(a.date, a.end_minute, a.instrument) < std::tie(b.date, b.end_minute, b.instrument);
  });

  std::vector<ScenarioSample> out;
  std::set<std::string> dates, stocks;
  std::set<int> starts;
  for (const auto& s : candidates) {
    if (out.size() >= q.max_samples) break;
    if (dates.contains(s.date) || stocks.contains(s.instrument) || starts.contains(s.start_minute)) continue;
    dates.insert(s.date);
    stocks.insert(s.instrument);
    starts.insert(s.start_minute);
    out.push_back(s);
  }
  return out;
}

ControlSignal scenario_to_control(const ScenarioSample& s, const MinuteReturnMatrix& m, int context_minutes) {
  const auto col = std::find(m.instruments.begin(), m.instruments.end(), s.instrument);
  if (col == m.instruments.end()) throw Error("scenario_to_control: unknown instrument " + s.instrument);
  const auto c = static_cast<std::size_t>(col - m.instruments.begin());
  std::map<int, double> by_minute;
  for (std::size_t r = 0; r < m.rows(); ++r)
    if (m.dates[r] == s.date) by_minute[m.minutes[r]] = m.values[r][c];
  ControlSignal out;
  out.kind = ControlKind::Scenario;
  for (int t = s.start_minute; t <= s.end_minute; ++t) {
    auto it = by_minute.find(t);
    if (it == by_minute.end())
      throw Error("scenario_to_control: missing minute " + format_clock(t) + " on " + s.date);
    out.returns.push_back(it->second);
  }
  if (context_minutes < 0 || context_minutes > static_cast<int>(out.returns.size()))
    throw Error("scenario_to_control: context longer than the window");
  out.context_minutes = context_minutes;
  return out;
}

} // namespace mars
