#include "mars/session_config.hpp"

#include "mars/hash.hpp"
#include "mars/order_log.hpp"

#include <fstream>
#include <set>

namespace mars {

namespace fs = std::filesystem;

std::uint64_t json_hash(const nlohmann::json& j) {
  Hasher h;
  h.add(std::string_view{j.dump()});
  return h.h;
}

nlohmann::json read_versioned_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(path.string() + ": config must be a JSON object");
  if (!j.contains("version")) throw Error(path.string() + ": missing required field 'version'");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kConfigVersion)
    throw Error(path.string() + ": unsupported config version " + j["version"].dump());
  return j;
}

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw Error(where + ": unknown field '" + k + "'");
}

Side side_from(const std::string& s) {
  if (s == "buy") return Side::Buy;
  if (s == "sell") return Side::Sell;
  throw Error("side must be 'buy' or 'sell', got '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ControlSignal control_from_json(const nlohmann::json& j) {
  check_keys(j, {"kind", "returns", "context_minutes"}, "control");
  ControlSignal c;
  const auto kind = j.value("kind", std::string{"none"});
  if (kind == "none") {
    c.kind = ControlKind::None;
  } else if (kind == "replay-curve") {
    c.kind = ControlKind::ReplayCurve;
  } else if (kind == "scenario") {
    c.kind = ControlKind::Scenario;
  } else {
    throw Error("control: unknown kind '" + kind + "'");
  }
  c.returns = j.value("returns", std::vector<double>{});
  c.context_minutes = j.value("context_minutes", 0);
  c.validate();
  return c;
}

} // namespace

TwapConfig twap_from_json(const nlohmann::json& j) {
  check_keys(j, {"type", "side", "total", "start_ms", "duration_ms", "interval_ms", "passive_period_ms", "pvr", "ap"},
             "agent");
  TwapConfig c;
  c.side = side_from(j.value("side", std::string{"buy"}));
  c.total = j.value("total", c.total);
  c.start = j.value("start_ms", c.start);
  c.duration = j.value("duration_ms", c.duration);
  c.interval = j.value("interval_ms", c.interval);
  c.passive_period = j.value("passive_period_ms", c.passive_period);
  c.pvr = j.value("pvr", c.pvr);
  c.ap = j.value("ap", c.ap);
  c.validate();
  return c;
}

nlohmann::json to_json(const TwapConfig& c) {
  return {{"type", "twap"},
          {"side", c.side == Side::Buy ? "buy" : "sell"},
          {"total", c.total},
          {"start_ms", c.start},
          {"duration_ms", c.duration},
          {"interval_ms", c.interval},
          {"passive_period_ms", c.passive_period},
          {"pvr", c.pvr},
          {"ap", c.ap}};
}

NoiseFlowParams noise_from_json(const nlohmann::json& j) {
  NoiseFlowParams p;
  p.mean_interval_ms = j.value("mean_interval_ms", p.mean_interval_ms);
  p.cancel_probability = j.value("cancel_probability", p.cancel_probability);
  p.marketable_probability = j.value("marketable_probability", p.marketable_probability);
  p.mean_offset_ticks = j.value("mean_offset_ticks", p.mean_offset_ticks);
  p.mean_volume = j.value("mean_volume", p.mean_volume);
  p.lot = j.value("lot", p.lot);
  p.cancel_depth = j.value("cancel_depth", p.cancel_depth);
  if (!(p.mean_interval_ms > 0.0) || p.lot <= 0 || !(p.mean_volume > 0.0))
    throw Error("flow: noise parameters must be positive");
  if (p.cancel_probability < 0.0 || p.cancel_probability > 1.0 || p.marketable_probability < 0.0 ||
      p.marketable_probability > 1.0)
    throw Error("flow: probabilities must lie in [0, 1]");
  return p;
}

LoadedConfig parse_session_config(const nlohmann::json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"version", "instrument", "seed", "horizon_minutes", "start_time_ms", "tick_size", "open_reference",
              "candidates", "lambda", "codec", "flow", "starting_sequence", "control", "agents", "rules"},
             "config");
  if (!doc.contains("version")) throw Error("config: missing required field 'version'");
  if (doc.at("version") != kConfigVersion) throw Error("config: unsupported version " + doc.at("version").dump());

  LoadedConfig out;
  out.document = doc;
  out.document_hash = json_hash(doc);
  auto& s = out.session;
  try {
    s.instrument = doc.value("instrument", s.instrument);
    s.seed = doc.value("seed", s.seed);
    s.horizon_minutes = doc.value("horizon_minutes", s.horizon_minutes);
    s.start_time_ms = doc.value("start_time_ms", s.start_time_ms);
    s.tick_size = doc.value("tick_size", s.tick_size);
    s.open_reference = doc.value("open_reference", s.open_reference);
    s.candidates = doc.value("candidates", s.candidates);
    s.lambda = doc.value("lambda", s.lambda);
    if (doc.contains("codec")) s.codec = codec_from_json(doc["codec"]);
    if (doc.contains("rules")) {
      check_keys(doc["rules"], {"allow_partial_cancel"}, "rules");
      s.rules.allow_partial_cancel = doc["rules"].value("allow_partial_cancel", s.rules.allow_partial_cancel);
    }

    if (!doc.contains("flow")) throw Error("config: missing 'flow'");
    const auto& f = doc["flow"];
    const auto type = f.value("type", std::string{});
    if (type == "replay") {
      check_keys(f, {"type", "log"}, "flow");
      const auto records = read_order_log(resolve(base_dir, f.at("log").get<std::string>()));
      if (records.empty()) throw Error("flow: replay log is empty");
      if (!doc.contains("start_time_ms")) s.start_time_ms = static_cast<std::int64_t>(records.front().timestamp);
      s.flow = std::make_shared<ReplayFlowModel>(to_orders(records));
    } else if (type == "noise") {
      check_keys(f,
                 {"type", "mean_interval_ms", "cancel_probability", "marketable_probability", "mean_offset_ticks",
                  "mean_volume", "lot", "cancel_depth"},
                 "flow");
      s.flow = std::make_shared<NoiseFlowModel>(noise_from_json(f));
    } else if (type == "count") {
      check_keys(f, {"type", "model", "batches"}, "flow");
      auto model = std::make_shared<const CountModel>(CountModel::load(resolve(base_dir, f.at("model").get<std::string>())));
      std::shared_ptr<const BatchModel> batches;
      if (f.contains("batches"))
        batches = std::make_shared<const BatchModel>(BatchModel::load(resolve(base_dir, f["batches"].get<std::string>())));
      s.flow = std::make_shared<CountFlowModel>(std::move(model), std::move(batches));
    } else {
      throw Error("flow: type must be replay, noise or count");
    }

    if (doc.contains("starting_sequence"))
      s.starting_sequence = to_orders(read_order_log(resolve(base_dir, doc["starting_sequence"].get<std::string>())),
                                      std::nullopt, OrderSource::Replay);
    if (doc.contains("control")) s.control = control_from_json(doc["control"]);
    if (doc.contains("agents")) {
      if (!doc["agents"].is_array()) throw Error("config: 'agents' must be an array");
      for (const auto& a : doc["agents"]) {
        if (a.value("type", std::string{}) != "twap") throw Error("agent: only type 'twap' is supported");
        out.twaps.push_back(twap_from_json(a));
        s.agents.push_back(twap_factory(out.twaps.back()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  s.validate();
  return out;
}

LoadedConfig load_session_config(const fs::path& path) {
  return parse_session_config(read_versioned_json(path), path.parent_path());
}

} // namespace mars
