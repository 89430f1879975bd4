#include "mars/policy.hpp"

#include "mars/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mars {

std::array<double, kActionCount> Policy::probabilities(const Features& x) const noexcept {
  std::array<double, kActionCount> p{};
  double peak = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kActionCount; ++a) {
    double s = 0.0;
    for (int f = 0; f < kFeatureCount; ++f) s += weights[a][f] * x[f];
    p[a] = s / temperature;
    peak = std::max(peak, p[a]);
  }
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

int Policy::sample(const Features& x, Rng& rng) const noexcept {
  const auto p = probabilities(x);
  double u = uniform01(rng);
  for (int a = 0; a < kActionCount; ++a) {
    if (u < p[a]) return a;
    u -= p[a];
  }
  return kActionCount - 1;
}

int Policy::greedy(const Features& x) const noexcept {
  const auto p = probabilities(x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double Policy::log_probability(const Features& x, int action) const noexcept {
  return std::log(probabilities(x)[static_cast<std::size_t>(action)]);
}

std::array<Features, kActionCount> Policy::grad_log_probability(const Features& x, int action) const noexcept {
  const auto p = probabilities(x);
  std::array<Features, kActionCount> g{};
  for (int a = 0; a < kActionCount; ++a) {
    const double coef = ((a == action ? 1.0 : 0.0) - p[a]) / temperature;
    for (int f = 0; f < kFeatureCount; ++f) g[a][f] = coef * x[f];
  }
  return g;
}

bool Policy::finite() const noexcept {
  if (!std::isfinite(temperature) || temperature <= 0.0) return false;
  for (const auto& row : weights)
    for (double w : row)
      if (!std::isfinite(w)) return false;
  return true;
}

nlohmann::json to_json(const Policy& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (int a = 0; a < kActionCount; ++a) {
    const auto act = action_of(a);
    rows.push_back({{"pvr", act.pvr}, {"ap", act.ap}, {"weights", p.weights[a]}});
  }
  return {{"format", "mars-policy"},
          {"version", 1},
          {"features", {"bias", "time_remaining", "volume_remaining", "imbalance", "stage"}},
          {"temperature", p.temperature},
          {"actions", rows}};
}

Policy policy_from_json(const nlohmann::json& j) {
  Policy p;
  if (j.value("format", "") != "mars-policy") throw Error("policy: unexpected format");
  p.temperature = j.at("temperature").get<double>();
  const auto& rows = j.at("actions");
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(kActionCount))
    throw Error("policy: expected 66 action rows");
  for (int a = 0; a < kActionCount; ++a) {
    const auto& w = rows[static_cast<std::size_t>(a)].at("weights");
    if (!w.is_array() || w.size() != static_cast<std::size_t>(kFeatureCount)) throw Error("policy: bad weight row");
    for (int f = 0; f < kFeatureCount; ++f) p.weights[a][f] = w[static_cast<std::size_t>(f)].get<double>();
  }
  if (!p.finite()) throw Error("policy: non-finite weights or temperature");
  return p;
}

UpdateResult policy_gradient_update(const Policy& policy, std::span<const Transition> batch, double lr) {
  UpdateResult out;
  out.policy = policy;
  if (batch.empty()) {
    out.applied = false;
    out.diagnostics = "empty batch";
    return out;
  }
  double b = 0.0;
  for (const auto& t : batch) b += t.ret;
  b /= static_cast<double>(batch.size());
  out.baseline = b;

  std::array<Features, kActionCount> grad{};
  for (const auto& t : batch) {
    const double adv = t.ret - b;
    if (adv == 0.0) continue;
    const auto g = policy.grad_log_probability(t.x, t.action);
    for (int a = 0; a < kActionCount; ++a)
      for (int f = 0; f < kFeatureCount; ++f) grad[a][f] += adv * g[a][f];
  }
  double norm2 = 0.0;
  for (auto& row : grad)
    for (auto& v : row) {
      v /= static_cast<double>(batch.size());
      norm2 += v * v;
    }
  out.grad_norm = std::sqrt(norm2);
  if (!std::isfinite(out.grad_norm) || !std::isfinite(lr)) {
    out.applied = false;
    out.diagnostics = "non-finite gradient (baseline " + std::to_string(b) + ", batch " +
                      std::to_string(batch.size()) + "); update rejected";
    return out;
  }
  for (int a = 0; a < kActionCount; ++a)
    for (int f = 0; f < kFeatureCount; ++f) out.policy.weights[a][f] += lr * grad[a][f];
  return out;
}

} // namespace mars
