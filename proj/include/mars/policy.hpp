#pragma once

#include "mars/random.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mars {

inline constexpr int kPvrLevels = 11; // 0.0, 0.1, ..., 1.0
inline constexpr int kApLevels = 6;   // 0 = none, k = k-th opposite level
inline constexpr int kActionCount = kPvrLevels * kApLevels;
inline constexpr int kFeatureCount = 5; // bias, time left, volume left, imbalance, stage

using Features = std::array<double, kFeatureCount>;

struct ExecAction {
  double pvr{0.0};
  int ap{0};
};

inline ExecAction action_of(int index) noexcept {
  return ExecAction{static_cast<double>(index / kApLevels) / 10.0, index % kApLevels};
}
inline int action_index(int pvr_tenths, int ap) noexcept { return pvr_tenths * kApLevels + ap; }

/// Linear-softmax policy over the 66 TWAP (PVR, AP) actions.
struct Policy {
  std::array<Features, kActionCount> weights{};
  double temperature{1.0};

  std::array<double, kActionCount> probabilities(const Features& x) const noexcept;
  int sample(const Features& x, Rng& rng) const noexcept;
  int greedy(const Features& x) const noexcept;
  double log_probability(const Features& x, int action) const noexcept;
  /// Gradient of log pi(action | x) with respect to every weight.
  std::array<Features, kActionCount> grad_log_probability(const Features& x, int action) const noexcept;
  bool finite() const noexcept;
};

nlohmann::json to_json(const Policy& p);
Policy policy_from_json(const nlohmann::json& j);

struct Transition {
  Features x{};
  int action{0};
  double ret{0.0}; // episode return credited to this decision
};

struct UpdateResult {
  Policy policy;
  bool applied{true};
  double baseline{0.0};
  double grad_norm{0.0};
  std::string diagnostics; // why an update was rejected
};

/// REINFORCE with the batch-mean return as baseline:
/// w += lr * mean over the batch of (G - b) * grad log pi(a | s).
/// Non-finite gradients leave the policy unchanged and set `applied = false`.
UpdateResult policy_gradient_update(const Policy& policy, std::span<const Transition> batch, double lr);

} // namespace mars
