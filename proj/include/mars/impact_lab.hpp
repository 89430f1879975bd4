#pragma once

#include "mars/lasso.hpp"
#include "mars/sim_engine.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mars {

struct FactorConfig {
  double alpha{0.5};
  double beta{0.5};
  std::vector<double> gamma; // weights over pre-trade mids except the last; empty = uniform
  double epsilon{1e-6};      // floor on |pre-trading moment| before the log

  /// Throws unless alpha, beta, every gamma in (0,1), gammas sum to 1 and epsilon > 0.
  void validate() const;
};

struct Factors {
  std::optional<double> moment;
  std::optional<double> resiliency;
  std::optional<double> agent_trans_ask;
  std::optional<double> agent_trans_bid;
  std::optional<double> lob_imbalance;
  std::optional<double> lob_pressure;
  std::optional<double> lob_depth;
  std::optional<double> agent_rollout;
  std::optional<double> agent_replay;
};

struct ImpactWindow {
  std::int64_t start_minute{0}; // agent trades in [start, end)
  std::int64_t end_minute{5};
  int lookback{30};             // minutes of returns for sigma and of mids for the moment
};

struct ImpactRecord {
  double delta_bp{0.0};
  double sigma{0.0};
  double q{0.0}; // agent traded volume inside the window
  double v{0.0}; // all traded volume inside the window
  std::string config_id;
  double mid_pre{0.0};               // mid at the close of the last pre-trade minute
  std::vector<double> pre_mids;      // lookback close mids, last = last pre-trade minute
  double lob_ask_volume{0.0};        // ten-level volumes at that close
  double lob_bid_volume{0.0};
  double rollout_volume{0.0};        // window volume with the agent
  double replay_volume{0.0};         // window volume of the counterfactual
  std::vector<double> y;             // Y(t), t = 1, 2, ... minutes after the window
  Factors factors;
};

/// Paired-seed impact: delta = mean over window minutes of
/// 1e4 * ln(close_mid_with / close_mid_without). Throws when the two
/// trajectories were not produced by the same pairing hash.
ImpactRecord measure_impact(const Trajectory& with_agent, const Trajectory& counterfactual, const ImpactWindow& window,
                            const FactorConfig& cfg = {}, std::string config_id = {});

Factors compute_factors(const ImpactRecord& record, const FactorConfig& cfg = {});

struct SqrtLawFit {
  double c{0.0};
  double gamma{0.0};
  double r2{0.0};
  std::size_t used{0};
};
/// OLS of log(delta/sigma) on log(Q/V) over records with delta > 0, sigma > 0
/// and 0 < Q/V < 1. Throws with fewer than 30 such records.
SqrtLawFit fit_sqrt_law(std::span<const ImpactRecord> records);

enum class DecayBasis : std::uint8_t { InverseT, InverseSqrtT };
std::string decay_name(DecayBasis b);
/// Integral from 1 to t of the decay function: ln t or 2(sqrt t - 1).
double decay_integral(DecayBasis b, double t);

struct OdeModel {
  std::vector<std::string> factors; // names, m of them
  std::vector<DecayBasis> decay{DecayBasis::InverseT, DecayBasis::InverseSqrtT};
  Eigen::MatrixXd w;                // decay.size() x factors.size()
  double l1{0.0};

  static OdeModel defaults(); // seven factors, two decays
};

struct OdeSample {
  std::vector<double> x; // factor values, same order as OdeModel::factors
  std::vector<double> y; // Y(1..T)
};

struct OdeFit {
  Eigen::MatrixXd w;
  int sweeps{0};
  bool converged{false};
  double condition{0.0};
  double r2{0.0};
};

/// Y(t) - Y(1) = sum_ij W_ij * X_j * int_1^t F_i, fit by lasso over all
/// samples and minutes t >= 2. With l1 = 0 a rank-deficient design is an
/// error that reports the condition number.
OdeFit fit_long_term_ode(std::span<const OdeSample> samples, const OdeModel& model);
/// Y(t) from Y(1) under W.
double ode_predict(const OdeModel& model, const Eigen::MatrixXd& w, std::span<const double> x, double y1, double t);

/// Values of the default seven factors for a record; absent when any factor is.
std::optional<std::vector<double>> default_factor_values(const ImpactRecord& r);
std::vector<OdeSample> ode_samples(std::span<const ImpactRecord> records);

struct Candidate {
  std::string name;
  std::vector<double> values; // one per record
};

struct SelectedFactor {
  std::string name;
  double r2{0.0};   // cross-validated R^2 after adding it
  double gain{0.0}; // improvement over the previous step
};

struct SearchResult {
  std::vector<SelectedFactor> selected;
  double baseline_r2{0.0};
  std::string method{"forward stepwise selection over an explicit dictionary"};
};

/// Greedy forward selection of OLS regressors (with intercept) maximizing
/// k-fold held-out R^2 of `target`; stops when the best gain is below min_gain.
SearchResult search_factors(std::span<const double> target, std::span<const Candidate> dictionary, int folds = 5,
                            double min_gain = 0.01);

/// k-fold cross-validated R^2 of OLS with intercept on the given columns.
double cv_r2(std::span<const double> target, std::span<const std::vector<double>> columns, int folds);

inline const std::vector<std::string> kCorrelationFactors = {"sqrt_qv", "sigma", "resiliency", "lob_pressure", "lob_depth"};
/// Pearson correlations among the five factors above over records where all
/// are present; entries are absent for zero-variance columns.
std::vector<std::vector<std::optional<double>>> factor_correlation_matrix(std::span<const ImpactRecord> records);

/// records.csv with the fixed column set; factor cells empty when absent.
void write_impact_records(const std::filesystem::path& path, std::span<const ImpactRecord> records);
std::vector<ImpactRecord> read_impact_records(const std::filesystem::path& path);

} // namespace mars
