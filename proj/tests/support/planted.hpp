#pragma once

// Synthetic impact data with planted parameters: square-root-law records and
// long-term impact curves generated from a known weight matrix.

#include "mars/impact_lab.hpp"
#include "mars/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace mars::testing {

// delta = c * sigma * (Q/V)^gamma * exp(noise * z)
inline std::vector<ImpactRecord> sqrt_law_records(std::size_t n, double c, double gamma, double noise,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImpactRecord> out(n);
  for (auto& r : out) {
    r.sigma = 1e-4 * (0.5 + 2.0 * uniform01(rng));
    r.v = 1e5 * (0.5 + uniform01(rng));
    r.q = r.v * std::exp(std::log(1e-4) + uniform01(rng) * (std::log(0.5) - std::log(1e-4)));
    r.delta_bp = c * r.sigma * std::pow(r.q / r.v, gamma) * std::exp(noise * standard_normal(rng));
  }
  return out;
}

// Y(t) - Y(1) = sum_ij W_ij X_j int_1^t F_i, sampled at t = 1..minutes with
// a random anchor Y(1). Factor values are standard normal.
inline std::vector<OdeSample> planted_ode(const OdeModel& model, const Eigen::MatrixXd& w, std::size_t n, int minutes,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<OdeSample> out(n);
  for (auto& s : out) {
    s.x.resize(model.factors.size());
    for (auto& v : s.x) v = standard_normal(rng);
    const double y1 = standard_normal(rng);
    for (int t = 1; t <= minutes; ++t) {
      double y = y1;
      for (std::size_t i = 0; i < model.decay.size(); ++i) {
        // closed-form integrals of 1/s and 1/sqrt(s) from 1 to t
        const double td = static_cast<double>(t);
        const double integral = model.decay[i] == DecayBasis::InverseT ? std::log(td) : 2.0 * (std::sqrt(td) - 1.0);
        for (std::size_t j = 0; j < s.x.size(); ++j)
          y += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * s.x[j] * integral;
      }
      s.y.push_back(y);
    }
  }
  return out;
}

} // namespace mars::testing
