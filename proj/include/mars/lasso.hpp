#pragma once

#include <Eigen/Dense>

namespace mars {

struct LassoOptions {
  double l1{0.0};
  int max_sweeps{200000};
  double tolerance{1e-13}; // on the largest coefficient change in a sweep
};

struct LassoResult {
  Eigen::VectorXd coef;
  int sweeps{0};
  bool converged{false};
};

/// Minimizes (1/2n)|y - Xw|^2 + l1 * |w|_1 by cyclic coordinate descent on
/// the Gram matrix. No intercept; centre the data first if one is wanted.
/// Columns that are identically zero get a zero coefficient. Every 25 sweeps
/// the current support is polished by an exact restricted solve, kept only
/// when the KKT conditions hold.
LassoResult lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoOptions& opt = {});

/// Ratio of extreme singular values of X (infinity when rank deficient).
double condition_number(const Eigen::MatrixXd& x);

} // namespace mars
