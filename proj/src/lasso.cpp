#include "mars/lasso.hpp"

#include "mars/types.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace mars {

LassoResult lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoOptions& opt) {
  if (x.rows() != y.size()) throw Error("lasso: row count mismatch");
  if (x.rows() == 0) throw Error("lasso: empty design");
  if (opt.l1 < 0.0 || !std::isfinite(opt.l1)) throw Error("lasso: l1 must be finite and non-negative");
  const auto p = x.cols();
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd g = x.transpose() * x / n;
  const Eigen::VectorXd c = x.transpose() * y / n;

  LassoResult r;
  r.coef = Eigen::VectorXd::Zero(p);
  // gradient helper: c - G w, kept up to date incrementally
  Eigen::VectorXd resid = c;

  // Coordinate descent crawls on correlated designs. Once the support and signs
  // settle, solve the restricted stationarity system directly and keep the
  // result only if the full KKT conditions hold.
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  auto polish = [&]() {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < p; ++j)
      if (r.coef(j) != 0.0) support.push_back(j);
    if (support.empty()) return false;
    const auto k = static_cast<Eigen::Index>(support.size());
    // work on X itself: the Gram matrix squares the condition number
    Eigen::MatrixXd xs(x.rows(), k);
    Eigen::VectorXd sign(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      xs.col(a) = x.col(support[a]);
      sign(a) = r.coef(support[a]) > 0.0 ? 1.0 : -1.0;
    }
    const auto qr = xs.colPivHouseholderQr();
    if (qr.rank() < k) return false;
    Eigen::VectorXd ws;
    if (opt.l1 == 0.0) {
      ws = qr.solve(y);
    } else {
      // (R P^T)^T (R P^T) w = X_S^T y - n l1 s
      const Eigen::MatrixXd rt = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
      Eigen::VectorXd rhs = qr.colsPermutation().transpose() * (xs.transpose() * y - n * opt.l1 * sign);
      rhs = rt.transpose().triangularView<Eigen::Lower>().solve(rhs);
      rhs = rt.triangularView<Eigen::Upper>().solve(rhs);
      ws = qr.colsPermutation() * rhs;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    for (Eigen::Index a = 0; a < k; ++a) {
      if (!std::isfinite(ws(a))) return false;
      if (opt.l1 > 0.0 && (ws(a) == 0.0 || (ws(a) > 0.0) != (sign(a) > 0.0))) return false;
      w(support[a]) = ws(a);
    }
    const Eigen::VectorXd grad = x.transpose() * (y - x * w) / n;
    // stationarity on the support holds by construction; check the zeros
    for (Eigen::Index j = 0; j < p; ++j)
      if (w(j) == 0.0 && std::abs(grad(j)) - opt.l1 > 1e-9 * scale) return false;
    r.coef = w;
    resid = c - g * w;
    return true;
  };

  for (r.sweeps = 1; r.sweeps <= opt.max_sweeps; ++r.sweeps) {
    double biggest = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = g(j, j);
      if (gjj <= 0.0) continue;
      const double old = r.coef(j);
      const double rho = resid(j) + gjj * old;
      double w = 0.0;
      if (rho > opt.l1) {
        w = (rho - opt.l1) / gjj;
      } else if (rho < -opt.l1) {
        w = (rho + opt.l1) / gjj;
      }
      const double d = w - old;
      if (d != 0.0) {
        resid -= g.col(j) * d;
        r.coef(j) = w;
        biggest = std::max(biggest, std::abs(d) / std::max(1.0, std::abs(w)));
      }
    }
    if (biggest <= opt.tolerance || (r.sweeps % 25 == 1 && polish())) {
      r.converged = true;
      break;
    }
  }
  r.sweeps = std::min(r.sweeps, opt.max_sweeps);
  return r;
}

double condition_number(const Eigen::MatrixXd& x) {
  if (x.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / lo;
}

} // namespace mars
