#include "cqr/solver.hpp"

#include <cmath>

#include "cqr/math.hpp"

namespace cqr {

namespace {

double rho_tau(double z, double tau) { return (tau - (z < 0.0 ? 1.0 : 0.0)) * z; }

double objective_rows(const MatrixXd& X, const VectorXd& y, Index rows, const VectorXd& beta,
                      double tau) {
  const VectorXd r = y.head(rows) - X.topRows(rows) * beta;
  ExactSum sum;
  for (Index k = 0; k < rows; ++k) sum.add(rho_tau(r(k), tau));
  return sum.value();
}

}  // namespace

double objective(const ClusteredDataset& data, const VectorXd& beta, double tau) {
  if (beta.size() != data.dim()) throw DimensionMismatch("objective: beta length != d");
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("objective: tau outside (0,1)");
  return objective_rows(data.design(), data.response(), data.n_obs(), beta, tau) /
         static_cast<double>(data.n_clusters());
}

double objective_augmented(const ClusteredDataset& data, const PseudoObservation& pseudo,
                           const VectorXd& beta, double tau) {
  double sum = objective_rows(data.design(), data.response(), data.n_obs(), beta, tau);
  sum += rho_tau(pseudo.y_star - pseudo.x_star.dot(beta), tau);
  return sum / static_cast<double>(data.n_clusters());
}

QrWorkspace::QrWorkspace(const ClusteredDataset& data) : n_obs_(data.n_obs()) {
  const Index m = n_obs_ + 1;
  Xa_.resize(m, data.dim());
  Xa_.topRows(n_obs_) = data.design();
  Xa_.row(n_obs_).setZero();
  ya_.resize(m);
  ya_.head(n_obs_) = data.response();
  ya_(n_obs_) = 0.0;
  c_.resize(m);
  x_.resize(m);
  s_.resize(m);
  z_.resize(m);
  w_.resize(m);
  dx_.resize(m);
  ds_.resize(m);
  dz_.resize(m);
  dw_.resize(m);
  dr_.resize(m);
  dscale_.resize(m);
  dxdz_.resize(m);
  dsdw_.resize(m);
  u_.resize(m);
  invx_.resize(m);
  invs_.resize(m);
  invz_.resize(m);
  invw_.resize(m);
  ada_.resize(data.dim(), data.dim());
  yd_.resize(data.dim());
  rhs_.resize(data.dim());
  dy_.resize(data.dim());
  tmpn_.resize(m);
  tmpd_.resize(data.dim());
}

// Frisch-Newton interior point on the bounded-variable dual
//   min c'a  s.t.  X'a = (1-tau) X'1,  0 <= a <= 1,  c = -y,
// with Mehrotra predictor-corrector steps. The negated multiplier of the
// equality constraints is the coefficient vector.
VectorXd QrWorkspace::solve(Index m, double tau, const VectorXd* warm_beta,
                            const FitOptions& options) {
  const Index d = Xa_.cols();
  const double step_damp = 0.99995;
  const double big = 1e30;

  auto X = Xa_.topRows(m);
  auto c = c_.head(m);
  auto x = x_.head(m);
  auto s = s_.head(m);
  auto z = z_.head(m);
  auto w = w_.head(m);
  auto dx = dx_.head(m);
  auto ds = ds_.head(m);
  auto dz = dz_.head(m);
  auto dw = dw_.head(m);
  auto dr = dr_.head(m);
  auto dscale = dscale_.head(m);
  auto dxdz = dxdz_.head(m);
  auto dsdw = dsdw_.head(m);
  auto u = u_.head(m);
  auto invx = invx_.head(m);
  auto invs = invs_.head(m);
  auto invz = invz_.head(m);
  auto invw = invw_.head(m);

  c = -ya_.head(m).array();
  x.setConstant(1.0 - tau);

  Eigen::LLT<MatrixXd> llt(d);

  // ada = X' diag(weights) X accumulated column-pair-wise; beats the general
  // matrix product for the small d used here
  auto weighted_normal_matrix = [&](const auto& weights) {
    for (Index a = 0; a < d; ++a) {
      for (Index b = a; b < d; ++b) {
        const double v = (X.col(a).array() * X.col(b).array() * weights).sum();
        ada_(a, b) = v;
        ada_(b, a) = v;
      }
    }
  };

  if (warm_beta != nullptr && warm_beta->size() == d) {
    yd_ = -*warm_beta;
  } else {
    ada_.noalias() = X.transpose() * X;
    llt.compute(ada_);
    if (llt.info() != Eigen::Success) throw RankDeficientDesign("normal matrix not SPD");
    tmpd_.noalias() = X.transpose() * c.matrix();
    yd_ = llt.solve(tmpd_);
  }

  // dual residuals split into positive parts, floored away from zero so the
  // reciprocals used in the step-ratio tests stay finite
  tmpn_.noalias() = X * yd_;
  u = c - tmpn_.array();
  const double eps0 = 1e-6 * (1.0 + c.abs().maxCoeff());
  z = u.max(0.0) + eps0;
  w = (-u).max(0.0) + eps0;
  s = 1.0 - x;

  double gap = (z * x).sum() + (w * s).sum();
  double tol = options.rel_tol * (1.0 + std::fabs((c * x).sum()));

  int it = 0;
  while (gap > tol && it < options.max_iter) {
    ++it;

    invx = x.inverse();
    invs = s.inverse();
    invz = z.inverse();
    invw = w.inverse();
    dscale = (z * invx + w * invs).inverse();
    ds = z - w;
    dz = dscale * ds;

    // affine rhs: (b - Ax) + A(D(z-w)); b - Ax stays ~0 from the feasible start
    tmpn_ = ((1.0 - tau) - x + dz).matrix();
    rhs_.noalias() = X.transpose() * tmpn_;
    dy_ = rhs_;

    weighted_normal_matrix(dscale);
    llt.compute(ada_);
    if (llt.info() != Eigen::Success) throw RankDeficientDesign("scaled normal matrix not SPD");
    dy_ = llt.solve(dy_);

    tmpn_.noalias() = X * dy_;
    ds = tmpn_.array() - ds;
    dx = dscale * ds;
    ds = -dx;
    dz = -z * (dx * invx + 1.0);
    dw = -w * (ds * invs + 1.0);

    auto primal_ratio = [&]() {
      double r = std::max((-dx * invx).maxCoeff(), (-ds * invs).maxCoeff());
      return r > 0.0 ? std::min(step_damp / r, 1.0) : 1.0;
    };
    auto dual_ratio = [&]() {
      double r = std::max((-dz * invz).maxCoeff(), (-dw * invw).maxCoeff());
      return r > 0.0 ? std::min(step_damp / r, 1.0) : 1.0;
    };
    double deltap = primal_ratio();
    double deltad = dual_ratio();

    if (std::min(deltap, deltad) < 1.0) {
      // Mehrotra corrector
      double mu = gap;
      double g1 = mu + deltap * (dx * z).sum() + deltad * (dz * x).sum() +
                  deltap * deltad * (dx * dz).sum() + deltap * (ds * w).sum() +
                  deltad * (dw * s).sum() + deltap * deltad * (ds * dw).sum();
      mu = mu * std::pow(g1 / mu, 3) / (2.0 * static_cast<double>(m));

      dr = dscale * (mu * (invs - invx) + dx * dz * invx - ds * dw * invs);
      tmpd_.noalias() = X.transpose() * dr.matrix();
      tmpd_ += rhs_;
      dy_ = llt.solve(tmpd_);
      tmpn_.noalias() = X * dy_;
      u = tmpn_.array();

      dxdz = dx * dz;
      dsdw = ds * dw;
      dx = dscale * (u - z + w) - dr;
      ds = -dx;
      dz = -z + (mu - z * dx - dxdz) * invx;
      dw = -w + (mu - w * ds - dsdw) * invs;

      deltap = primal_ratio();
      deltad = dual_ratio();
    }

    x += deltap * dx;
    s += deltap * ds;
    yd_ += deltad * dy_;
    z += deltad * dz;
    w += deltad * dw;

    gap = (z * x).sum() + (w * s).sum();
    if (!std::isfinite(gap) || gap > big)
      throw SolverDidNotConverge(it, "divergent duality gap");
    tol = options.rel_tol * (1.0 + std::fabs((c * x).sum()));
  }

  last_iterations_ = it;
  last_gap_ = gap;
  if (gap > tol) throw SolverDidNotConverge(it, "gap " + std::to_string(gap));
  return -yd_;
}

VectorXd QrWorkspace::fit(double tau, const VectorXd* warm_beta, const FitOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("fit: tau outside (0,1)");
  return solve(n_obs_, tau, warm_beta, options);
}

AugmentedFitResult QrWorkspace::fit_augmented(const PseudoObservation& pseudo, double tau,
                                              const VectorXd* warm_beta,
                                              const FitOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("fit_augmented: tau outside (0,1)");
  if (pseudo.x_star.size() != Xa_.cols())
    throw DimensionMismatch("fit_augmented: pseudo-observation dimension != d");

  AugmentedFitResult result;
  double y_star = pseudo.y_star;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Xa_.row(n_obs_) = pseudo.x_star.transpose();
    ya_(n_obs_) = y_star;
    result.beta = solve(n_obs_ + 1, tau, warm_beta, options);
    result.y_star_used = y_star;
    if (y_star > pseudo.x_star.dot(result.beta)) return result;
    result.dominance_retried = true;
    y_star *= 2.0;
  }
  throw PseudoObservationBinding(result.y_star_used, pseudo.x_star.dot(result.beta));
}

VectorXd fit(const ClusteredDataset& data, double tau, const FitOptions& options) {
  QrWorkspace ws(data);
  return ws.fit(tau, nullptr, options);
}

CoefficientProcess fit_process(const ClusteredDataset& data, const QuantileGrid& grid,
                               const FitOptions& options) {
  QrWorkspace ws(data);
  CoefficientProcess process;
  process.grid = grid;
  process.betas.resize(data.dim(), static_cast<Index>(grid.size()));
  VectorXd prev;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const VectorXd* warm = (options.warm_start && g > 0) ? &prev : nullptr;
    try {
      prev = ws.fit(grid[g], warm, options);
    } catch (const SolverError& e) {
      throw SolverDidNotConverge(ws.last_iterations(),
                                 "tau=" + std::to_string(grid[g]) + ": " + e.what());
    }
    process.betas.col(static_cast<Index>(g)) = prev;
  }
  return process;
}

AugmentedFitResult fit_augmented(const ClusteredDataset& data, const PseudoObservation& pseudo,
                                 double tau, const FitOptions& options) {
  QrWorkspace ws(data);
  return ws.fit_augmented(pseudo, tau, nullptr, options);
}

}  // namespace cqr
