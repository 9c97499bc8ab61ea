#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cqr/dataset.hpp"
#include "cqr/grid.hpp"

namespace cqr {

struct FitOptions {
  // Duality-gap stopping rule: gap <= rel_tol * (1 + |primal objective|).
  double rel_tol = 1e-9;
  int max_iter = 200;
  // Chain solutions across adjacent grid points in fit_process.
  bool warm_start = true;
};

struct PseudoObservation {
  double y_star;
  VectorXd x_star;

  PseudoObservation(double y, VectorXd x) : y_star(y), x_star(std::move(x)) {
    if (!(y_star > 0.0)) throw InputError("pseudo-observation requires y* > 0");
  }
};

struct CoefficientProcess {
  QuantileGrid grid;
  MatrixXd betas;  // d x G, column g = beta(tau_g)

  VectorXd beta(std::size_t g) const { return betas.col(static_cast<Index>(g)); }
};

struct AugmentedFitResult {
  VectorXd beta;
  bool dominance_retried = false;  // y* had to be doubled once
  double y_star_used = 0.0;
};

// Clustered check-function objective (1/n) sum_i sum_k rho_tau(y - x'b).
double objective(const ClusteredDataset& data, const VectorXd& beta, double tau);

// Same loss with one extra observation appended, on the sum scale divided by n.
double objective_augmented(const ClusteredDataset& data, const PseudoObservation& pseudo,
                           const VectorXd& beta, double tau);

VectorXd fit(const ClusteredDataset& data, double tau, const FitOptions& options = {});

CoefficientProcess fit_process(const ClusteredDataset& data, const QuantileGrid& grid,
                               const FitOptions& options = {});

AugmentedFitResult fit_augmented(const ClusteredDataset& data, const PseudoObservation& pseudo,
                                 double tau, const FitOptions& options = {});

// Reusable solver state for repeated fits on one dataset (the bootstrap hot
// path). Not thread-safe; use one workspace per worker.
class QrWorkspace {
 public:
  explicit QrWorkspace(const ClusteredDataset& data);

  VectorXd fit(double tau, const VectorXd* warm_beta = nullptr,
               const FitOptions& options = {});
  AugmentedFitResult fit_augmented(const PseudoObservation& pseudo, double tau,
                                   const VectorXd* warm_beta = nullptr,
                                   const FitOptions& options = {});

  int last_iterations() const { return last_iterations_; }
  double last_gap() const { return last_gap_; }

 private:
  VectorXd solve(Index rows, double tau, const VectorXd* warm_beta,
                 const FitOptions& options);

  MatrixXd Xa_;  // N+1 x d; last row is the pseudo-observation slot
  VectorXd ya_;
  Index n_obs_;
  int last_iterations_ = 0;
  double last_gap_ = 0.0;

  // interior-point scratch, sized N+1
  Eigen::ArrayXd c_, x_, s_, z_, w_, dx_, ds_, dz_, dw_, dr_, dscale_, dxdz_, dsdw_, u_,
      invx_, invs_, invz_, invw_;
  MatrixXd ada_;
  VectorXd yd_, rhs_, dy_, tmpn_, tmpd_;
};

}  // namespace cqr
