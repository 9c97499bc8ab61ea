#pragma once

#include <string>
#include <vector>

#include "cqr/bootstrap.hpp"
#include "cqr/dataset.hpp"
#include "cqr/grid.hpp"
#include "cqr/solver.hpp"

namespace cqr {

enum class CovCentering { EnsembleMean, AtCenter };
enum class PowellKernel { Uniform, Gaussian };
enum class ResidualScale { Koenker, MadPss };

struct CovarianceMetadata {
  std::string source;  // "bootstrap", "analytical-clustered", "analytical-plain"
  CovCentering centering = CovCentering::EnsembleMean;
  std::string kernel;
  std::string bandwidth_rule;
};

// Grid-indexed covariance function: a d x d block per (tau, tau') pair with
// blocks(g,g') = blocks(g',g)' exactly (upper triangle computed, mirrored).
class CovarianceFunction {
 public:
  CovarianceFunction(QuantileGrid grid, Index d);

  const QuantileGrid& grid() const { return grid_; }
  Index dim() const { return d_; }

  const MatrixXd& block(std::size_t g, std::size_t gp) const;
  void set_block(std::size_t g, std::size_t gp, MatrixXd value);

  CovarianceMetadata metadata;

 private:
  QuantileGrid grid_;
  Index d_;
  std::vector<MatrixXd> blocks_;
};

CovarianceFunction bootstrap_covariance(const BootstrapEnsemble& ensemble,
                                        CovCentering centering = CovCentering::EnsembleMean);

// Per-tau standard errors sqrt(blocks(tau,tau)_jj / n); d x G.
MatrixXd standard_errors(const CovarianceFunction& cov, Index n_clusters);

// Clustered score outer product (1/n) sum_i sum_{k,l} psi psi' x x'.
MatrixXd pss_sigma(const ClusteredDataset& data, const CoefficientProcess& center, double tau);

double hall_sheather_bandwidth(Index n_obs, double tau, double alpha);

// Kernel estimate of the density-weighted design moment, scaled per
// observation. The supplied h is multiplied by a robust residual scale.
MatrixXd powell_jacobian(const ClusteredDataset& data, const CoefficientProcess& center,
                         double tau, double h, PowellKernel kernel = PowellKernel::Uniform,
                         ResidualScale scale = ResidualScale::Koenker);

struct AnalyticalOptions {
  double alpha = 0.05;  // Hall-Sheather level
  PowellKernel kernel = PowellKernel::Uniform;
  ResidualScale scale = ResidualScale::Koenker;
};

// Sandwich J^-1 Sigma J^-1 on the per-cluster scale, so that the entry-wise
// standard errors are sqrt(diag / n_clusters) as with the bootstrap estimate.
MatrixXd analytical_covariance(const ClusteredDataset& data, const CoefficientProcess& center,
                               double tau, bool clustered,
                               const AnalyticalOptions& options = {});

// Columnar serialization (tau, tau_prime, row, col, value) with metadata.
void write_covariance_csv(const CovarianceFunction& cov, const std::string& path);

}  // namespace cqr
