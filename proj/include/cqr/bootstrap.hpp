#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cqr/dataset.hpp"
#include "cqr/rng.hpp"
#include "cqr/solver.hpp"

namespace cqr {

enum class WeightDistribution {
  Mammen2Point,
  Rademacher,
  Webb6Point,
  StandardNormal,
  RecenteredExponential,
  DegenerateZero,  // test-only
};

std::string to_string(WeightDistribution dist);
WeightDistribution parse_weight_distribution(const std::string& name);

// n iid draws from a mean-zero unit-variance multiplier distribution.
VectorXd draw_weights(WeightDistribution dist, Index n, rng::Stream& stream);

// Per-tau perturbed gradient (1/sqrt(n)) sum_i W_i sum_k psi_tau(e_ik) x_ik
// evaluated at the fitted process; returns a d x G matrix.
MatrixXd gradient_process(const ClusteredDataset& data, const CoefficientProcess& center,
                          const VectorXd& weights);

// Single-tau version.
VectorXd gradient_at(const ClusteredDataset& data, const VectorXd& beta, double tau,
                     const VectorXd& weights);

// X* = -sqrt(n) w_tau / tau with y* passed through.
PseudoObservation pseudo_observation(const VectorXd& w_tau, double tau, double y_star,
                                     Index n_clusters);

// Y* = n * max_i c_i * max |Y|; all-zero responses fall back to max|Y| = 1.
double y_star(const ClusteredDataset& data);

struct BootstrapEnsemble {
  QuantileGrid grid;
  std::vector<MatrixXd> draws;  // m entries, each d x G
  CoefficientProcess center;
  Index n_clusters = 0;
  std::uint64_t seed = 0;
  WeightDistribution distribution = WeightDistribution::Mammen2Point;
  double y_star_value = 0.0;
  int dominance_retries = 0;

  std::size_t size() const { return draws.size(); }
  Index dim() const { return center.betas.rows(); }
};

struct EnsembleOptions {
  int threads = 1;
  FitOptions fit;
};

// Algorithm: draw one weight vector per replication, evaluate the gradient
// process at every grid point, convert it into a pseudo-observation, and
// re-solve the augmented QR. Output is bit-identical for a fixed seed
// regardless of worker count.
BootstrapEnsemble bootstrap_ensemble(const ClusteredDataset& data,
                                     const CoefficientProcess& center, std::size_t m,
                                     WeightDistribution dist, std::uint64_t seed,
                                     const EnsembleOptions& options = {});

// Columnar serialization (replication, tau, coef, value); the fitted process
// is stored as replication -1. Versioned header with metadata.
void write_ensemble_csv(const BootstrapEnsemble& ensemble, const std::string& path);
BootstrapEnsemble read_ensemble_csv(const std::string& path);

}  // namespace cqr
