#pragma once

// Test-only oracles, independent of the library's solver and distribution
// code paths.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cqr/dataset.hpp"
#include "cqr/rng.hpp"

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double check_loss_sum(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, double tau);

// Global minimum of the check loss by enumerating every exact-fit candidate
// basis: each invertible d-row subset of X yields one vertex of the LP.
double brute_force_min_objective(const MatrixXd& X, const VectorXd& y, double tau);

// High-precision inverse normal CDF by safeguarded Newton on the erfc-based
// CDF; the start point is crude on purpose.
double norm_quantile_oracle(double p);

struct RandomInstance {
  MatrixXd X;
  VectorXd y;
  std::vector<Index> cluster_sizes;
};

// Random full-rank instance with an intercept column; values are continuous
// so ties have probability zero.
RandomInstance random_instance(cqr::rng::Stream& stream, Index n_obs, Index d,
                               Index n_clusters);

cqr::ClusteredDataset to_dataset(const RandomInstance& inst);

// Same data with clusters presented in a different order.
cqr::ClusteredDataset permute_clusters(const cqr::ClusteredDataset& data,
                                       const std::vector<Index>& perm);

}  // namespace oracle
