#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cqr/bootstrap.hpp"
#include "cqr/dataset.hpp"
#include "cqr/grid.hpp"
#include "cqr/inference.hpp"

namespace cqr::mc {

struct McConfig {
  Index n_clusters = 50;
  double rho = 0.0;       // within-cluster correlation target
  Index c_min = 5;
  Index c_max = 15;
  std::size_t m = 299;    // bootstrap draws per replication
  std::size_t reps = 500;
  WeightDistribution dist = WeightDistribution::Mammen2Point;
  double alpha = 0.05;
  QuantileGrid grid = default_grid(0.1, 0.9, 10);
  std::uint64_t seed = 20140331;
  int threads = 1;
  // Optional knobs to vary the X and U correlations independently; negative
  // means "derive from rho".
  double rho_x = -1.0;
  double rho_u = -1.0;

  void validate() const;
};

// One simulated dataset: c_i uniform on {c_min..c_max}, X = sqrt(rho) Z_i +
// sqrt(1-rho) eps, U equicorrelated N(0,1/3) independent of X, response
// 0.1 U + X + X^2 U, design columns (1, X, X^2).
ClusteredDataset generate_dgp(const McConfig& cfg, std::size_t rep_index);

// Coefficient function of the simulated model.
Eigen::Vector3d true_beta(double tau);

enum class McMethod {
  BootstrapCV,
  BootstrapSE,
  AnalyticalClustered,
  AnalyticalPlain,
  KsBootWald,
  KsAnalytical,
  KsUnweighted,
};

std::string to_string(McMethod method);
McMethod parse_method(const std::string& name);

struct McHypothesis {
  Index coef = 2;
  double value = 0.0;
  bool uniform = false;  // false: single quantile tau0; true: whole grid
  double tau0 = 0.5;
};

struct RejectionTable {
  struct Row {
    std::string method;
    std::string param;
    double frequency = 0.0;
    std::size_t reps = 0;
    double binomial_se = 0.0;
  };
  std::vector<Row> rows;

  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

// A unit of work evaluated on the shared per-replication data.
struct McTask {
  enum Kind { SizePower, Coverage } kind = SizePower;
  McHypothesis hypothesis;          // SizePower
  std::vector<McMethod> methods;    // SizePower
  std::vector<Index> delta;         // Coverage
  LambdaKind lambda = LambdaKind::BootstrapVariance;
  std::string label;
};

// Runs all tasks against identical data per replication: one dataset, one
// fitted process, one bootstrap ensemble. Returns one table per task, rows in
// method order; bit-identical for a fixed seed and any thread count.
std::vector<RejectionTable> run_batch(const McConfig& cfg, const std::vector<McTask>& tasks);

RejectionTable run_size_power(const McConfig& cfg, const McHypothesis& hypothesis,
                              const std::vector<McMethod>& methods);

RejectionTable run_coverage(const McConfig& cfg, const std::vector<Index>& delta,
                            LambdaKind lambda = LambdaKind::BootstrapVariance);

}  // namespace cqr::mc
