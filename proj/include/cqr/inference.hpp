#pragma once

#include <string>
#include <vector>

#include "cqr/bootstrap.hpp"
#include "cqr/covariance.hpp"
#include "cqr/dataset.hpp"
#include "cqr/grid.hpp"

namespace cqr {

// Per-tau restriction pair (R(tau), r(tau)) defining H0: R(tau) b(tau) = r(tau).
struct Hypothesis {
  QuantileGrid grid;
  std::vector<MatrixXd> R;  // one h x d matrix per grid point, full row rank
  std::vector<VectorXd> r;

  Hypothesis(QuantileGrid g, std::vector<MatrixXd> R_in, std::vector<VectorXd> r_in);

  // Same restriction at every grid point.
  static Hypothesis constant(QuantileGrid grid, MatrixXd R, VectorXd r);
  // H0: beta_j(tau) = value for all tau in the grid.
  static Hypothesis coefficient(QuantileGrid grid, Index d, Index j, double value);

  Index n_restrictions() const { return R.front().rows(); }
};

enum class KsNorm { Euclidean, Max };
enum class WeightKind { BootstrapWald, Analytical, Identity };
enum class LambdaKind { BootstrapVariance, Identity };

std::string to_string(WeightKind kind);
std::string to_string(LambdaKind kind);

// Symmetric B with B*A*B = I via eigendecomposition; eigenvalues below
// 1e-10 * max eigenvalue are an error.
MatrixXd inv_sqrt_psd(const MatrixXd& a, double tau_for_error = -1.0);

struct KsValue {
  double value = 0.0;
  std::size_t argmax = 0;  // grid index attaining the sup
};

// sup over the grid of |W(tau) sqrt(n) (R(tau) beta(tau) - r(tau))| where
// W(tau) is the supplied inverse square root weight.
KsValue ks_statistic(const CoefficientProcess& center, const Hypothesis& hyp,
                     const std::vector<MatrixXd>& inv_sqrt_weight, Index n_clusters,
                     KsNorm norm = KsNorm::Euclidean);

// Bootstrap analogue, centered at the fitted process; r(tau) does not enter.
std::vector<double> bootstrap_ks(const BootstrapEnsemble& ensemble, const Hypothesis& hyp,
                                 const std::vector<MatrixXd>& inv_sqrt_weight,
                                 KsNorm norm = KsNorm::Euclidean);

// ceil((1-alpha) m)-th ascending order statistic.
double critical_value(std::vector<double> stats, double alpha);

struct TestResult {
  std::string kind;  // "ks-bootstrap" or "wald-chi2"
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  WeightKind weight_kind = WeightKind::Identity;
  double max_tau = 0.0;  // grid point attaining the sup
  std::vector<double> per_tau;  // per-tau weighted discrepancy norms
  std::vector<double> bootstrap_stats;
  int df = 0;                 // Wald only
  double studentized = 0.0;   // Wald with one restriction
  double z_critical = 0.0;

  std::string to_json() const;
};

// Algorithm: KS statistic, m bootstrap statistics with the weight held fixed,
// empirical critical value, (1 + count)/(m+1) p-value.
TestResult ks_test(const ClusteredDataset& data, const CoefficientProcess& center,
                   const BootstrapEnsemble& ensemble, const Hypothesis& hyp,
                   WeightKind weight_kind, double alpha, KsNorm norm = KsNorm::Euclidean);

// Chi-square Wald test at a single grid point using a covariance function
// estimate; also reports the studentized form for scalar restrictions.
TestResult pointwise_wald(const CoefficientProcess& center, const CovarianceFunction& cov,
                          const Hypothesis& hyp, double tau, Index n_clusters, double alpha);

struct ConfidenceBand {
  QuantileGrid grid;
  std::vector<Index> delta;  // coefficient indices covered by the band
  double q = 0.0;            // bootstrap quantile of the sup statistic
  LambdaKind lambda_kind = LambdaKind::BootstrapVariance;
  double alpha = 0.05;
  MatrixXd lower, center, upper;  // |delta| x G

  void write_csv(const std::string& path,
                 const std::vector<std::string>& names = {}) const;
  std::string to_json() const;
};

ConfidenceBand confidence_bands(const BootstrapEnsemble& ensemble, LambdaKind lambda_kind,
                                const std::vector<Index>& delta, double alpha);

// True if value(tau)_j lies inside the band for every tau and j in delta.
bool band_covers(const ConfidenceBand& band, const MatrixXd& values);

}  // namespace cqr
