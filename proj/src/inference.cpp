#include "cqr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cqr/math.hpp"

namespace cqr {

Hypothesis::Hypothesis(QuantileGrid g, std::vector<MatrixXd> R_in, std::vector<VectorXd> r_in)
    : grid(std::move(g)), R(std::move(R_in)), r(std::move(r_in)) {
  if (R.size() != grid.size() || r.size() != grid.size())
    throw DimensionMismatch("hypothesis needs one (R, r) pair per grid point");
  const Index h = R.front().rows();
  const Index d = R.front().cols();
  for (std::size_t g_i = 0; g_i < R.size(); ++g_i) {
    if (R[g_i].rows() != h || R[g_i].cols() != d || r[g_i].size() != h)
      throw DimensionMismatch("hypothesis matrices must share their shape");
    if (h > d) throw InputError("hypothesis has more restrictions than coefficients");
    Eigen::ColPivHouseholderQR<MatrixXd> qr(R[g_i].transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < h)
      throw InputError("restriction matrix not full row rank at tau=" +
                       std::to_string(grid[g_i]));
  }
}

Hypothesis Hypothesis::constant(QuantileGrid grid, MatrixXd R, VectorXd r) {
  const std::size_t G = grid.size();
  return Hypothesis(std::move(grid), std::vector<MatrixXd>(G, R), std::vector<VectorXd>(G, r));
}

Hypothesis Hypothesis::coefficient(QuantileGrid grid, Index d, Index j, double value) {
  if (j < 0 || j >= d) throw InputError("coefficient index out of range");
  MatrixXd R = MatrixXd::Zero(1, d);
  R(0, j) = 1.0;
  VectorXd r(1);
  r(0) = value;
  return constant(std::move(grid), std::move(R), std::move(r));
}

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::BootstrapWald: return "wald";
    case WeightKind::Analytical: return "analytical";
    case WeightKind::Identity: return "identity";
  }
  return "?";
}

std::string to_string(LambdaKind kind) {
  return kind == LambdaKind::BootstrapVariance ? "wald" : "identity";
}

MatrixXd inv_sqrt_psd(const MatrixXd& a, double tau_for_error) {
  if (a.rows() != a.cols()) throw DimensionMismatch("inv_sqrt_psd: matrix not square");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + a.cwiseAbs().maxCoeff()))
    throw DimensionMismatch("inv_sqrt_psd: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (a + a.transpose()));
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || eig.eigenvalues().minCoeff() < 1e-10 * lmax)
    throw NearSingularWeight(tau_for_error);
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

namespace {

double vec_norm(const VectorXd& v, KsNorm norm) {
  return norm == KsNorm::Euclidean ? v.norm() : v.cwiseAbs().maxCoeff();
}

std::vector<MatrixXd> test_weights(const ClusteredDataset& data,
                                   const CoefficientProcess& center,
                                   const BootstrapEnsemble& ensemble, const Hypothesis& hyp,
                                   WeightKind kind) {
  const std::size_t G = hyp.grid.size();
  std::vector<MatrixXd> w(G);
  switch (kind) {
    case WeightKind::Identity: {
      const Index h = hyp.n_restrictions();
      for (std::size_t g = 0; g < G; ++g) w[g] = MatrixXd::Identity(h, h);
      break;
    }
    case WeightKind::BootstrapWald: {
      CovarianceFunction cov = bootstrap_covariance(ensemble);
      for (std::size_t g = 0; g < G; ++g) {
        const MatrixXd omega = hyp.R[g] * cov.block(g, g) * hyp.R[g].transpose();
        w[g] = inv_sqrt_psd(omega, hyp.grid[g]);
      }
      break;
    }
    case WeightKind::Analytical: {
      for (std::size_t g = 0; g < G; ++g) {
        const MatrixXd v = analytical_covariance(data, center, hyp.grid[g], true);
        const MatrixXd omega = hyp.R[g] * v * hyp.R[g].transpose();
        w[g] = inv_sqrt_psd(omega, hyp.grid[g]);
      }
      break;
    }
  }
  return w;
}

}  // namespace

KsValue ks_statistic(const CoefficientProcess& center, const Hypothesis& hyp,
                     const std::vector<MatrixXd>& inv_sqrt_weight, Index n_clusters,
                     KsNorm norm) {
  if (!(center.grid == hyp.grid)) throw DimensionMismatch("ks_statistic: grids differ");
  if (inv_sqrt_weight.size() != hyp.grid.size())
    throw DimensionMismatch("ks_statistic: one weight per grid point required");
  const double sqrt_n = std::sqrt(static_cast<double>(n_clusters));
  KsValue out;
  for (std::size_t g = 0; g < hyp.grid.size(); ++g) {
    const VectorXd disc =
        hyp.R[g] * center.betas.col(static_cast<Index>(g)) - hyp.r[g];
    const double v = vec_norm(inv_sqrt_weight[g] * (sqrt_n * disc), norm);
    if (v > out.value || g == 0) {
      out.value = v;
      out.argmax = g;
    }
  }
  return out;
}

std::vector<double> bootstrap_ks(const BootstrapEnsemble& ensemble, const Hypothesis& hyp,
                                 const std::vector<MatrixXd>& inv_sqrt_weight, KsNorm norm) {
  if (!(ensemble.grid == hyp.grid)) throw DimensionMismatch("bootstrap_ks: grids differ");
  if (inv_sqrt_weight.size() != hyp.grid.size())
    throw DimensionMismatch("bootstrap_ks: one weight per grid point required");
  const double sqrt_n = std::sqrt(static_cast<double>(ensemble.n_clusters));
  std::vector<double> stats(ensemble.size());
  for (std::size_t r_i = 0; r_i < ensemble.size(); ++r_i) {
    double best = 0.0;
    for (std::size_t g = 0; g < hyp.grid.size(); ++g) {
      const VectorXd disc =
          hyp.R[g] * (ensemble.draws[r_i].col(static_cast<Index>(g)) -
                      ensemble.center.betas.col(static_cast<Index>(g)));
      best = std::max(best, vec_norm(inv_sqrt_weight[g] * (sqrt_n * disc), norm));
    }
    stats[r_i] = best;
  }
  return stats;
}

double critical_value(std::vector<double> stats, double alpha) {
  if (stats.empty()) throw InputError("critical_value: no statistics");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("critical_value: bad alpha");
  const std::size_t m = stats.size();
  std::sort(stats.begin(), stats.end());
  const double raw = (1.0 - alpha) * static_cast<double>(m);
  std::size_t k = static_cast<std::size_t>(std::ceil(raw));
  if (k < 1) k = 1;
  if (k > m) k = m;
  return stats[k - 1];
}

TestResult ks_test(const ClusteredDataset& data, const CoefficientProcess& center,
                   const BootstrapEnsemble& ensemble, const Hypothesis& hyp,
                   WeightKind weight_kind, double alpha, KsNorm norm) {
  const auto weights = test_weights(data, center, ensemble, hyp, weight_kind);
  TestResult res;
  res.kind = "ks-bootstrap";
  res.alpha = alpha;
  res.weight_kind = weight_kind;

  const double sqrt_n = std::sqrt(static_cast<double>(ensemble.n_clusters));
  res.per_tau.resize(hyp.grid.size());
  for (std::size_t g = 0; g < hyp.grid.size(); ++g) {
    const VectorXd disc = hyp.R[g] * center.betas.col(static_cast<Index>(g)) - hyp.r[g];
    res.per_tau[g] = vec_norm(weights[g] * (sqrt_n * disc), norm);
  }
  const KsValue ks = ks_statistic(center, hyp, weights, ensemble.n_clusters, norm);
  res.statistic = ks.value;
  res.max_tau = hyp.grid[ks.argmax];
  res.bootstrap_stats = bootstrap_ks(ensemble, hyp, weights, norm);
  res.critical_value = critical_value(res.bootstrap_stats, alpha);
  std::size_t count = 0;
  for (double s : res.bootstrap_stats)
    if (s >= res.statistic) ++count;
  res.p_value = static_cast<double>(1 + count) /
                static_cast<double>(res.bootstrap_stats.size() + 1);
  res.reject = res.statistic > res.critical_value;
  return res;
}

TestResult pointwise_wald(const CoefficientProcess& center, const CovarianceFunction& cov,
                          const Hypothesis& hyp, double tau, Index n_clusters, double alpha) {
  const std::size_t g = hyp.grid.index_of(tau);
  const std::size_t gc = cov.grid().index_of(tau);
  const std::size_t gb = center.grid.index_of(tau);
  const Index h = hyp.n_restrictions();
  const double n = static_cast<double>(n_clusters);

  const MatrixXd omega = hyp.R[g] * cov.block(gc, gc) * hyp.R[g].transpose();
  const MatrixXd w = inv_sqrt_psd(omega, tau);
  const VectorXd disc = hyp.R[g] * center.betas.col(static_cast<Index>(gb)) - hyp.r[g];
  const VectorXd scaled = w * (std::sqrt(n) * disc);

  TestResult res;
  res.kind = "wald-chi2";
  res.alpha = alpha;
  res.weight_kind = WeightKind::BootstrapWald;
  res.df = static_cast<int>(h);
  res.max_tau = tau;
  res.statistic = scaled.squaredNorm();
  res.critical_value = chi2_quantile(1.0 - alpha, static_cast<double>(h));
  res.p_value = 1.0 - chi2_cdf(res.statistic, static_cast<double>(h));
  res.reject = res.statistic > res.critical_value;
  res.per_tau = {res.statistic};
  if (h == 1) {
    const double se = std::sqrt(omega(0, 0) / n);
    res.studentized = disc(0) / se;
    res.z_critical = norm_quantile(1.0 - alpha / 2.0);
  }
  return res;
}

ConfidenceBand confidence_bands(const BootstrapEnsemble& ensemble, LambdaKind lambda_kind,
                                const std::vector<Index>& delta, double alpha) {
  if (delta.empty()) throw InputError("confidence_bands: empty coefficient subset");
  const Index d = ensemble.dim();
  for (Index j : delta)
    if (j < 0 || j >= d) throw InputError("confidence_bands: coefficient index out of range");
  const std::size_t G = ensemble.grid.size();
  const double n = static_cast<double>(ensemble.n_clusters);

  // Lambda(tau) diagonal entries for the selected coefficients
  MatrixXd lam(static_cast<Index>(delta.size()), static_cast<Index>(G));
  if (lambda_kind == LambdaKind::BootstrapVariance) {
    CovarianceFunction cov = bootstrap_covariance(ensemble);
    for (std::size_t g = 0; g < G; ++g) {
      const MatrixXd& block = cov.block(g, g);
      for (std::size_t a = 0; a < delta.size(); ++a) {
        double v = block(delta[a], delta[a]);
        if (v < -1e-10) throw NegativeVariance(v);
        lam(static_cast<Index>(a), static_cast<Index>(g)) = std::max(v, 0.0);
      }
    }
  } else {
    lam.setOnes();
  }

  // half-width scale sqrt(Lambda_jj / n); zero variance collapses the band
  MatrixXd scale = (lam / n).cwiseSqrt();

  std::vector<double> stats(ensemble.size());
  for (std::size_t r_i = 0; r_i < ensemble.size(); ++r_i) {
    double best = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t a = 0; a < delta.size(); ++a) {
        const double dev =
            ensemble.draws[r_i](delta[a], static_cast<Index>(g)) -
            ensemble.center.betas(delta[a], static_cast<Index>(g));
        const double s = scale(static_cast<Index>(a), static_cast<Index>(g));
        if (s > 0.0)
          best = std::max(best, std::fabs(dev) / s);
        else if (dev != 0.0)
          best = std::numeric_limits<double>::infinity();
      }
    }
    stats[r_i] = best;
  }

  ConfidenceBand band;
  band.grid = ensemble.grid;
  band.delta = delta;
  band.lambda_kind = lambda_kind;
  band.alpha = alpha;
  band.q = critical_value(stats, alpha);
  band.center.resize(static_cast<Index>(delta.size()), static_cast<Index>(G));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t a = 0; a < delta.size(); ++a)
      band.center(static_cast<Index>(a), static_cast<Index>(g)) =
          ensemble.center.betas(delta[a], static_cast<Index>(g));
  band.lower = band.center - band.q * scale;
  band.upper = band.center + band.q * scale;
  return band;
}

bool band_covers(const ConfidenceBand& band, const MatrixXd& values) {
  if (values.rows() != band.center.rows() || values.cols() != band.center.cols())
    throw DimensionMismatch("band_covers: value matrix must be |delta| x G");
  return (values.array() >= band.lower.array()).all() &&
         (values.array() <= band.upper.array()).all();
}

void ConfidenceBand::write_csv(const std::string& path,
                               const std::vector<std::string>& names) const {
  std::ofstream outf(path);
  if (!outf) throw InputError("cannot open file for writing: " + path);
  outf << "tau,coef,lower,center,upper\n";
  char b1[64], b2[64], b3[64], bt[64];
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::snprintf(bt, sizeof(bt), "%.17g", grid[g]);
    for (std::size_t a = 0; a < delta.size(); ++a) {
      std::string name = names.empty() ? "b" + std::to_string(delta[a])
                                       : names[static_cast<std::size_t>(delta[a])];
      std::snprintf(b1, sizeof(b1), "%.17g", lower(static_cast<Index>(a), static_cast<Index>(g)));
      std::snprintf(b2, sizeof(b2), "%.17g", center(static_cast<Index>(a), static_cast<Index>(g)));
      std::snprintf(b3, sizeof(b3), "%.17g", upper(static_cast<Index>(a), static_cast<Index>(g)));
      outf << bt << ',' << name << ',' << b1 << ',' << b2 << ',' << b3 << '\n';
    }
  }
}

std::string TestResult::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["statistic"] = statistic;
  j["critical_value"] = critical_value;
  j["p_value"] = p_value;
  j["reject"] = reject;
  j["alpha"] = alpha;
  j["weight"] = to_string(weight_kind);
  j["max_tau"] = max_tau;
  if (!per_tau.empty()) j["per_tau"] = per_tau;
  if (!bootstrap_stats.empty()) j["bootstrap_stats"] = bootstrap_stats;
  if (kind == "wald-chi2") {
    j["df"] = df;
    if (df == 1) {
      j["studentized"] = studentized;
      j["z_critical"] = z_critical;
    }
  }
  return j.dump(2);
}

std::string ConfidenceBand::to_json() const {
  nlohmann::json j;
  j["q"] = q;
  j["alpha"] = alpha;
  j["lambda"] = to_string(lambda_kind);
  j["taus"] = grid.taus;
  j["delta"] = delta;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (std::size_t a = 0; a < delta.size(); ++a) {
      rows.push_back({{"tau", grid[g]},
                      {"coef", delta[a]},
                      {"lower", lower(static_cast<Index>(a), static_cast<Index>(g))},
                      {"center", center(static_cast<Index>(a), static_cast<Index>(g))},
                      {"upper", upper(static_cast<Index>(a), static_cast<Index>(g))}});
    }
  }
  j["intervals"] = rows;
  return j.dump(2);
}

}  // namespace cqr
