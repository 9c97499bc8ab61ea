#include "cqr/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "cqr/math.hpp"

namespace cqr {

CovarianceFunction::CovarianceFunction(QuantileGrid grid, Index d)
    : grid_(std::move(grid)), d_(d) {
  blocks_.assign(grid_.size() * grid_.size(), MatrixXd::Zero(d_, d_));
}

const MatrixXd& CovarianceFunction::block(std::size_t g, std::size_t gp) const {
  return blocks_[g * grid_.size() + gp];
}

void CovarianceFunction::set_block(std::size_t g, std::size_t gp, MatrixXd value) {
  if (value.rows() != d_ || value.cols() != d_)
    throw DimensionMismatch("covariance block must be d x d");
  blocks_[g * grid_.size() + gp] = std::move(value);
  if (g != gp) blocks_[gp * grid_.size() + g] = blocks_[g * grid_.size() + gp].transpose();
}

CovarianceFunction bootstrap_covariance(const BootstrapEnsemble& ensemble,
                                        CovCentering centering) {
  const std::size_t m = ensemble.size();
  if (m < 2) throw InsufficientDraws(m);
  const Index d = ensemble.dim();
  const std::size_t G = ensemble.grid.size();
  const double n = static_cast<double>(ensemble.n_clusters);

  // center per tau: ensemble mean (default) or the original estimate
  MatrixXd mid(d, static_cast<Index>(G));
  if (centering == CovCentering::EnsembleMean) {
    mid.setZero();
    for (const auto& draw : ensemble.draws) mid += draw;
    mid /= static_cast<double>(m);
  } else {
    mid = ensemble.center.betas;
  }

  CovarianceFunction cov(ensemble.grid, d);
  cov.metadata.source = "bootstrap";
  cov.metadata.centering = centering;
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t gp = g; gp < G; ++gp) {
      MatrixXd block = MatrixXd::Zero(d, d);
      for (const auto& draw : ensemble.draws) {
        const VectorXd a = draw.col(static_cast<Index>(g)) - mid.col(static_cast<Index>(g));
        const VectorXd b = draw.col(static_cast<Index>(gp)) - mid.col(static_cast<Index>(gp));
        block.noalias() += a * b.transpose();
      }
      block *= n / static_cast<double>(m);
      cov.set_block(g, gp, std::move(block));
    }
  }
  return cov;
}

MatrixXd standard_errors(const CovarianceFunction& cov, Index n_clusters) {
  const std::size_t G = cov.grid().size();
  MatrixXd se(cov.dim(), static_cast<Index>(G));
  for (std::size_t g = 0; g < G; ++g) {
    const MatrixXd& block = cov.block(g, g);
    for (Index j = 0; j < cov.dim(); ++j) {
      double v = block(j, j);
      if (v < -1e-10) throw NegativeVariance(v);
      if (v < 0.0) v = 0.0;
      se(j, static_cast<Index>(g)) = std::sqrt(v / static_cast<double>(n_clusters));
    }
  }
  return se;
}

MatrixXd pss_sigma(const ClusteredDataset& data, const CoefficientProcess& center,
                   double tau) {
  const std::size_t g = center.grid.index_of(tau);
  const Index d = data.dim();
  const VectorXd resid =
      data.response() - data.design() * center.betas.col(static_cast<Index>(g));

  // per-cluster scores via exact sums, then an exact cluster accumulation so
  // the result is invariant to cluster order and within-cluster reordering
  std::vector<ExactSum> acc(static_cast<std::size_t>(d * d));
  std::vector<ExactSum> score(static_cast<std::size_t>(d));
  for (Index i = 0; i < data.n_clusters(); ++i) {
    for (auto& s : score) s.reset();
    const Index b = data.cluster_begin(i);
    for (Index k = b; k < b + data.cluster_size(i); ++k) {
      const double psi = tau - (resid(k) < 0.0 ? 1.0 : 0.0);
      for (Index j = 0; j < d; ++j)
        score[static_cast<std::size_t>(j)].add(psi * data.design()(k, j));
    }
    VectorXd s_i(d);
    for (Index j = 0; j < d; ++j) s_i(j) = score[static_cast<std::size_t>(j)].value();
    for (Index a = 0; a < d; ++a)
      for (Index bb = 0; bb < d; ++bb)
        acc[static_cast<std::size_t>(a * d + bb)].add(s_i(a) * s_i(bb));
  }
  MatrixXd sigma(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index bb = 0; bb < d; ++bb)
      sigma(a, bb) = acc[static_cast<std::size_t>(a * d + bb)].value() /
                     static_cast<double>(data.n_clusters());
  return sigma;
}

double hall_sheather_bandwidth(Index n_obs, double tau, double alpha) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("hall_sheather_bandwidth: bad tau");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("hall_sheather_bandwidth: bad alpha");
  const double z = norm_quantile(1.0 - alpha / 2.0);
  const double q = norm_quantile(tau);
  const double phi = norm_pdf(q);
  const double bracket = 1.5 * phi * phi / (2.0 * q * q + 1.0);
  return std::pow(static_cast<double>(n_obs), -1.0 / 3.0) * std::pow(z, 2.0 / 3.0) *
         std::cbrt(bracket);
}

namespace {

double sample_sd(const VectorXd& v) {
  const double mean = v.mean();
  double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// R type-7 quantile
double quantile7(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  const double h = (static_cast<double>(n) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

double robust_scale(const VectorXd& resid, ResidualScale kind) {
  std::vector<double> sorted(resid.data(), resid.data() + resid.size());
  std::sort(sorted.begin(), sorted.end());
  if (kind == ResidualScale::MadPss) {
    const double med = quantile7(sorted, 0.5);
    std::vector<double> dev(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) dev[i] = std::fabs(sorted[i] - med);
    std::sort(dev.begin(), dev.end());
    return quantile7(dev, 0.5);
  }
  const double iqr = quantile7(sorted, 0.75) - quantile7(sorted, 0.25);
  return std::min(sample_sd(resid), iqr / 1.349);
}

}  // namespace

MatrixXd powell_jacobian(const ClusteredDataset& data, const CoefficientProcess& center,
                         double tau, double h, PowellKernel kernel, ResidualScale scale) {
  if (!(h > 0.0)) throw InputError("powell_jacobian: bandwidth must be positive");
  const std::size_t g = center.grid.index_of(tau);
  const Index d = data.dim();
  const Index n_obs = data.n_obs();
  const VectorXd resid =
      data.response() - data.design() * center.betas.col(static_cast<Index>(g));
  const double h_used = h * robust_scale(resid, scale);
  if (!(h_used > 0.0)) throw EmptyWindow(h_used);

  std::vector<ExactSum> acc(static_cast<std::size_t>(d * d));
  Index inside = 0;
  for (Index k = 0; k < n_obs; ++k) {
    double weight = 0.0;
    if (kernel == PowellKernel::Uniform) {
      if (std::fabs(resid(k)) <= h_used) {
        weight = 1.0;
        ++inside;
      }
    } else {
      weight = norm_pdf(resid(k) / h_used);
      ++inside;
    }
    if (weight == 0.0) continue;
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b)
        acc[static_cast<std::size_t>(a * d + b)].add(weight * data.design()(k, a) *
                                                     data.design()(k, b));
  }
  if (inside == 0) throw EmptyWindow(h_used);

  const double norm = kernel == PowellKernel::Uniform
                          ? 1.0 / (2.0 * h_used * static_cast<double>(n_obs))
                          : 1.0 / (h_used * static_cast<double>(n_obs));
  MatrixXd jac(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b)
      jac(a, b) = norm * acc[static_cast<std::size_t>(a * d + b)].value();
  return jac;
}

MatrixXd analytical_covariance(const ClusteredDataset& data, const CoefficientProcess& center,
                               double tau, bool clustered, const AnalyticalOptions& options) {
  const Index d = data.dim();
  const double n = static_cast<double>(data.n_clusters());
  const double n_obs = static_cast<double>(data.n_obs());

  MatrixXd sigma;
  if (clustered) {
    sigma = pss_sigma(data, center, tau);
  } else {
    std::vector<ExactSum> acc(static_cast<std::size_t>(d * d));
    for (Index k = 0; k < data.n_obs(); ++k)
      for (Index a = 0; a < d; ++a)
        for (Index b = 0; b < d; ++b)
          acc[static_cast<std::size_t>(a * d + b)].add(data.design()(k, a) *
                                                       data.design()(k, b));
    sigma.resize(d, d);
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b)
        sigma(a, b) =
            tau * (1.0 - tau) / n * acc[static_cast<std::size_t>(a * d + b)].value();
  }

  const double h = hall_sheather_bandwidth(data.n_obs(), tau, options.alpha);
  // rescale the per-observation kernel moment to the per-cluster convention
  // used by sigma, so the sandwich matches sqrt(diag/n) standard errors
  MatrixXd jac =
      (n_obs / n) * powell_jacobian(data, center, tau, h, options.kernel, options.scale);

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jac);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    throw SingularJacobian(lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity());

  const MatrixXd jinv = eig.eigenvectors() *
                        eig.eigenvalues().cwiseInverse().asDiagonal() *
                        eig.eigenvectors().transpose();
  MatrixXd v = jinv * sigma * jinv;
  return 0.5 * (v + v.transpose());
}

void write_covariance_csv(const CovarianceFunction& cov, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw InputError("cannot open file for writing: " + path);
  outf << "# clusterqr-covariance v1\n";
  outf << "# source=" << cov.metadata.source << " centering="
       << (cov.metadata.centering == CovCentering::EnsembleMean ? "ensemble-mean"
                                                                : "at-center");
  if (!cov.metadata.kernel.empty()) outf << " kernel=" << cov.metadata.kernel;
  if (!cov.metadata.bandwidth_rule.empty())
    outf << " bandwidth_rule=" << cov.metadata.bandwidth_rule;
  outf << "\n";
  outf << "tau,tau_prime,row,col,value\n";
  char buf[64], t1[64], t2[64];
  for (std::size_t g = 0; g < cov.grid().size(); ++g) {
    std::snprintf(t1, sizeof(t1), "%.17g", cov.grid()[g]);
    for (std::size_t gp = 0; gp < cov.grid().size(); ++gp) {
      std::snprintf(t2, sizeof(t2), "%.17g", cov.grid()[gp]);
      const MatrixXd& block = cov.block(g, gp);
      for (Index a = 0; a < cov.dim(); ++a) {
        for (Index b = 0; b < cov.dim(); ++b) {
          std::snprintf(buf, sizeof(buf), "%.17g", block(a, b));
          outf << t1 << ',' << t2 << ',' << a << ',' << b << ',' << buf << '\n';
        }
      }
    }
  }
}

}  // namespace cqr
