#include "cqr/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace cqr {

std::string to_string(WeightDistribution dist) {
  switch (dist) {
    case WeightDistribution::Mammen2Point: return "mammen";
    case WeightDistribution::Rademacher: return "rademacher";
    case WeightDistribution::Webb6Point: return "webb";
    case WeightDistribution::StandardNormal: return "normal";
    case WeightDistribution::RecenteredExponential: return "exponential";
    case WeightDistribution::DegenerateZero: return "degenerate-zero";
  }
  return "?";
}

WeightDistribution parse_weight_distribution(const std::string& name) {
  if (name == "mammen") return WeightDistribution::Mammen2Point;
  if (name == "rademacher") return WeightDistribution::Rademacher;
  if (name == "webb") return WeightDistribution::Webb6Point;
  if (name == "normal") return WeightDistribution::StandardNormal;
  if (name == "exponential") return WeightDistribution::RecenteredExponential;
  if (name == "degenerate-zero") return WeightDistribution::DegenerateZero;
  throw InputError("unknown weight distribution: " + name);
}

VectorXd draw_weights(WeightDistribution dist, Index n, rng::Stream& stream) {
  if (n < 1) throw InputError("draw_weights: n must be >= 1");
  VectorXd w(n);
  const double sqrt5 = std::sqrt(5.0);
  switch (dist) {
    case WeightDistribution::Mammen2Point: {
      const double lo = -(sqrt5 - 1.0) / 2.0;
      const double hi = (sqrt5 + 1.0) / 2.0;
      const double p_lo = (sqrt5 + 1.0) / (2.0 * sqrt5);
      for (Index i = 0; i < n; ++i) w(i) = stream.next_double() < p_lo ? lo : hi;
      break;
    }
    case WeightDistribution::Rademacher:
      for (Index i = 0; i < n; ++i) w(i) = (stream.next_u64() & 1u) ? 1.0 : -1.0;
      break;
    case WeightDistribution::Webb6Point: {
      static const double vals[6] = {-1.2247448713915890, -1.0, -0.7071067811865476,
                                     0.7071067811865476,  1.0,  1.2247448713915890};
      for (Index i = 0; i < n; ++i) w(i) = vals[stream.next_below(6)];
      break;
    }
    case WeightDistribution::StandardNormal:
      for (Index i = 0; i < n; ++i) w(i) = stream.next_normal();
      break;
    case WeightDistribution::RecenteredExponential:
      for (Index i = 0; i < n; ++i) w(i) = -std::log(1.0 - stream.next_double()) - 1.0;
      break;
    case WeightDistribution::DegenerateZero:
      w.setZero();
      break;
  }
  return w;
}

namespace {

// psi_tau per observation for every grid point; z = 0 counts as not-below.
MatrixXd psi_matrix(const ClusteredDataset& data, const CoefficientProcess& center) {
  const Index n_obs = data.n_obs();
  const Index G = static_cast<Index>(center.grid.size());
  MatrixXd psi(n_obs, G);
  for (Index g = 0; g < G; ++g) {
    const double tau = center.grid[static_cast<std::size_t>(g)];
    VectorXd resid = data.response() - data.design() * center.betas.col(g);
    for (Index k = 0; k < n_obs; ++k) psi(k, g) = tau - (resid(k) < 0.0 ? 1.0 : 0.0);
  }
  return psi;
}

VectorXd expand_weights(const ClusteredDataset& data, const VectorXd& weights) {
  VectorXd w_obs(data.n_obs());
  for (Index i = 0; i < data.n_clusters(); ++i)
    w_obs.segment(data.cluster_begin(i), data.cluster_size(i)).setConstant(weights(i));
  return w_obs;
}

}  // namespace

MatrixXd gradient_process(const ClusteredDataset& data, const CoefficientProcess& center,
                          const VectorXd& weights) {
  if (weights.size() != data.n_clusters())
    throw DimensionMismatch("gradient_process: weights length != n clusters");
  if (center.betas.rows() != data.dim())
    throw DimensionMismatch("gradient_process: center dimension != d");
  const MatrixXd psi = psi_matrix(data, center);
  const VectorXd w_obs = expand_weights(data, weights);
  const double scale = 1.0 / std::sqrt(static_cast<double>(data.n_clusters()));
  const Index G = psi.cols();
  MatrixXd grad(data.dim(), G);
  for (Index g = 0; g < G; ++g)
    grad.col(g) = scale * (data.design().transpose() * (psi.col(g).cwiseProduct(w_obs)));
  return grad;
}

VectorXd gradient_at(const ClusteredDataset& data, const VectorXd& beta, double tau,
                     const VectorXd& weights) {
  CoefficientProcess single;
  single.grid = QuantileGrid({tau});
  single.betas = beta;
  return gradient_process(data, single, weights).col(0);
}

PseudoObservation pseudo_observation(const VectorXd& w_tau, double tau, double y_star,
                                     Index n_clusters) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("pseudo_observation: tau outside (0,1)");
  VectorXd x_star = -std::sqrt(static_cast<double>(n_clusters)) / tau * w_tau;
  return PseudoObservation(y_star, std::move(x_star));
}

double y_star(const ClusteredDataset& data) {
  double max_abs_y = data.response().cwiseAbs().maxCoeff();
  if (max_abs_y == 0.0) max_abs_y = 1.0;  // degenerate-data guard
  return static_cast<double>(data.n_clusters()) *
         static_cast<double>(data.max_cluster_size()) * max_abs_y;
}

BootstrapEnsemble bootstrap_ensemble(const ClusteredDataset& data,
                                     const CoefficientProcess& center, std::size_t m,
                                     WeightDistribution dist, std::uint64_t seed,
                                     const EnsembleOptions& options) {
  if (m < 2) throw InsufficientDraws(m);
  if (data.n_clusters() < 2) throw InputError("bootstrap requires at least 2 clusters");
  if (center.betas.rows() != data.dim())
    throw DimensionMismatch("bootstrap_ensemble: center dimension != d");

  BootstrapEnsemble out;
  out.grid = center.grid;
  out.center = center;
  out.n_clusters = data.n_clusters();
  out.seed = seed;
  out.distribution = dist;
  out.y_star_value = y_star(data);
  out.draws.resize(m);

  const Index n = data.n_clusters();
  const Index G = static_cast<Index>(center.grid.size());
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const MatrixXd psi = psi_matrix(data, center);

  std::atomic<int> retries{0};
  std::atomic<std::size_t> next{0};
  std::size_t failure_rep = m + 1;
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    QrWorkspace ws(data);
    VectorXd w_obs(data.n_obs());
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= m) break;
      try {
        rng::Stream stream = rng::Stream::keyed(seed, r, 0, rng::kWeights);
        const VectorXd weights = draw_weights(dist, n, stream);
        for (Index i = 0; i < n; ++i)
          w_obs.segment(data.cluster_begin(i), data.cluster_size(i))
              .setConstant(weights(i));
        MatrixXd betas(data.dim(), G);
        for (Index g = 0; g < G; ++g) {
          const double tau = center.grid[static_cast<std::size_t>(g)];
          const VectorXd w_tau =
              (data.design().transpose() * psi.col(g).cwiseProduct(w_obs)) / sqrt_n;
          PseudoObservation pseudo(out.y_star_value, -sqrt_n / tau * w_tau);
          const VectorXd warm = center.betas.col(g);
          AugmentedFitResult res = ws.fit_augmented(pseudo, tau, &warm, options.fit);
          if (res.dominance_retried) retries.fetch_add(1);
          betas.col(g) = res.beta;
        }
        out.draws[r] = std::move(betas);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (r < failure_rep) {
          failure_rep = r;
          failure = "replication " + std::to_string(r) + ": " + e.what();
        }
      }
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (!failure.empty()) throw SolverError("bootstrap ensemble aborted: " + failure);
  out.dominance_retries = retries.load();
  return out;
}

void write_ensemble_csv(const BootstrapEnsemble& ensemble, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw InputError("cannot open file for writing: " + path);
  outf << "# clusterqr-ensemble v1\n";
  outf << "# n_clusters=" << ensemble.n_clusters << " d=" << ensemble.dim()
       << " m=" << ensemble.size() << " seed=" << ensemble.seed
       << " dist=" << to_string(ensemble.distribution) << " y_star=";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", ensemble.y_star_value);
  outf << buf << " dominance_retries=" << ensemble.dominance_retries << "\n";
  outf << "replication,tau,coef,value\n";
  auto emit = [&](long long rep, const MatrixXd& betas) {
    for (Index g = 0; g < betas.cols(); ++g) {
      for (Index j = 0; j < betas.rows(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", betas(j, g));
        char tbuf[64];
        std::snprintf(tbuf, sizeof(tbuf), "%.17g",
                      ensemble.grid[static_cast<std::size_t>(g)]);
        outf << rep << ',' << tbuf << ',' << j << ',' << buf << '\n';
      }
    }
  };
  emit(-1, ensemble.center.betas);
  for (std::size_t r = 0; r < ensemble.size(); ++r)
    emit(static_cast<long long>(r), ensemble.draws[r]);
}

BootstrapEnsemble read_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# clusterqr-ensemble v1", 0) != 0)
    throw InputError("not a clusterqr ensemble file: " + path);

  BootstrapEnsemble out;
  if (!std::getline(in, line)) throw InputError("truncated ensemble file");
  {
    std::stringstream ss(line.substr(1));
    std::string kv;
    std::map<std::string, std::string> meta;
    while (ss >> kv) {
      auto eq = kv.find('=');
      if (eq != std::string::npos) meta[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    out.n_clusters = std::stoll(meta.at("n_clusters"));
    out.seed = std::stoull(meta.at("seed"));
    out.distribution = parse_weight_distribution(meta.at("dist"));
    out.y_star_value = std::stod(meta.at("y_star"));
    out.dominance_retries = std::stoi(meta.at("dominance_retries"));
  }
  std::getline(in, line);  // column header

  std::map<long long, std::map<std::pair<double, Index>, double>> cells;
  std::vector<double> taus;
  Index d = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f0, f1, f2, f3;
    std::getline(ss, f0, ',');
    std::getline(ss, f1, ',');
    std::getline(ss, f2, ',');
    std::getline(ss, f3, ',');
    const long long rep = std::stoll(f0);
    const double tau = std::stod(f1);
    const Index coef = std::stoll(f2);
    cells[rep][{tau, coef}] = std::stod(f3);
    if (rep == -1) {
      if (std::find(taus.begin(), taus.end(), tau) == taus.end()) taus.push_back(tau);
      d = std::max(d, coef + 1);
    }
  }
  std::sort(taus.begin(), taus.end());
  out.grid = QuantileGrid(taus);
  const Index G = static_cast<Index>(taus.size());
  auto to_matrix = [&](const std::map<std::pair<double, Index>, double>& vals) {
    MatrixXd betas(d, G);
    for (Index g = 0; g < G; ++g)
      for (Index j = 0; j < d; ++j)
        betas(j, g) = vals.at({taus[static_cast<std::size_t>(g)], j});
    return betas;
  };
  out.center.grid = out.grid;
  out.center.betas = to_matrix(cells.at(-1));
  for (auto& [rep, vals] : cells) {
    if (rep < 0) continue;
    if (static_cast<std::size_t>(rep) != out.draws.size())
      throw InputError("ensemble file has non-contiguous replication numbers");
    out.draws.push_back(to_matrix(vals));
  }
  return out;
}

}  // namespace cqr
