#include "cqr/mc.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cqr/covariance.hpp"
#include "cqr/math.hpp"

namespace cqr::mc {

void McConfig::validate() const {
  if (n_clusters < 2) throw InputError("mc: need at least 2 clusters");
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("mc: rho must be in [0,1)");
  if (c_min < 1 || c_min > c_max) throw InputError("mc: need 1 <= c_min <= c_max");
  if (reps < 1) throw InputError("mc: reps must be >= 1");
  if (m < 2) throw InsufficientDraws(m);
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("mc: alpha outside (0,1)");
  grid.validate();
}

ClusteredDataset generate_dgp(const McConfig& cfg, std::size_t rep_index) {
  cfg.validate();
  rng::Stream stream = rng::Stream::keyed(cfg.seed, rep_index, 0, rng::kDgp);

  const double rho_x = cfg.rho_x >= 0.0 ? cfg.rho_x : cfg.rho;
  // within-cluster correlation of U, clamped as in the simulated design
  double lambda;
  if (cfg.rho_u >= 0.0) {
    lambda = std::min(1.0, cfg.rho_u);
  } else {
    lambda = std::min(1.0, 3.0 * cfg.rho / (2.0 * cfg.rho * cfg.rho + 1.0));
  }

  const Index n = cfg.n_clusters;
  std::vector<Index> sizes(static_cast<std::size_t>(n));
  Index total = 0;
  for (auto& c : sizes) {
    c = cfg.c_min + static_cast<Index>(stream.next_below(
                        static_cast<std::uint64_t>(cfg.c_max - cfg.c_min + 1)));
    total += c;
  }

  MatrixXd X(total, 3);
  VectorXd y(total);
  const double sx_common = std::sqrt(rho_x);
  const double sx_idio = std::sqrt(1.0 - rho_x);
  const double su_common = std::sqrt(lambda);
  const double su_idio = std::sqrt(1.0 - lambda);
  const double u_scale = std::sqrt(1.0 / 3.0);

  Index row = 0;
  for (Index i = 0; i < n; ++i) {
    const double z_i = stream.next_normal();
    const double v_i = stream.next_normal();
    for (Index k = 0; k < sizes[static_cast<std::size_t>(i)]; ++k, ++row) {
      const double x = sx_common * z_i + sx_idio * stream.next_normal();
      const double u = u_scale * (su_common * v_i + su_idio * stream.next_normal());
      X(row, 0) = 1.0;
      X(row, 1) = x;
      X(row, 2) = x * x;
      y(row) = 0.1 * u + x + x * x * u;
    }
  }
  return ClusteredDataset(std::move(X), std::move(y), std::move(sizes));
}

Eigen::Vector3d true_beta(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("true_beta: tau outside (0,1)");
  const double q = norm_quantile(tau);
  return {q / std::sqrt(300.0), 1.0, q / std::sqrt(3.0)};
}

std::string to_string(McMethod method) {
  switch (method) {
    case McMethod::BootstrapCV: return "bootstrap-cv";
    case McMethod::BootstrapSE: return "bootstrap-se";
    case McMethod::AnalyticalClustered: return "analytical-clustered";
    case McMethod::AnalyticalPlain: return "analytical-plain";
    case McMethod::KsBootWald: return "ks-boot-wald";
    case McMethod::KsAnalytical: return "ks-analytical";
    case McMethod::KsUnweighted: return "ks-unweighted";
  }
  return "?";
}

McMethod parse_method(const std::string& name) {
  for (McMethod m : {McMethod::BootstrapCV, McMethod::BootstrapSE,
                     McMethod::AnalyticalClustered, McMethod::AnalyticalPlain,
                     McMethod::KsBootWald, McMethod::KsAnalytical, McMethod::KsUnweighted}) {
    if (to_string(m) == name) return m;
  }
  throw InputError("unknown MC method: " + name);
}

std::string RejectionTable::to_csv() const {
  std::ostringstream out;
  out << "method,param,frequency,reps,binomial_se\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.frequency);
    out << row.method << ',' << row.param << ',' << buf << ',' << row.reps << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", row.binomial_se);
    out << buf << '\n';
  }
  return out.str();
}

void RejectionTable::write_csv(const std::string& path) const {
  std::ofstream outf(path);
  if (!outf) throw InputError("cannot open file for writing: " + path);
  outf << to_csv();
}

namespace {

// Pointwise decision H0: beta_j(tau0) = v for one replication.
bool pointwise_reject(McMethod method, const McConfig& cfg, const ClusteredDataset& data,
                      const CoefficientProcess& center, const BootstrapEnsemble& ensemble,
                      const CovarianceFunction* boot_cov, const McHypothesis& hyp) {
  const std::size_t g = center.grid.index_of(hyp.tau0);
  const double est = center.betas(hyp.coef, static_cast<Index>(g));
  const double disc = est - hyp.value;
  const double z = norm_quantile(1.0 - cfg.alpha / 2.0);

  switch (method) {
    case McMethod::BootstrapCV: {
      // scalar restriction: the weight cancels from the decision, so compare
      // |disc| against the empirical quantile of |b*_j - b_j|
      std::vector<double> stats(ensemble.size());
      for (std::size_t r = 0; r < ensemble.size(); ++r)
        stats[r] = std::fabs(ensemble.draws[r](hyp.coef, static_cast<Index>(g)) - est);
      return std::fabs(disc) > critical_value(stats, cfg.alpha);
    }
    case McMethod::BootstrapSE: {
      const double se =
          std::sqrt(boot_cov->block(g, g)(hyp.coef, hyp.coef) /
                    static_cast<double>(ensemble.n_clusters));
      return std::fabs(disc) / se > z;
    }
    case McMethod::AnalyticalClustered:
    case McMethod::AnalyticalPlain: {
      const MatrixXd v = analytical_covariance(data, center, hyp.tau0,
                                               method == McMethod::AnalyticalClustered);
      const double se =
          std::sqrt(v(hyp.coef, hyp.coef) / static_cast<double>(data.n_clusters()));
      return std::fabs(disc) / se > z;
    }
    default:
      throw InputError("method " + to_string(method) + " is not a pointwise test");
  }
}

// Restrict an ensemble to a sub-grid so uniform tests run exactly over the
// configured quantile set.
BootstrapEnsemble slice_ensemble(const BootstrapEnsemble& ensemble,
                                 const QuantileGrid& target) {
  if (ensemble.grid == target) return ensemble;
  std::vector<Index> cols;
  cols.reserve(target.size());
  for (double tau : target.taus)
    cols.push_back(static_cast<Index>(ensemble.grid.index_of(tau)));
  BootstrapEnsemble out = ensemble;
  out.grid = target;
  out.center.grid = target;
  out.center.betas = ensemble.center.betas(Eigen::all, cols);
  for (std::size_t r = 0; r < ensemble.size(); ++r)
    out.draws[r] = ensemble.draws[r](Eigen::all, cols);
  return out;
}

bool uniform_reject(McMethod method, const McConfig& cfg, const ClusteredDataset& data,
                    const BootstrapEnsemble& ensemble, const McHypothesis& hyp) {
  WeightKind kind;
  switch (method) {
    case McMethod::KsBootWald: kind = WeightKind::BootstrapWald; break;
    case McMethod::KsAnalytical: kind = WeightKind::Analytical; break;
    case McMethod::KsUnweighted: kind = WeightKind::Identity; break;
    default: throw InputError("method " + to_string(method) + " is not a uniform test");
  }
  const BootstrapEnsemble sliced = slice_ensemble(ensemble, cfg.grid);
  const Hypothesis h =
      Hypothesis::coefficient(cfg.grid, data.dim(), hyp.coef, hyp.value);
  return ks_test(data, sliced.center, sliced, h, kind, cfg.alpha).reject;
}

}  // namespace

std::vector<RejectionTable> run_batch(const McConfig& cfg, const std::vector<McTask>& tasks) {
  cfg.validate();
  if (tasks.empty()) throw InputError("mc: no tasks");

  // grid shared by every replication: the configured grid plus any pointwise
  // quantiles requested by tasks
  std::vector<double> taus;
  bool need_full_grid = false;
  for (const auto& task : tasks) {
    if (task.kind == McTask::Coverage || task.hypothesis.uniform) {
      need_full_grid = true;
    } else {
      taus.push_back(task.hypothesis.tau0);
    }
  }
  if (need_full_grid) taus.insert(taus.end(), cfg.grid.taus.begin(), cfg.grid.taus.end());
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  const QuantileGrid run_grid(taus);

  // decisions[t][rep] = 0/1 per method (flattened per task)
  std::vector<std::vector<std::vector<std::uint8_t>>> decisions(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::size_t width =
        tasks[t].kind == McTask::Coverage ? 1 : tasks[t].methods.size();
    decisions[t].assign(width, std::vector<std::uint8_t>(cfg.reps, 0));
  }

  std::atomic<std::size_t> next{0};
  std::size_t failure_rep = cfg.reps + 1;
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t rep = next.fetch_add(1);
      if (rep >= cfg.reps) break;
      try {
        const ClusteredDataset data = generate_dgp(cfg, rep);
        McConfig local = cfg;
        local.grid = run_grid;

        const CoefficientProcess center = fit_process(data, run_grid);
        EnsembleOptions ens_opts;
        const BootstrapEnsemble ensemble =
            bootstrap_ensemble(data, center, cfg.m, cfg.dist,
                               rng::derive_seed(cfg.seed, rep, 0, rng::kWeights), ens_opts);

        bool need_boot_cov = false;
        for (const auto& task : tasks) {
          if (task.kind == McTask::Coverage && task.lambda == LambdaKind::BootstrapVariance)
            need_boot_cov = true;
          for (McMethod m : task.methods)
            if (m == McMethod::BootstrapSE) need_boot_cov = true;
        }
        CovarianceFunction boot_cov(run_grid, data.dim());
        if (need_boot_cov) boot_cov = bootstrap_covariance(ensemble);

        for (std::size_t t = 0; t < tasks.size(); ++t) {
          const McTask& task = tasks[t];
          if (task.kind == McTask::Coverage) {
            const BootstrapEnsemble sliced = slice_ensemble(ensemble, cfg.grid);
            const ConfidenceBand band =
                confidence_bands(sliced, task.lambda, task.delta, cfg.alpha);
            MatrixXd truth(static_cast<Index>(task.delta.size()),
                           static_cast<Index>(cfg.grid.size()));
            for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
              const Eigen::Vector3d b = true_beta(cfg.grid[g]);
              for (std::size_t a = 0; a < task.delta.size(); ++a)
                truth(static_cast<Index>(a), static_cast<Index>(g)) = b(task.delta[a]);
            }
            decisions[t][0][rep] = band_covers(band, truth) ? 1 : 0;
          } else {
            McConfig task_cfg = local;
            for (std::size_t mi = 0; mi < task.methods.size(); ++mi) {
              const McMethod method = task.methods[mi];
              bool reject;
              if (method == McMethod::KsBootWald || method == McMethod::KsAnalytical ||
                  method == McMethod::KsUnweighted) {
                task_cfg.grid = cfg.grid;
                reject = uniform_reject(method, task_cfg, data, ensemble, task.hypothesis);
              } else {
                reject = pointwise_reject(method, task_cfg, data, center, ensemble,
                                          need_boot_cov ? &boot_cov : nullptr,
                                          task.hypothesis);
              }
              decisions[t][mi][rep] = reject ? 1 : 0;
            }
          }
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (rep < failure_rep) {
          failure_rep = rep;
          failure = "replication " + std::to_string(rep) + ": " + e.what();
        }
      }
    }
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (!failure.empty()) throw SolverError("mc run aborted: " + failure);

  std::vector<RejectionTable> tables(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const McTask& task = tasks[t];
    const std::size_t width = decisions[t].size();
    for (std::size_t mi = 0; mi < width; ++mi) {
      std::size_t count = 0;
      for (std::uint8_t v : decisions[t][mi]) count += v;
      RejectionTable::Row row;
      row.method = task.kind == McTask::Coverage ? "band-" + to_string(task.lambda)
                                                 : to_string(task.methods[mi]);
      row.param = task.label;
      row.reps = cfg.reps;
      row.frequency = static_cast<double>(count) / static_cast<double>(cfg.reps);
      row.binomial_se = std::sqrt(row.frequency * (1.0 - row.frequency) /
                                  static_cast<double>(cfg.reps));
      tables[t].rows.push_back(std::move(row));
    }
  }
  return tables;
}

namespace {

std::string describe(const McConfig& cfg, const McHypothesis* hyp) {
  char buf[64];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "%g", cfg.rho);
  out << "n=" << cfg.n_clusters << ";rho=" << buf;
  if (hyp != nullptr) {
    out << ";H0:b" << hyp->coef << "(";
    if (hyp->uniform) {
      out << ".";
    } else {
      std::snprintf(buf, sizeof(buf), "%g", hyp->tau0);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%g", hyp->value);
    out << ")=" << buf;
  }
  return out.str();
}

}  // namespace

RejectionTable run_size_power(const McConfig& cfg, const McHypothesis& hypothesis,
                              const std::vector<McMethod>& methods) {
  if (methods.empty()) throw InputError("run_size_power: no methods");
  McTask task;
  task.kind = McTask::SizePower;
  task.hypothesis = hypothesis;
  task.methods = methods;
  task.label = describe(cfg, &hypothesis);
  return run_batch(cfg, {task})[0];
}

RejectionTable run_coverage(const McConfig& cfg, const std::vector<Index>& delta,
                            LambdaKind lambda) {
  McTask task;
  task.kind = McTask::Coverage;
  task.delta = delta;
  task.lambda = lambda;
  task.label = describe(cfg, nullptr);
  return run_batch(cfg, {task})[0];
}

}  // namespace cqr::mc
