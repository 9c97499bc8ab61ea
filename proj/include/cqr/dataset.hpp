#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cqr/errors.hpp"

namespace cqr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LoadOptions {
  bool has_header = true;
  // Column references: names when has_header, otherwise 0-based indices as
  // decimal strings.
  std::string cluster_column = "cluster";
  std::string response_column = "y";
  std::vector<std::string> covariate_columns;  // empty = all remaining columns
  bool add_intercept = true;
};

// Immutable clustered regression data. Rows of the stacked design are grouped
// by cluster; within-cluster order is preserved from the input but no
// estimator depends on it.
class ClusteredDataset {
 public:
  ClusteredDataset(MatrixXd design, VectorXd response, std::vector<Index> cluster_sizes,
                   std::vector<std::string> cluster_ids = {},
                   std::vector<std::string> column_names = {});

  static ClusteredDataset load_csv(const std::string& path, const LoadOptions& options);

  // Round-trip writer: cluster label, response, then all design columns with
  // 17 significant digits.
  void write_csv(const std::string& path) const;

  Index n_clusters() const { return static_cast<Index>(offsets_.size()) - 1; }
  Index n_obs() const { return y_.size(); }
  Index dim() const { return X_.cols(); }

  Index cluster_begin(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }
  Index cluster_size(Index i) const {
    return offsets_[static_cast<std::size_t>(i) + 1] - offsets_[static_cast<std::size_t>(i)];
  }
  Index max_cluster_size() const;

  const MatrixXd& design() const { return X_; }
  const VectorXd& response() const { return y_; }
  const std::vector<std::string>& cluster_ids() const { return ids_; }
  const std::vector<std::string>& column_names() const { return names_; }

 private:
  MatrixXd X_;
  VectorXd y_;
  std::vector<Index> offsets_;  // n+1 row offsets
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
};

struct IccVariable {
  enum Kind { Response, Covariate } kind = Response;
  Index column = 0;

  static IccVariable response() { return {Response, 0}; }
  static IccVariable covariate(Index j) { return {Covariate, j}; }
};

// Moment-based intraclass correlation of one variable. Clusters of size one
// contribute nothing to the numerator and normally to the denominator.
double intraclass_correlation(const ClusteredDataset& data,
                              IccVariable variable = IccVariable::response());

}  // namespace cqr
