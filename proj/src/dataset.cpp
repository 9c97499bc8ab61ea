#include "cqr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cqr/math.hpp"

namespace cqr {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) return false;
  return std::isfinite(out);
}

void check_rank(const MatrixXd& X) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    throw RankDeficientDesign("rank " + std::to_string(qr.rank()) + " < " +
                              std::to_string(X.cols()) + " columns");
  }
}

}  // namespace

ClusteredDataset::ClusteredDataset(MatrixXd design, VectorXd response,
                                   std::vector<Index> cluster_sizes,
                                   std::vector<std::string> cluster_ids,
                                   std::vector<std::string> column_names)
    : X_(std::move(design)), y_(std::move(response)), ids_(std::move(cluster_ids)),
      names_(std::move(column_names)) {
  if (y_.size() == 0 || cluster_sizes.empty()) throw EmptyDataset();
  if (X_.rows() != y_.size())
    throw DimensionMismatch("design has " + std::to_string(X_.rows()) + " rows, response " +
                            std::to_string(y_.size()));
  offsets_.resize(cluster_sizes.size() + 1);
  offsets_[0] = 0;
  for (std::size_t i = 0; i < cluster_sizes.size(); ++i) {
    if (cluster_sizes[i] < 1) throw InputError("cluster sizes must be >= 1");
    offsets_[i + 1] = offsets_[i] + cluster_sizes[i];
  }
  if (offsets_.back() != y_.size())
    throw DimensionMismatch("cluster sizes sum to " + std::to_string(offsets_.back()) +
                            ", response has " + std::to_string(y_.size()));
  if (!X_.allFinite() || !y_.allFinite()) throw InputError("non-finite value in dataset");
  if (ids_.empty()) {
    ids_.reserve(cluster_sizes.size());
    for (std::size_t i = 0; i < cluster_sizes.size(); ++i) ids_.push_back(std::to_string(i));
  }
  if (ids_.size() != cluster_sizes.size())
    throw DimensionMismatch("cluster id count does not match cluster count");
  if (names_.empty()) {
    for (Index j = 0; j < X_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Index>(names_.size()) != X_.cols())
    throw DimensionMismatch("column name count does not match design columns");
  check_rank(X_);
}

Index ClusteredDataset::max_cluster_size() const {
  Index m = 0;
  for (Index i = 0; i < n_clusters(); ++i) m = std::max(m, cluster_size(i));
  return m;
}

ClusteredDataset ClusteredDataset::load_csv(const std::string& path,
                                            const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw EmptyDataset();

  std::vector<std::string> header;
  std::size_t first_data = 0;
  if (options.has_header) {
    header = split_csv_line(lines[0]);
    for (auto& h : header) h = trim(h);
    first_data = 1;
  } else {
    const std::size_t ncol = split_csv_line(lines[0]).size();
    for (std::size_t j = 0; j < ncol; ++j) header.push_back(std::to_string(j));
  }

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn(name);
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t cluster_col = column_index(options.cluster_column);
  const std::size_t response_col = column_index(options.response_column);
  std::vector<std::size_t> covar_cols;
  std::vector<std::string> covar_names;
  if (options.covariate_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j != cluster_col && j != response_col) {
        covar_cols.push_back(j);
        covar_names.push_back(header[j]);
      }
    }
  } else {
    for (const auto& name : options.covariate_columns) {
      covar_cols.push_back(column_index(name));
      covar_names.push_back(name);
    }
  }
  if (first_data >= lines.size()) throw EmptyDataset();

  struct Row {
    std::string cluster;
    double y;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  rows.reserve(lines.size() - first_data);
  for (std::size_t li = first_data; li < lines.size(); ++li) {
    auto fields = split_csv_line(lines[li]);
    if (fields.size() < header.size())
      throw InputError("line " + std::to_string(li + 1) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    Row row;
    row.cluster = trim(fields[cluster_col]);
    if (!parse_double(fields[response_col], row.y))
      throw NonNumericCell(li + 1, header[response_col], trim(fields[response_col]));
    row.x.reserve(covar_cols.size());
    for (std::size_t k = 0; k < covar_cols.size(); ++k) {
      double v;
      if (!parse_double(fields[covar_cols[k]], v))
        throw NonNumericCell(li + 1, covar_names[k], trim(fields[covar_cols[k]]));
      row.x.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  // Group by cluster label, clusters ordered by first appearance, rows kept
  // in file order within each cluster.
  std::vector<std::string> cluster_order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto [it, inserted] = groups.try_emplace(rows[r].cluster);
    if (inserted) cluster_order.push_back(rows[r].cluster);
    it->second.push_back(r);
  }

  const Index n_obs = static_cast<Index>(rows.size());
  const Index d_cov = static_cast<Index>(covar_cols.size());
  const Index d = d_cov + (options.add_intercept ? 1 : 0);
  if (d == 0) throw InputError("no covariate columns selected");

  MatrixXd X(n_obs, d);
  VectorXd y(n_obs);
  std::vector<Index> sizes;
  std::vector<std::string> ids;
  Index at = 0;
  for (const auto& label : cluster_order) {
    const auto& idx = groups[label];
    sizes.push_back(static_cast<Index>(idx.size()));
    ids.push_back(label);
    for (std::size_t r : idx) {
      y(at) = rows[r].y;
      Index j = 0;
      if (options.add_intercept) X(at, j++) = 1.0;
      for (double v : rows[r].x) X(at, j++) = v;
      ++at;
    }
  }

  std::vector<std::string> names;
  if (options.add_intercept) names.push_back("intercept");
  names.insert(names.end(), covar_names.begin(), covar_names.end());

  return ClusteredDataset(std::move(X), std::move(y), std::move(sizes), std::move(ids),
                          std::move(names));
}

void ClusteredDataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open file for writing: " + path);
  out << "cluster,y";
  for (const auto& n : names_) out << ',' << n;
  out << '\n';
  char buf[64];
  for (Index i = 0; i < n_clusters(); ++i) {
    for (Index k = cluster_begin(i); k < cluster_begin(i) + cluster_size(i); ++k) {
      out << ids_[static_cast<std::size_t>(i)];
      std::snprintf(buf, sizeof(buf), "%.17g", y_(k));
      out << ',' << buf;
      for (Index j = 0; j < dim(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", X_(k, j));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

double intraclass_correlation(const ClusteredDataset& data, IccVariable variable) {
  const Index n = data.n_clusters();
  auto value = [&](Index row) -> double {
    if (variable.kind == IccVariable::Response) return data.response()(row);
    if (variable.column < 0 || variable.column >= data.dim())
      throw DimensionMismatch("icc: covariate column out of range");
    return data.design()(row, variable.column);
  };

  ExactSum total;
  for (Index r = 0; r < data.n_obs(); ++r) total.add(value(r));
  const double mean = total.value() / static_cast<double>(data.n_obs());

  // numerator: sum_i sum_{k != l} dev_k dev_l / (c_i - 1), via S_i^2 - Q_i
  ExactSum num, den;
  for (Index i = 0; i < n; ++i) {
    const Index b = data.cluster_begin(i);
    const Index c = data.cluster_size(i);
    ExactSum s_i, q_i;
    for (Index k = b; k < b + c; ++k) {
      const double dev = value(k) - mean;
      s_i.add(dev);
      q_i.add(dev * dev);
    }
    const double s = s_i.value();
    const double q = q_i.value();
    den.add(q);
    if (c >= 2) num.add((s * s - q) / static_cast<double>(c - 1));
  }
  const double denominator = den.value();
  if (denominator == 0.0) throw DegenerateVariance();
  return num.value() / denominator;
}

}  // namespace cqr
