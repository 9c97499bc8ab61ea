#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "cqr/dataset.hpp"
#include "oracles.hpp"

using namespace cqr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = "/tmp/cqr_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_csv groups rows by cluster and adds the intercept") {
  const auto path = write_temp("basic.csv",
                               "cluster,y,x\n"
                               "a,1.0,0.5\n"
                               "a,2.0,1.5\n"
                               "b,3.0,2.5\n");
  LoadOptions opt;
  const auto data = ClusteredDataset::load_csv(path, opt);
  CHECK(data.n_clusters() == 2);
  CHECK(data.n_obs() == 3);
  CHECK(data.dim() == 2);
  CHECK(data.cluster_size(0) == 2);
  CHECK(data.cluster_size(1) == 1);
  CHECK(data.design()(0, 0) == 1.0);
  CHECK(data.design()(2, 1) == 2.5);
  CHECK(data.cluster_ids()[0] == "a");
}

TEST_CASE("load_csv interleaved clusters keep file order within cluster") {
  const auto path = write_temp("interleaved.csv",
                               "cluster,y,x\n"
                               "a,1,0.1\n"
                               "b,2,0.2\n"
                               "a,3,0.3\n");
  const auto data = ClusteredDataset::load_csv(path, LoadOptions{});
  CHECK(data.cluster_size(0) == 2);
  CHECK(data.response()(0) == 1.0);
  CHECK(data.response()(1) == 3.0);  // second 'a' row
  CHECK(data.response()(2) == 2.0);
}

TEST_CASE("load_csv error paths") {
  LoadOptions opt;
  SUBCASE("missing column") {
    const auto path = write_temp("missing.csv", "cluster,resp,x\na,1,2\n");
    CHECK_THROWS_AS(ClusteredDataset::load_csv(path, opt), MissingColumn);
  }
  SUBCASE("non-numeric response") {
    const auto path = write_temp("nonnum.csv", "cluster,y,x\na,oops,2\n");
    CHECK_THROWS_AS(ClusteredDataset::load_csv(path, opt), NonNumericCell);
  }
  SUBCASE("empty file") {
    const auto path = write_temp("empty.csv", "cluster,y,x\n");
    CHECK_THROWS_AS(ClusteredDataset::load_csv(path, opt), EmptyDataset);
  }
  SUBCASE("duplicate covariate columns are rank deficient") {
    const auto path = write_temp("dup.csv",
                                 "cluster,y,x1,x2\n"
                                 "a,1,2,2\na,2,3,3\nb,3,4,4\n");
    CHECK_THROWS_AS(ClusteredDataset::load_csv(path, opt), RankDeficientDesign);
  }
  SUBCASE("infinite cell rejected") {
    const auto path = write_temp("inf.csv", "cluster,y,x\na,inf,2\na,1,3\n");
    CHECK_THROWS_AS(ClusteredDataset::load_csv(path, opt), NonNumericCell);
  }
}

TEST_CASE("csv round trip preserves structure and values") {
  rng::Stream s = rng::Stream::keyed(11, 0);
  auto inst = oracle::random_instance(s, 23, 3, 7);
  const auto data = oracle::to_dataset(inst);
  const std::string path = "/tmp/cqr_test_roundtrip.csv";
  data.write_csv(path);

  LoadOptions opt;
  opt.add_intercept = false;  // written file already carries the intercept column
  const auto again = ClusteredDataset::load_csv(path, opt);
  CHECK(again.n_clusters() == data.n_clusters());
  CHECK(again.n_obs() == data.n_obs());
  CHECK(again.dim() == data.dim());
  for (Index i = 0; i < data.n_clusters(); ++i)
    CHECK(again.cluster_size(i) == data.cluster_size(i));
  CHECK((again.design() - data.design()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((again.response() - data.response()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("intraclass correlation") {
  auto make = [](std::vector<double> y, std::vector<Index> sizes) {
    const Index n = static_cast<Index>(y.size());
    MatrixXd X = MatrixXd::Ones(n, 1);
    VectorXd yv(n);
    for (Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
    return ClusteredDataset(X, yv, sizes);
  };

  SUBCASE("internally constant clusters give 1") {
    const auto data = make({1, 1, 5, 5, 9, 9}, {2, 2, 2});
    CHECK(intraclass_correlation(data) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("all singleton clusters give 0") {
    const auto data = make({1, 2, 3, 4}, {1, 1, 1, 1});
    CHECK(intraclass_correlation(data) == 0.0);
  }
  SUBCASE("two clusters of two, hand-expanded") {
    // y = {1,2 | 3,4}, grand mean 2.5, deviations {-1.5,-0.5,0.5,1.5}
    // numerator: 2*(-1.5*-0.5)/1 + 2*(0.5*1.5)/1 = 3.0
    // denominator: 2.25+0.25+0.25+2.25 = 5.0
    const auto data = make({1, 2, 3, 4}, {2, 2});
    CHECK(intraclass_correlation(data) == doctest::Approx(0.6).epsilon(1e-12));
  }
  SUBCASE("affine invariance") {
    const auto base = make({1, 2, 3, 4, 7, 2}, {2, 2, 2});
    std::vector<double> scaled;
    for (double v : {1, 2, 3, 4, 7, 2}) scaled.push_back(-3.0 * v + 11.0);
    const auto other = make(scaled, {2, 2, 2});
    CHECK(intraclass_correlation(base) ==
          doctest::Approx(intraclass_correlation(other)).epsilon(1e-12));
  }
  SUBCASE("constant variable is degenerate") {
    const auto data = make({2, 2, 2, 2}, {2, 2});
    CHECK_THROWS_AS(intraclass_correlation(data), DegenerateVariance);
  }
  SUBCASE("never exceeds 1") {
    rng::Stream s = rng::Stream::keyed(5, 9);
    for (int trial = 0; trial < 20; ++trial) {
      auto inst = oracle::random_instance(s, 30, 2, 6);
      const auto data = oracle::to_dataset(inst);
      CHECK(intraclass_correlation(data) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("icc is bit-identical under cluster permutation") {
  rng::Stream s = rng::Stream::keyed(6, 2);
  auto inst = oracle::random_instance(s, 40, 2, 8);
  const auto data = oracle::to_dataset(inst);
  std::vector<Index> perm = {7, 3, 0, 5, 2, 6, 1, 4};
  const auto shuffled = oracle::permute_clusters(data, perm);
  CHECK(intraclass_correlation(data) == intraclass_correlation(shuffled));
}
