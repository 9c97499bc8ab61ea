#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace cqr {

inline double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865476); }

// Inverse standard normal CDF. Acklam's rational approximation followed by one
// Halley step, so the result is accurate to a few ulp over (0,1).
double norm_quantile(double p);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

double chi2_cdf(double x, double df);
double chi2_quantile(double p, double df);

// Exact (correctly rounded) summation of doubles via Shewchuk partials, like
// Python's math.fsum. The result does not depend on the order of add() calls,
// which keeps cluster-exchangeable estimators bit-identical under permutation.
class ExactSum {
 public:
  void add(double x);
  double value() const;
  void reset() { partials_.clear(); }

 private:
  std::vector<double> partials_;
};

}  // namespace cqr
