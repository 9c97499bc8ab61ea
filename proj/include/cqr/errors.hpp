#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cqr {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input/validation problems (CLI exit code 2).
struct InputError : Error {
  using Error::Error;
};

struct MissingColumn : InputError {
  explicit MissingColumn(const std::string& column)
      : InputError("missing column: " + column) {}
};

struct NonNumericCell : InputError {
  NonNumericCell(std::size_t line, const std::string& column, const std::string& cell)
      : InputError("non-numeric cell at line " + std::to_string(line) + ", column " +
                   column + ": '" + cell + "'"),
        line(line),
        column(column) {}
  std::size_t line;
  std::string column;
};

struct EmptyDataset : InputError {
  EmptyDataset() : InputError("dataset contains no observations") {}
};

struct RankDeficientDesign : InputError {
  explicit RankDeficientDesign(const std::string& detail)
      : InputError("rank-deficient design matrix: " + detail) {}
};

struct DimensionMismatch : InputError {
  explicit DimensionMismatch(const std::string& detail)
      : InputError("dimension mismatch: " + detail) {}
};

struct DegenerateVariance : InputError {
  DegenerateVariance() : InputError("variable has zero variance") {}
};

struct InsufficientDraws : InputError {
  explicit InsufficientDraws(std::size_t m)
      : InputError("need at least 2 bootstrap draws, got " + std::to_string(m)) {}
};

struct NegativeVariance : InputError {
  explicit NegativeVariance(double value)
      : InputError("negative variance entry: " + std::to_string(value)) {}
};

struct EmptyWindow : InputError {
  explicit EmptyWindow(double bandwidth)
      : InputError("no residual within kernel window of half-width " +
                   std::to_string(bandwidth)) {}
};

// Solver failures (CLI exit code 3).
struct SolverError : Error {
  using Error::Error;
};

struct SolverDidNotConverge : SolverError {
  explicit SolverDidNotConverge(int iterations, const std::string& context = "")
      : SolverError("solver did not converge after " + std::to_string(iterations) +
                    " iterations" + (context.empty() ? "" : " (" + context + ")")),
        iterations(iterations) {}
  int iterations;
};

struct PseudoObservationBinding : SolverError {
  PseudoObservationBinding(double y_star, double fitted)
      : SolverError("pseudo-observation residual not positive after retry: y*=" +
                    std::to_string(y_star) + " <= x*'b=" + std::to_string(fitted)) {}
};

// Singular weight matrices (CLI exit code 4).
struct NearSingularWeight : Error {
  explicit NearSingularWeight(double tau)
      : Error("near-singular weight matrix at tau=" + std::to_string(tau)), tau(tau) {}
  double tau;
};

struct SingularJacobian : Error {
  explicit SingularJacobian(double condition)
      : Error("Jacobian estimate numerically singular (condition number " +
              std::to_string(condition) + ")") {}
};

}  // namespace cqr
