#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ndc {

// Bad input: malformed files, out-of-range arguments, violated preconditions.
// The CLI maps every ValidationError to exit status 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& message, long row)
      : ValidationError(row > 0 ? "row " + std::to_string(row) + ": " + message : message),
        row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

// Anchor data that admits no positive exact-matching schedule.
class InfeasibleError : public ValidationError {
 public:
  InfeasibleError(const std::string& message, int step, std::string side)
      : ValidationError(message), step_(step), side_(std::move(side)) {}
  int step() const noexcept { return step_; }
  const std::string& side() const noexcept { return side_; }

 private:
  int step_;
  std::string side_;
};

// Iterative estimation that stopped without meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& message, std::vector<double> last_iterate,
                   double gradient_norm, int iterations)
      : std::runtime_error(message),
        last_iterate_(std::move(last_iterate)),
        gradient_norm_(gradient_norm),
        iterations_(iterations) {}
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
  double gradient_norm() const noexcept { return gradient_norm_; }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> last_iterate_;
  double gradient_norm_;
  int iterations_;
};

}  // namespace ndc
