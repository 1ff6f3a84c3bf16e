#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtree {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or violated operation preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Structural condition (C0/C1/C1*/C2) failures.
class ConditionError : public Error {
 public:
  using Error::Error;
};

class DirichletProximityError : public Error {
 public:
  DirichletProximityError(const std::string& what, double lambda)
      : Error(what), lambda_(lambda) {}
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

class HerglotzViolation : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gap,
                   std::vector<std::complex<double>> last = {})
      : Error(what), gap_(gap), last_(std::move(last)) {}
  double gap() const { return gap_; }
  const std::vector<std::complex<double>>& last_iterate() const { return last_; }

 private:
  double gap_;
  std::vector<std::complex<double>> last_;
};

class IntegratorError : public Error {
 public:
  IntegratorError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace qtree
