#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace fisherlens {

enum class ErrorKind {
  DimensionMismatch,
  NotSymmetric,
  NotPositiveDefinite,
  ZeroMatrix,
  InvalidDof,
  DomainError,
  InvalidArgument,
  InfeasibleConstraint,
  MaxItersExceeded,
  NoRoot,
  DegenerateTarget,
  NotConverged,
  InvalidRadius,
  InvalidSigma,
  Parse,
};

/// Stable, machine-readable name used in CLI output ("infeasible-constraint", ...).
std::string_view error_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by iterative solvers that ran out of budget; carries the best iterate
/// so callers can still inspect or use it.
class ConvergenceError : public Error {
 public:
  ConvergenceError(ErrorKind kind, const std::string& what,
                   Eigen::VectorXd best_iterate, int iterations)
      : Error(kind, what),
        best_iterate_(std::move(best_iterate)),
        iterations_(iterations) {}

  const Eigen::VectorXd& best_iterate() const noexcept { return best_iterate_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::VectorXd best_iterate_;
  int iterations_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline void require_same_size(Eigen::Index a, Eigen::Index b,
                              const char* context) {
  if (a != b) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(context) + ": size " + std::to_string(a) +
                    " does not match " + std::to_string(b));
  }
}

}  // namespace fisherlens
