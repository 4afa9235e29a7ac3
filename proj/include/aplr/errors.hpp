#pragma once

#include <stdexcept>
#include <string>

namespace aplr {

// Non-finite values showed up during time stepping.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long step, const std::string& what)
      : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

// The macroscopic linear solve did not reach its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(double residual, long iterations)
      : std::runtime_error("linear solve did not converge: relative residual " + std::to_string(residual) +
                           " after " + std::to_string(iterations) + " iterations"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

// Adaptive truncation wanted more columns than the configured cap.
class RankOverflowError : public std::runtime_error {
 public:
  RankOverflowError(long wanted, long cap)
      : std::runtime_error("truncated rank " + std::to_string(wanted) + " exceeds max rank " + std::to_string(cap) +
                           "; raise the max_rank setting"),
        wanted_(wanted),
        cap_(cap) {}
  long wanted() const noexcept { return wanted_; }
  long cap() const noexcept { return cap_; }

 private:
  long wanted_;
  long cap_;
};

}  // namespace aplr
