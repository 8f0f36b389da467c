#pragma once

#include <stdexcept>
#include <string>

namespace meanrisk {

// Numerical failure (non-PD model, singular factor-covariance block, ...).
// Messages carry a rough condition estimate where one is cheap to obtain.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A closed-form solution exists but is degenerate for the given inputs
// (e.g. expected returns orthogonal to the budget direction, zero variance).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No admissible solution (e.g. the long-only active set shrank to nothing,
// or no positive-ratio root exists).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative scheme exceeded its iteration cap without stabilizing.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A backtest strategy asked for data at or after the trading date.
class LookaheadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace meanrisk
