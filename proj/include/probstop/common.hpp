#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace probstop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown when an iterative kernel cannot continue (solver breakdown,
/// step-size underflow, loss of convergence in a special function).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace probstop
