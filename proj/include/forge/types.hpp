#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>

namespace forge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

/// Invalid user-supplied configuration. Mapped to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A decision problem that cannot be solved (e.g. uncoverable demand).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace forge
