#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace vnt {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Error taxonomy. Every throw site picks the narrowest fitting type so callers
// (and the CLI) can map failures to distinct diagnostics.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Missing or unreadable files.
struct io_error : error {
  using error::error;
};
// Dataset contents inconsistent with each other (row counts, ranges, splits).
struct integrity_error : error {
  using error::error;
};
// Bad parameters or violated preconditions.
struct config_error : error {
  using error::error;
};
// A sampling request that cannot be satisfied by the data.
struct infeasible_error : config_error {
  using config_error::config_error;
};
// Tensor dimensions that do not line up.
struct shape_error : error {
  using error::error;
};
// Violations of frozen/trained-state contracts.
struct contract_error : error {
  using error::error;
};
// Non-finite values where finite ones are required.
struct numerical_error : error {
  using error::error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw config_error(msg);
}

}  // namespace vnt
