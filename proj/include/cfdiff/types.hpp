#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cfdiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when an input is well-typed but geometrically unusable
/// (zero feature vectors, collinear cone inputs, constant attribute deltas).
class DegenerateInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a generation run produces a non-finite state.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

inline void require_dim(const Vec& v, Eigen::Index n, const char* name) {
    if (v.size() != n) {
        throw std::invalid_argument(std::string(name) + ": expected dimension " + std::to_string(n) +
                                    ", got " + std::to_string(v.size()));
    }
}

}  // namespace detail
}  // namespace cfdiff
